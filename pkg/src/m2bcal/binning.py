"""Binary calibrators: uniform-mass histogram binning and the identity map."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import BinsExceedPoints, EmptyInput, InvalidHyperparameters


def _check_binary_inputs(scores, y):
    s = np.asarray(scores, dtype=float).ravel()
    t = np.asarray(y, dtype=float).ravel()
    if s.size == 0:
        raise EmptyInput("no points to fit")
    if s.shape != t.shape:
        raise ValueError(f"{s.size} scores but {t.size} targets")
    return s, t


class HistogramBinning(BaseEstimator):
    """Uniform-mass histogram binning for a binary event.

    Scores are perturbed once by i.i.d. ``Uniform(0, delta)`` noise so that
    the order statistics are almost surely distinct. Bin edges are the
    perturbed order statistics of ranks ``round(j * m / B)`` and each bin
    predicts the mean target of the points it holds, so every bin holds
    ``floor(m / B)`` or ``ceil(m / B)`` points.

    Parameters
    ----------
    points_per_bin : int, default=50
        Target occupancy ``k``; the bin count is ``max(1, floor(m / k))``.
        Ignored when ``n_bins`` is given.
    n_bins : int or None, default=None
        Fixed bin count ``B``; must not exceed the number of fit points.
    delta : float, default=1e-10
        Magnitude of the tie-breaking perturbation.
    random_state : int, default=0
        Seed for the perturbation.

    Attributes
    ----------
    upper_edges_ : ndarray of shape (B - 1,)
    bin_values_ : ndarray of shape (B,)
    bin_counts_ : ndarray of shape (B,)
    n_bins_ : int
    """

    def __init__(self, points_per_bin=50, n_bins=None, delta=1e-10, random_state=0):
        self.points_per_bin = points_per_bin
        self.n_bins = n_bins
        self.delta = delta
        self.random_state = random_state

    def _resolve_bins(self, m):
        if self.n_bins is not None:
            B = int(self.n_bins)
            if B < 1:
                raise InvalidHyperparameters("n_bins must be >= 1")
            if B > m:
                raise BinsExceedPoints(f"{B} bins requested for {m} points")
            return B
        k = int(self.points_per_bin)
        if k < 2:
            raise InvalidHyperparameters("points_per_bin must be >= 2")
        return max(1, m // k)

    def fit(self, scores, y):
        s, t = _check_binary_inputs(scores, y)
        if not self.delta > 0:
            raise InvalidHyperparameters("delta must be > 0")
        m = s.size
        B = self._resolve_bins(m)
        rng = np.random.default_rng(self.random_state)
        z = s + rng.uniform(0.0, self.delta, size=m)
        order = np.argsort(z, kind="stable")
        # rank boundaries round(j*m/B), half rounded up, in exact integer arithmetic
        bounds = np.array([(2 * j * m + B) // (2 * B) for j in range(B + 1)])
        zs = z[order]
        ts = t[order]
        self.upper_edges_ = zs[bounds[1:-1] - 1]
        counts = np.diff(bounds)
        sums = np.add.reduceat(ts, bounds[:-1])
        self.bin_counts_ = counts
        self.bin_values_ = sums / counts
        self.n_bins_ = B
        return self

    def apply(self, scores):
        """Bin index per score; a score equal to an edge goes to the lower bin."""
        check_is_fitted(self, "bin_values_")
        s = np.asarray(scores, dtype=float)
        return np.searchsorted(self.upper_edges_, s, side="left")

    def predict(self, scores):
        return self.bin_values_[self.apply(scores)]

    # serialization helpers used by m2bcal.io
    def _state(self):
        return {
            "kind": "hb",
            "upper_edges": self.upper_edges_.tolist(),
            "bin_values": self.bin_values_.tolist(),
            "bin_counts": [int(c) for c in self.bin_counts_],
        }

    def _load_state(self, state):
        self.upper_edges_ = np.asarray(state["upper_edges"], dtype=float)
        self.bin_values_ = np.asarray(state["bin_values"], dtype=float)
        self.bin_counts_ = np.asarray(state["bin_counts"], dtype=np.int64)
        self.n_bins_ = len(self.bin_values_)
        return self


class IdentityCalibrator(BaseEstimator):
    """Null calibrator: ``predict`` returns its input unchanged."""

    def __init__(self, random_state=0):
        self.random_state = random_state

    def fit(self, scores=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, scores):
        return np.asarray(scores, dtype=float)

    def _state(self):
        return {"kind": "identity"}

    def _load_state(self, state):
        self.fitted_ = True
        return self
