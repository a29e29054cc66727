"""Binning schemes on the probability simplex for canonical calibration.

Three partitions are provided:

* Sierpinski binning descends while some coordinate is strictly above 1/2,
  rescaling the chosen corner back to the full simplex.
* Grid-style binning covers the simplex with axis-aligned cells of side
  ``1/K`` indexed by integer tuples; overlaps are resolved by taking the
  lexicographically smallest tuple.
* Projection histogram binning learns one threshold per direction so that
  every bin receives about ``(n+1)/B`` calibration points.

:class:`CanonicalBinning` fits the per-bin label distribution on top of any of
them and predicts it as a probability vector.
"""
import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import check_labels
from .exceptions import (
    ClassCountMismatch,
    EmptyInput,
    InvalidHyperparameters,
    NoBinFound,
    NonUnitDirection,
    NotOnSimplex,
    TooFewPoints,
)

SIMPLEX_TOL = 1e-6
SNAP_TOL = 1e-9
CATCH_ALL = -1
SENTINEL = 1.01


def check_simplex(points):
    """Return ``points`` as an (n, L) float array, raising if off the simplex."""
    S = np.asarray(points, dtype=float)
    if S.ndim == 1:
        S = S[None, :]
    if S.ndim != 2 or S.shape[1] < 2:
        raise NotOnSimplex("expected points with at least 2 coordinates")
    if not np.all(np.isfinite(S)) or np.any(S < -SIMPLEX_TOL):
        raise NotOnSimplex("coordinates must be finite and non-negative")
    if np.any(np.abs(S.sum(axis=1) - 1.0) > SIMPLEX_TOL):
        raise NotOnSimplex("coordinates must sum to 1")
    return np.clip(S, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Sierpinski binning


def sierpinski_bin_count(L, q):
    if L < 2 or q < 1:
        raise InvalidHyperparameters("need L >= 2 and q >= 1")
    return (L ** (q + 1) - 1) // (L - 1)


def sierpinski_bins(L, q):
    """Every bin path in a fixed order.

    A path is a tuple of 0-based corner choices. Paths shorter than ``q``
    end in :data:`CATCH_ALL`, meaning no coordinate exceeded 1/2 at that
    level; paths of length ``q`` without it are the deepest corners.
    """
    out = []
    for depth in range(q):
        for prefix in itertools.product(range(L), repeat=depth):
            out.append(prefix + (CATCH_ALL,))
    out.extend(itertools.product(range(L), repeat=q))
    return out


def _sierpinski_path(t, q):
    path = []
    for _ in range(q):
        above = np.flatnonzero(t > 0.5)
        if above.size == 0:
            path.append(CATCH_ALL)
            break
        l = int(above[0])  # at most one coordinate can exceed 1/2
        path.append(l)
        t = 2.0 * t
        t[l] -= 1.0
    return tuple(path)


def sierpinski_assign(s, L=None, q=2):
    """Bin path of a single simplex point (see :func:`sierpinski_bins`).

    Examples
    --------
    >>> sierpinski_assign([0.9, 0.05, 0.05], q=2)
    (0, 0)
    >>> sierpinski_assign([0.4, 0.3, 0.3], q=2)
    (-1,)
    """
    S = check_simplex(s)
    if S.shape[0] != 1:
        raise NotOnSimplex("sierpinski_assign takes a single point")
    if L is not None and S.shape[1] != L:
        raise ClassCountMismatch(f"point has {S.shape[1]} coordinates, expected {L}")
    if q < 1:
        raise InvalidHyperparameters("q must be >= 1")
    return _sierpinski_path(S[0].copy(), q)


def sierpinski_point(path, L):
    """A point whose Sierpinski path under depth ``q >= len(path)`` starts with ``path``.

    Inverts the rescaling, starting from the barycentre. Used to check that
    every enumerated bin is reachable.
    """
    t = np.full(L, 1.0 / L)
    for l in reversed([c for c in path if c != CATCH_ALL]):
        t = t / 2.0
        t[l] += 0.5
    return t


# ---------------------------------------------------------------------------
# grid-style binning


def _grid_sum_range(L, K):
    return max(L, K + 1), K + L - 1


def grid_index_set(L, K):
    """All index tuples of the grid scheme, in lexicographic order (1-based entries)."""
    if L < 2 or K < 1:
        raise InvalidHyperparameters("need L >= 2 and K >= 1")
    lo, hi = _grid_sum_range(L, K)
    return [k for k in itertools.product(range(1, K + 1), repeat=L) if lo <= sum(k) <= hi]


def grid_assign_many(S, K):
    """Grid bin tuple for each row of ``S``; returns an int array of shape (n, L)."""
    S = check_simplex(S)
    if K < 1:
        raise InvalidHyperparameters("K must be >= 1")
    n, L = S.shape
    x = S * K
    r = np.rint(x)
    x = np.where(np.abs(x - r) <= SNAP_TOL, r, x)
    lo = np.maximum(np.ceil(x), 1).astype(np.int64)
    hi = np.minimum(np.floor(x) + 1, K).astype(np.int64)
    smin, smax = _grid_sum_range(L, K)
    out = np.zeros((n, L), dtype=np.int64)
    todo = np.ones(n, dtype=bool)
    # masks in increasing order with coordinate 0 as the most significant bit
    # enumerate candidate tuples in lexicographic order, since lo <= hi
    for mask in range(2 ** L):
        if not todo.any():
            break
        pick = np.array([(mask >> (L - 1 - j)) & 1 for j in range(L)], dtype=bool)
        cand = np.where(pick, hi, lo)
        tot = cand.sum(axis=1)
        ok = todo & (tot >= smin) & (tot <= smax)
        out[ok] = cand[ok]
        todo &= ~ok
    if todo.any():
        raise NoBinFound(f"no grid bin for point {S[np.argmax(todo)].tolist()}")
    return out


def grid_assign(s, K):
    """Grid bin tuple of a single point.

    Examples
    --------
    >>> grid_assign([1.0, 0.0, 0.0], 4)
    (4, 1, 1)
    >>> grid_assign([1/3, 1/3, 1/3], 3)
    (1, 1, 2)
    """
    S = check_simplex(s)
    if S.shape[0] != 1:
        raise NotOnSimplex("grid_assign takes a single point")
    return tuple(int(v) for v in grid_assign_many(S, K)[0])


# ---------------------------------------------------------------------------
# projection histogram binning


def default_directions(L, B, policy="canonical_cycle", seed=0):
    """``B`` unit directions: ``-e_1, -e_2, ...`` cycled, or seeded random on the sphere."""
    if B < 1 or L < 2:
        raise InvalidHyperparameters("need B >= 1 and L >= 2")
    if policy == "canonical_cycle":
        Q = np.zeros((B, L))
        Q[np.arange(B), np.arange(B) % L] = -1.0
        return Q
    if policy == "seeded_random":
        Q = np.random.default_rng(seed).standard_normal((B, L))
        return Q / np.linalg.norm(Q, axis=1, keepdims=True)
    raise InvalidHyperparameters(f"unknown direction policy {policy!r}")


@dataclass(frozen=True)
class ProjectionScheme:
    """Fitted projection binning: learnt thresholds for the first ``B - 1`` directions."""

    directions: np.ndarray  # (B - 1, L)
    thresholds: np.ndarray  # (B - 1,)
    n_bins: int

    @property
    def all_thresholds(self):
        """Learnt thresholds followed by the residual bin's sentinel.

        The sentinel exceeds the projection of any simplex point onto any unit
        vector, so the last bin always matches.
        """
        return np.append(self.thresholds, SENTINEL)

    def projections(self, S):
        return np.asarray(S, dtype=float) @ self.directions.T

    def assign(self, S):
        """First ``b`` with projection strictly below ``T_b``; else the residual bin."""
        P = self.projections(S)
        below = P < self.thresholds[None, :]
        first = np.argmax(below, axis=1) if below.shape[1] else np.zeros(len(P), dtype=np.int64)
        hit = below.any(axis=1) if below.shape[1] else np.zeros(len(P), dtype=bool)
        return np.where(hit, first, self.n_bins - 1)

    def on_boundary(self, S):
        """Points lying exactly on a learnt threshold."""
        P = self.projections(S)
        return (P == self.thresholds[None, :]).any(axis=1)


def fit_projection_hb(S, n_bins, directions=None, seed=0):
    """Learn projection thresholds so that bins fill up in order.

    With ``c = floor((n + 1) / B)``, threshold ``T_b`` is the ``c``-th
    smallest projection onto ``q_b`` among points not yet captured, and every
    point at or below it is then removed. The last bin takes whatever is
    left.
    """
    S = check_simplex(S)
    n, L = S.shape
    B = int(n_bins)
    if B < 1:
        raise InvalidHyperparameters("n_bins must be >= 1")
    if (n + 1) // B < 1:
        # the quota c = floor((n + 1) / B) must be at least one point
        raise TooFewPoints(f"{n} points for {B} bins")
    Q = default_directions(L, B, seed=seed) if directions is None else np.asarray(directions, dtype=float)
    if Q.ndim != 2 or Q.shape[1] != L:
        raise ClassCountMismatch(f"directions must have {L} columns")
    if Q.shape[0] < B - 1:
        raise InvalidHyperparameters(f"need at least {B - 1} directions, got {Q.shape[0]}")
    if Q.shape[0] > B:
        warnings.warn(f"{Q.shape[0] - B} direction(s) beyond the bin count are ignored")
    Q = Q[: B - 1]
    if Q.size and np.any(np.abs(np.linalg.norm(Q, axis=1) - 1.0) > 1e-9):
        raise NonUnitDirection("every direction must have unit Euclidean norm")
    c = (n + 1) // B
    remaining = np.arange(n)
    thresholds = np.empty(B - 1)
    for b in range(B - 1):
        proj = S[remaining] @ Q[b]
        if proj.size == 0:
            warnings.warn(f"no points left for bin {b + 1}; it will stay empty")
            thresholds[b] = -np.inf
            continue
        thresholds[b] = np.sort(proj)[min(c, proj.size) - 1]
        remaining = remaining[proj > thresholds[b]]
    return ProjectionScheme(Q, thresholds, B)


# ---------------------------------------------------------------------------
# canonical calibrator


class CanonicalBinning(BaseEstimator):
    """Predict the empirical label distribution of the simplex bin a score falls in.

    Parameters
    ----------
    scheme : {'sierpinski', 'grid', 'projection'}, default='projection'
    depth : int, default=2
        Recursion depth for Sierpinski binning.
    grid_size : int, default=4
        ``K`` for grid binning (cells of side ``1/K``).
    n_bins : int, default=10
        Bin count for projection binning.
    directions : {'canonical_cycle', 'seeded_random'} or array, default='canonical_cycle'
        Projection directions.
    random_state : int, default=0
        Seed for random directions.

    Attributes
    ----------
    pi_hat_ : ndarray of shape (n_bins_, n_classes_)
        Row ``b`` is the label distribution observed in bin ``b``; bins with no
        calibration points get the uniform distribution.
    bin_counts_ : ndarray of shape (n_bins_,)
    scheme_ : ProjectionScheme or None
    """

    def __init__(self, scheme="projection", depth=2, grid_size=4, n_bins=10,
                 directions="canonical_cycle", random_state=0):
        self.scheme = scheme
        self.depth = depth
        self.grid_size = grid_size
        self.n_bins = n_bins
        self.directions = directions
        self.random_state = random_state

    def _bin_keys(self, L):
        if self.scheme == "sierpinski":
            return sierpinski_bins(L, self.depth)
        if self.scheme == "grid":
            if self.grid_size ** L > 10 ** 7:
                raise InvalidHyperparameters("grid index set too large to enumerate")
            return grid_index_set(L, self.grid_size)
        return list(range(self.n_bins))

    def apply(self, X):
        """Dense bin index per row."""
        check_is_fitted(self, "pi_hat_")
        S = check_simplex(X)
        if S.shape[1] != self.n_classes_:
            raise ClassCountMismatch(f"fitted on {self.n_classes_} classes, got {S.shape[1]}")
        if self.scheme == "projection":
            return self.scheme_.assign(S)
        if self.scheme == "sierpinski":
            keys = [_sierpinski_path(row.copy(), self.depth) for row in S]
        else:
            keys = [tuple(int(v) for v in row) for row in grid_assign_many(S, self.grid_size)]
        return np.array([self._index[k] for k in keys], dtype=np.int64)

    def fit(self, X, y):
        S = check_simplex(X)
        if S.shape[0] == 0:
            raise EmptyInput("no calibration points")
        L = S.shape[1]
        y = check_labels(y, n_classes=L, n_samples=S.shape[0])
        if self.scheme not in ("sierpinski", "grid", "projection"):
            raise InvalidHyperparameters(f"unknown scheme {self.scheme!r}")
        self.n_classes_ = L
        self.scheme_ = None
        keep = np.ones(S.shape[0], dtype=bool)
        if self.scheme == "projection":
            Q = self.directions
            if isinstance(Q, str):
                Q = default_directions(L, self.n_bins, Q, seed=self.random_state)
            self.scheme_ = fit_projection_hb(S, self.n_bins, Q, seed=self.random_state)
            keep = ~self.scheme_.on_boundary(S)
        self.bin_keys_ = self._bin_keys(L)
        self._index = {k: i for i, k in enumerate(self.bin_keys_)}
        self.n_bins_ = len(self.bin_keys_)
        self.pi_hat_ = np.zeros((self.n_bins_, L))  # placeholder so apply() is usable
        ids = self.apply(S)[keep]
        counts = np.zeros((self.n_bins_, L))
        np.add.at(counts, (ids, y[keep]), 1.0)
        self.bin_counts_ = counts.sum(axis=1).astype(np.int64)
        pi = np.full((self.n_bins_, L), 1.0 / L)
        nz = self.bin_counts_ > 0
        pi[nz] = counts[nz] / self.bin_counts_[nz, None]
        self.pi_hat_ = pi
        return self

    def predict_proba(self, X):
        return self.pi_hat_[self.apply(X)]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def _state(self):
        state = {
            "kind": "canonical",
            "scheme": self.scheme,
            "depth": int(self.depth),
            "grid_size": int(self.grid_size),
            "n_bins": int(self.n_bins),
            "n_classes": int(self.n_classes_),
            "pi_hat": self.pi_hat_.tolist(),
            "bin_counts": [int(c) for c in self.bin_counts_],
        }
        if self.scheme_ is not None:
            state["directions"] = self.scheme_.directions.tolist()
            state["thresholds"] = [None if math.isinf(t) else float(t) for t in self.scheme_.thresholds]
        return state

    def _load_state(self, state):
        self.n_classes_ = state["n_classes"]
        self.scheme_ = None
        if self.scheme == "projection":
            Q = np.asarray(state["directions"], dtype=float).reshape(-1, self.n_classes_)
            T = np.array([-np.inf if t is None else t for t in state["thresholds"]], dtype=float)
            self.scheme_ = ProjectionScheme(Q, T, self.n_bins)
        self.bin_keys_ = self._bin_keys(self.n_classes_)
        self._index = {k: i for i, k in enumerate(self.bin_keys_)}
        self.n_bins_ = len(self.bin_keys_)
        self.pi_hat_ = np.asarray(state["pi_hat"], dtype=float)
        self.bin_counts_ = np.asarray(state["bin_counts"], dtype=np.int64)
        return self
