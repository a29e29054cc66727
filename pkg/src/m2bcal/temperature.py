"""Temperature scaling baseline."""
import math

import numpy as np
from scipy.special import log_softmax
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import check_labels, softmax_rows
from .exceptions import ClassCountMismatch, EmptyInput, InvalidHyperparameters, NonFinite

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def nll(logits, labels, T=1.0):
    """Mean negative log-likelihood of ``softmax(logits / T)``."""
    Z = np.asarray(logits, dtype=float) / T
    return float(-np.mean(log_softmax(Z, axis=1)[np.arange(Z.shape[0]), labels]))


def golden_section(f, lo, hi, tol):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; never evaluates outside the interval."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def apply_temperature(logits, T):
    """``softmax(logits / T)``."""
    if not T > 0:
        raise InvalidHyperparameters("temperature must be positive")
    Z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise NonFinite("logits must be finite")
    return softmax_rows(Z / T)


class TemperatureScaling(BaseEstimator):
    """Single-parameter rescaling of logits fitted by likelihood.

    The temperature is found by golden-section search on ``log T`` over
    ``[t_min, t_max]``. When the likelihood does not change by more than
    ``tol`` across the search interval, ``T = 1`` is returned. The result is
    never worse on the fit data than ``T = 1`` or either endpoint.

    Parameters
    ----------
    t_min, t_max : float, default=0.01, 100
    tol : float, default=1e-4
        Width of the final bracket in ``log T``, and flatness threshold.

    Attributes
    ----------
    T_ : float
    fit_nll_ : float
    n_classes_ : int
    """

    input_kind = "logits"

    def __init__(self, t_min=0.01, t_max=100.0, tol=1e-4):
        self.t_min = t_min
        self.t_max = t_max
        self.tol = tol

    def fit(self, logits, y):
        Z = np.asarray(logits, dtype=float)
        if Z.ndim != 2 or Z.shape[0] == 0:
            raise EmptyInput("need a non-empty n x L logit matrix")
        if not np.all(np.isfinite(Z)):
            raise NonFinite("logits must be finite")
        if not 0 < self.t_min <= 1 <= self.t_max:
            raise InvalidHyperparameters("search range must be positive and contain 1")
        y = check_labels(y, n_classes=Z.shape[1], n_samples=Z.shape[0])
        self.n_classes_ = Z.shape[1]

        def obj(log_t):
            return nll(Z, y, math.exp(log_t))

        lo, hi = math.log(self.t_min), math.log(self.t_max)
        candidates = {1.0: obj(0.0), self.t_min: obj(lo), self.t_max: obj(hi)}
        if max(candidates.values()) - min(candidates.values()) <= self.tol:
            mid = obj(0.5 * (lo + hi))
            if abs(mid - candidates[1.0]) <= self.tol:
                self.T_, self.fit_nll_ = 1.0, candidates[1.0]
                return self
        t_star = math.exp(golden_section(obj, lo, hi, self.tol))
        candidates[t_star] = nll(Z, y, t_star)
        # fall back to the best evaluated point if the search missed a non-unimodal minimum
        self.T_ = min(candidates, key=lambda t: (candidates[t], abs(math.log(t))))
        self.fit_nll_ = candidates[self.T_]
        return self

    def predict_proba(self, logits):
        check_is_fitted(self, "T_")
        Z = np.asarray(logits, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.n_classes_:
            raise ClassCountMismatch(f"fitted on {self.n_classes_} classes")
        return apply_temperature(Z, self.T_)

    def predict(self, logits):
        return np.argmax(self.predict_proba(logits), axis=1)

    def _state(self):
        return {"kind": "temperature", "T": self.T_, "fit_nll": self.fit_nll_,
                "n_classes": int(self.n_classes_)}

    def _load_state(self, state):
        self.T_ = float(state["T"])
        self.fit_nll_ = float(state["fit_nll"])
        self.n_classes_ = int(state["n_classes"])
        return self
