"""Multiclass-to-binary (M2B) calibrators.

Each wrapper reduces a multiclass recalibration problem to one or more binary
problems and delegates each of them to a clone of ``calibrator`` (any
estimator with ``fit(scores, targets)`` / ``predict(scores)``). The reduction
decides which rows, which score column and which 0/1 targets each binary
problem sees:

================  ==============================  ===============================
notion            rows for binary problem         score, target
================  ==============================  ===============================
top-label         ``c(x) = l`` (one per class)    ``max g``, ``1{y = l}``
class-wise        all rows (one per class)        ``g_l``, ``1{y = l}``
confidence        all rows (single problem)       ``max g``, ``1{y = c(x)}``
top-K-label       ``c^(k)(x) = l`` per (k, l)     ``g^(k)``, ``1{y = l}``
top-K-confidence  all rows, one per rank k        ``g^(k)``, ``1{y = c^(k)(x)}``
================  ==============================  ===============================
"""
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .binning import HistogramBinning, IdentityCalibrator
from .core import (
    TopKDecomposition,
    TopLabelDecomposition,
    check_labels,
    derive_seed,
    top_k,
    top_label,
    validate_and_normalize,
)
from .exceptions import (
    ClassCountMismatch,
    EmptyInput,
    InvalidHyperparameters,
    KOutOfRange,
    SparseClassWarning,
)

POOLED = -1  # class slot used for seeds of pooled (class-agnostic) problems


def _fit_binary(template, scores, targets, seed, *, points_per_bin=None, where=""):
    """Fit one clone of ``template``; empty problems get the identity map."""
    if scores.size == 0:
        warnings.warn(f"no calibration rows for {where}; using identity", SparseClassWarning)
        return IdentityCalibrator(random_state=seed).fit()
    est = clone(template)
    params = est.get_params()
    if "random_state" in params:
        est.set_params(random_state=seed)
    if points_per_bin is not None and "points_per_bin" in params:
        est.set_params(points_per_bin=points_per_bin)
    if isinstance(est, HistogramBinning) and est.n_bins is not None and est.n_bins > scores.size:
        warnings.warn(
            f"{where}: {est.n_bins} bins requested but only {scores.size} rows; "
            f"using {scores.size} bins",
            SparseClassWarning,
        )
        est.set_params(n_bins=scores.size)
    return est.fit(scores, targets)


class _M2BBase(BaseEstimator):
    def _validate_fit(self, X, y):
        P = validate_and_normalize(X)
        if P.shape[0] == 0:
            raise EmptyInput("calibration set is empty")
        y = check_labels(y, n_classes=P.shape[1], n_samples=P.shape[0])
        self.n_classes_ = P.shape[1]
        return P, y

    def _validate_predict(self, X):
        check_is_fitted(self, "n_classes_")
        P = validate_and_normalize(X)
        if P.shape[1] != self.n_classes_:
            raise ClassCountMismatch(
                f"model fitted on {self.n_classes_} classes, input has {P.shape[1]}"
            )
        return P

    def _template(self):
        return HistogramBinning() if self.calibrator is None else self.calibrator


class TopLabelCalibrator(_M2BBase):
    """Top-label calibrator: one binary calibrator per predicted class.

    The predicted class is the base model's argmax and never changes, so
    accuracy is preserved exactly. With histogram binning inside, a class
    predicted ``n_l`` times gets ``floor(n_l / k)`` bins.

    Parameters
    ----------
    calibrator : estimator, default=None
        Binary calibrator template; ``None`` means ``HistogramBinning()``.
    random_state : int, default=0
        Master seed; class ``l`` uses ``derive_seed(random_state, l, 0)``.

    Attributes
    ----------
    calibrators_ : list of fitted binary calibrators, one per class
    fallback_classes_ : list of int
        Classes never predicted on the calibration set (identity map used).
    """

    def __init__(self, calibrator=None, random_state=0):
        self.calibrator = calibrator
        self.random_state = random_state

    def fit(self, X, y):
        P, y = self._validate_fit(X, y)
        c, g = top_label(P)
        template = self._template()
        self.calibrators_ = []
        self.fallback_classes_ = []
        for l in range(self.n_classes_):
            rows = c == l
            est = _fit_binary(
                template, g[rows], (y[rows] == l).astype(float),
                derive_seed(self.random_state, l, 0), where=f"class {l}",
            )
            if not rows.any():
                self.fallback_classes_.append(l)
            self.calibrators_.append(est)
        return self

    def predict_top_label(self, X):
        P = self._validate_predict(X)
        c, g = top_label(P)
        h = np.empty_like(g)
        for l, est in enumerate(self.calibrators_):
            rows = c == l
            if rows.any():
                h[rows] = est.predict(g[rows])
        return TopLabelDecomposition(c, h)

    def predict_confidence(self, X):
        return self.predict_top_label(X).top_prob

    def predict(self, X):
        return top_label(self._validate_predict(X)).top_class


class ConfidenceCalibrator(_M2BBase):
    """Confidence calibrator: one binary calibrator on the pooled top-label hits."""

    def __init__(self, calibrator=None, random_state=0):
        self.calibrator = calibrator
        self.random_state = random_state

    def fit(self, X, y):
        P, y = self._validate_fit(X, y)
        c, g = top_label(P)
        self.calibrator_ = _fit_binary(
            self._template(), g, (y == c).astype(float),
            derive_seed(self.random_state, POOLED, 0), where="pooled data",
        )
        return self

    def predict_top_label(self, X):
        P = self._validate_predict(X)
        c, g = top_label(P)
        return TopLabelDecomposition(c, self.calibrator_.predict(g))

    def predict_confidence(self, X):
        return self.predict_top_label(X).top_prob

    def predict(self, X):
        return top_label(self._validate_predict(X)).top_class


class ClassWiseCalibrator(_M2BBase):
    """Class-wise (one-vs-all) calibrator without normalization.

    Component ``l`` is calibrated on all rows with score ``g_l`` and target
    ``1{y = l}``. Output rows need not sum to one.

    Parameters
    ----------
    calibrator : estimator, default=None
    points_per_bin : sequence of int or None, default=None
        Per-class ``k_l`` overriding the template's ``points_per_bin``.
    random_state : int, default=0
    """

    def __init__(self, calibrator=None, points_per_bin=None, random_state=0):
        self.calibrator = calibrator
        self.points_per_bin = points_per_bin
        self.random_state = random_state

    def fit(self, X, y):
        P, y = self._validate_fit(X, y)
        L = self.n_classes_
        kl = self.points_per_bin
        if kl is not None and len(kl) != L:
            raise InvalidHyperparameters(f"points_per_bin has {len(kl)} entries for {L} classes")
        template = self._template()
        self.calibrators_ = [
            _fit_binary(
                template, P[:, l], (y == l).astype(float),
                derive_seed(self.random_state, l, 0),
                points_per_bin=None if kl is None else int(kl[l]), where=f"class {l}",
            )
            for l in range(L)
        ]
        return self

    def _raw(self, P):
        out = np.empty_like(P)
        for l, est in enumerate(self.calibrators_):
            out[:, l] = est.predict(P[:, l])
        return out

    def predict_proba(self, X):
        return self._raw(self._validate_predict(X))

    def transform(self, X):
        return self.predict_proba(X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class NormalizedCalibrator(ClassWiseCalibrator):
    """Class-wise calibration followed by row normalization.

    Rows whose calibrated components are all zero map to the uniform vector.
    """

    def predict_proba(self, X):
        raw = self._raw(self._validate_predict(X))
        sums = raw.sum(axis=1, keepdims=True)
        out = np.full_like(raw, 1.0 / raw.shape[1])
        nz = sums[:, 0] > 0
        out[nz] = raw[nz] / sums[nz]
        return out


class TopKLabelCalibrator(_M2BBase):
    """Top-K-label calibrator: one binary calibrator per (rank, class) cell."""

    def __init__(self, K=1, calibrator=None, random_state=0):
        self.K = K
        self.calibrator = calibrator
        self.random_state = random_state

    def fit(self, X, y):
        P, y = self._validate_fit(X, y)
        L = self.n_classes_
        if not 1 <= self.K <= L:
            raise KOutOfRange(f"K must be in [1, {L}], got {self.K}")
        ranks = top_k(P, self.K)
        template = self._template()
        self.calibrators_ = []
        self.fallback_cells_ = []
        for k in range(self.K):
            ck, gk = ranks.rank_class[:, k], ranks.rank_prob[:, k]
            row = []
            for l in range(L):
                rows = ck == l
                if not rows.any():
                    self.fallback_cells_.append((k, l))
                row.append(_fit_binary(
                    template, gk[rows], (y[rows] == l).astype(float),
                    derive_seed(self.random_state, l, k), where=f"rank {k} class {l}",
                ))
            self.calibrators_.append(row)
        return self

    def predict_top_k(self, X):
        P = self._validate_predict(X)
        ranks = top_k(P, self.K)
        out = np.empty_like(ranks.rank_prob)
        for k in range(self.K):
            ck, gk = ranks.rank_class[:, k], ranks.rank_prob[:, k]
            for l, est in enumerate(self.calibrators_[k]):
                rows = ck == l
                if rows.any():
                    out[rows, k] = est.predict(gk[rows])
        return TopKDecomposition(ranks.rank_class, out)

    def predict_top_label(self, X):
        r = self.predict_top_k(X)
        return TopLabelDecomposition(r.rank_class[:, 0], r.rank_prob[:, 0])

    def predict(self, X):
        return top_label(self._validate_predict(X)).top_class


class TopKConfidenceCalibrator(_M2BBase):
    """Top-K-confidence calibrator: one pooled binary calibrator per rank."""

    def __init__(self, K=1, calibrator=None, random_state=0):
        self.K = K
        self.calibrator = calibrator
        self.random_state = random_state

    def fit(self, X, y):
        P, y = self._validate_fit(X, y)
        if not 1 <= self.K <= self.n_classes_:
            raise KOutOfRange(f"K must be in [1, {self.n_classes_}], got {self.K}")
        ranks = top_k(P, self.K)
        template = self._template()
        self.calibrators_ = [
            _fit_binary(
                template, ranks.rank_prob[:, k], (y == ranks.rank_class[:, k]).astype(float),
                derive_seed(self.random_state, POOLED, k), where=f"rank {k}",
            )
            for k in range(self.K)
        ]
        return self

    def predict_top_k(self, X):
        P = self._validate_predict(X)
        ranks = top_k(P, self.K)
        out = np.column_stack(
            [est.predict(ranks.rank_prob[:, k]) for k, est in enumerate(self.calibrators_)]
        )
        return TopKDecomposition(ranks.rank_class, out)

    def predict_top_label(self, X):
        r = self.predict_top_k(X)
        return TopLabelDecomposition(r.rank_class[:, 0], r.rank_prob[:, 0])

    def predict(self, X):
        return top_label(self._validate_predict(X)).top_class


@dataclass(frozen=True)
class M2BNotion:
    """An M2B calibration notion; ``K`` only matters for the top-K notions."""

    name: str
    K: int = 1

    NAMES = ("confidence", "top_label", "class_wise", "top_k_label", "top_k_confidence")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise InvalidHyperparameters(f"unknown notion {self.name!r}")
        if self.K < 1:
            raise KOutOfRange("K must be >= 1")


def make_m2b(notion, calibrator=None, random_state=0):
    """Unfitted wrapper estimator for ``notion`` (an :class:`M2BNotion` or name)."""
    if isinstance(notion, str):
        notion = M2BNotion(notion)
    if notion.name == "top_label":
        return TopLabelCalibrator(calibrator, random_state)
    if notion.name == "class_wise":
        return ClassWiseCalibrator(calibrator, random_state=random_state)
    if notion.name == "confidence":
        return ConfidenceCalibrator(calibrator, random_state)
    if notion.name == "top_k_label":
        return TopKLabelCalibrator(notion.K, calibrator, random_state)
    return TopKConfidenceCalibrator(notion.K, calibrator, random_state)


def fit_m2b(notion, X, y, calibrator=None, random_state=0):
    """Fit the M2B calibrator for ``notion`` on calibration data ``(X, y)``."""
    return make_m2b(notion, calibrator, random_state).fit(X, y)
