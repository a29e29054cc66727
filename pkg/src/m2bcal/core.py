"""Prediction matrices, labels and top-label / top-K decompositions.

Class indices are 0-based everywhere in the library. Only the CLI and file
formats use 1-based labels.
"""
from typing import NamedTuple

import numpy as np

from .exceptions import (
    KOutOfRange,
    LabelOutOfRange,
    NonFinite,
    NonRectangular,
    OutOfRange,
    RowSumZero,
)

ROW_SUM_TOL = 1e-6
NEG_DUST = 1e-9


class TopLabelDecomposition(NamedTuple):
    """Predicted class ``c(x)`` and its reported probability ``h(x)``."""

    top_class: np.ndarray
    top_prob: np.ndarray


class TopKDecomposition(NamedTuple):
    """Arrays of shape (n, K); column ``k`` is the (k+1)-th ranked prediction."""

    rank_class: np.ndarray
    rank_prob: np.ndarray

    @property
    def K(self):
        return self.rank_class.shape[1]


class Dataset(NamedTuple):
    scores: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def _as_2d_float(matrix):
    try:
        arr = np.asarray(matrix, dtype=float)
    except (ValueError, TypeError) as exc:
        raise NonRectangular(f"input is not a rectangular numeric matrix: {exc}") from None
    if arr.ndim != 2:
        raise NonRectangular(f"expected a 2-d matrix, got {arr.ndim} dimension(s)")
    return arr


def validate_and_normalize(matrix, renormalize=False):
    """Check (and optionally renormalize) an ``n x L`` probability matrix.

    Parameters
    ----------
    matrix : array-like of shape (n_samples, n_classes)
    renormalize : bool, default=False
        Divide each row by its sum. Without it, rows must already sum to one
        within ``1e-6`` and every entry must lie in ``[-1e-6, 1 + 1e-6]``.

    Returns
    -------
    ndarray of shape (n_samples, n_classes)
        Negative dust is clipped to zero.
    """
    arr = _as_2d_float(matrix)
    if arr.shape[1] < 2:
        raise NonRectangular(f"need at least 2 classes, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("probability matrix has non-finite entries")
    if arr.size == 0:
        return arr.copy()
    if renormalize:
        if np.any(arr < -NEG_DUST):
            raise OutOfRange("negative entries cannot be renormalized")
        arr = np.clip(arr, 0.0, None)
        sums = arr.sum(axis=1)
        bad = np.flatnonzero(sums <= 1e-12)
        if bad.size:
            raise RowSumZero(f"row {bad[0]} sums to zero")
        return arr / sums[:, None]
    if np.any(arr < -ROW_SUM_TOL) or np.any(arr > 1 + ROW_SUM_TOL):
        raise OutOfRange("probabilities must lie in [0, 1]")
    arr = np.clip(arr, 0.0, 1.0)
    dev = np.abs(arr.sum(axis=1) - 1.0)
    if np.any(dev > ROW_SUM_TOL):
        i = int(np.argmax(dev))
        raise OutOfRange(f"row {i} sums to {arr[i].sum()!r}, not 1")
    return arr


def softmax_rows(logits):
    """Row-wise softmax with max-subtraction."""
    z = _as_2d_float(logits)
    if not np.all(np.isfinite(z)):
        raise NonFinite("logits must be finite")
    if z.shape[0] == 0:
        return z.copy()
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def check_labels(labels, n_classes=None, n_samples=None):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise NonRectangular("labels must be a 1-d array")
    if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
        raise LabelOutOfRange("labels must be integers")
    y = y.astype(np.int64)
    if n_samples is not None and y.shape[0] != n_samples:
        raise NonRectangular(f"{y.shape[0]} labels for {n_samples} rows")
    if y.size and (y.min() < 0 or (n_classes is not None and y.max() >= n_classes)):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    return y


def top_label(matrix):
    """Argmax class and its probability; ties go to the lowest class index."""
    P = np.asarray(matrix, dtype=float)
    cls = np.argmax(P, axis=1)  # first maximum wins
    return TopLabelDecomposition(cls, P[np.arange(P.shape[0]), cls])


def top_k(matrix, K):
    """The ``K`` highest-ranked classes per row, ties toward lower indices."""
    P = np.asarray(matrix, dtype=float)
    L = P.shape[1]
    if not 1 <= K <= L:
        raise KOutOfRange(f"K must be in [1, {L}], got {K}")
    order = np.argsort(-P, axis=1, kind="stable")[:, :K]
    return TopKDecomposition(order, np.take_along_axis(P, order, axis=1))


def derive_seed(seed, *keys):
    """Deterministic child seed; independent of the order children are made."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) + 1 for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint32)[0])
