"""Distribution-free guarantees for histogram-binned M2B calibrators.

With ``k`` points per bin and tie-break magnitude ``delta``, a top-label
histogram-binning model fitted on ``n`` points satisfies, with probability at
least ``1 - alpha`` over the calibration data,

* a marginal guarantee at level ``eps_marginal = sqrt(log(2/alpha) / (2(k-1))) + delta``,
* a conditional guarantee (uniform over every prediction cell, and therefore
  also a TL-MCE bound) at ``eps_conditional = sqrt(log(2n/(k alpha)) / (2(k-1))) + delta``,

and its expected TL-ECE is at most ``sqrt(1/(2k)) + delta``. The class-wise
version applies the same formulas per class and combines them with a union
bound. Logarithms are natural.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import InvalidHyperparameters


def _check_common(k, alpha, delta, n=None):
    if not (isinstance(k, (int, np.integer)) or float(k).is_integer()) or k < 2:
        raise InvalidHyperparameters(f"points per bin must be an integer >= 2, got {k}")
    if not 0 < alpha < 1:
        raise InvalidHyperparameters(f"alpha must lie in (0, 1), got {alpha}")
    if not (delta >= 0 and math.isfinite(delta)):
        raise InvalidHyperparameters(f"delta must be finite and >= 0, got {delta}")
    if n is not None and n < 1:
        raise InvalidHyperparameters(f"n must be >= 1, got {n}")


def eps_marginal(k, alpha, delta=1e-10):
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * (k - 1))) + delta


def eps_conditional(k, n, alpha, delta=1e-10):
    # log(2n / (k alpha)) split so that n = k reproduces eps_marginal exactly;
    # clamped at 0 for the degenerate n < k alpha / 2
    log_term = max(0.0, math.log(2.0 / alpha) + math.log(n / k))
    return math.sqrt(log_term / (2.0 * (k - 1))) + delta


def expected_ece_bound(k, delta=1e-10):
    return math.sqrt(1.0 / (2.0 * k)) + delta


@dataclass(frozen=True)
class TopLabelBounds:
    k: int
    n: int
    alpha: float
    delta: float
    eps_marginal: float
    eps_conditional: float
    expected_tl_ece_bound: float

    @property
    def tl_mce_bound(self):
        """High-probability TL-MCE bound; same value as the conditional level."""
        return self.eps_conditional

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ClassWiseBounds:
    k: tuple
    alpha: tuple
    n: int
    delta: float
    eps_marginal: tuple
    eps_conditional: tuple
    eps_marginal_max: float
    eps_conditional_max: float
    alpha_sum: float
    expected_cw_ece_bound: float

    def to_dict(self):
        d = asdict(self)
        return {key: list(v) if isinstance(v, tuple) else v for key, v in d.items()}


def theorem1_bounds(k, n, alpha=0.1, delta=1e-10):
    """Marginal, conditional and expected-ECE levels for top-label binning.

    Parameters
    ----------
    k : int
        Points per bin, at least 2.
    n : int
        Calibration set size.
    alpha : float
        Failure probability in ``(0, 1)``.
    delta : float
        Tie-break magnitude. Zero is accepted to evaluate the limit.

    Examples
    --------
    >>> b = theorem1_bounds(k=50, n=5000, alpha=0.1, delta=0.0)
    >>> round(b.expected_tl_ece_bound, 6)
    0.1
    """
    _check_common(k, alpha, delta, n)
    return TopLabelBounds(
        k=int(k), n=int(n), alpha=float(alpha), delta=float(delta),
        eps_marginal=eps_marginal(k, alpha, delta),
        eps_conditional=eps_conditional(k, n, alpha, delta),
        expected_tl_ece_bound=expected_ece_bound(k, delta),
    )


def theorem2_bounds(k, n, alpha, delta=1e-10):
    """Per-class levels for class-wise binning and their union-bound combination.

    ``k`` and ``alpha`` are per-class sequences (scalars broadcast when the
    other argument is a sequence). Every class model is fitted on all ``n``
    rows, so ``n`` is shared.
    """
    k_arr, a_arr = np.broadcast_arrays(np.atleast_1d(k), np.atleast_1d(alpha))
    if k_arr.ndim != 1 or k_arr.size == 0:
        raise InvalidHyperparameters("need one (k, alpha) pair per class")
    for kl, al in zip(k_arr, a_arr):
        _check_common(kl, al, delta, n)
    ks = tuple(int(x) for x in k_arr)
    als = tuple(float(x) for x in a_arr)
    e1 = tuple(eps_marginal(kl, al, delta) for kl, al in zip(ks, als))
    e2 = tuple(eps_conditional(kl, n, al, delta) for kl, al in zip(ks, als))
    return ClassWiseBounds(
        k=ks, alpha=als, n=int(n), delta=float(delta),
        eps_marginal=e1, eps_conditional=e2,
        eps_marginal_max=max(e1), eps_conditional_max=max(e2),
        alpha_sum=float(sum(als)),
        expected_cw_ece_bound=max(expected_ece_bound(kl, delta) for kl in ks),
    )
