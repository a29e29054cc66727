"""Finite-support distributions with known label conditionals, and a coverage harness.

Because every distribution here has finitely many atoms, the true
``P(Y | prediction)`` of any fitted calibrator can be computed exactly by
enumerating atoms. The coverage harness uses this to check the
high-probability guarantees of histogram binning without estimation error:
only the calibration data is random.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .binning import HistogramBinning
from .bounds import theorem1_bounds, theorem2_bounds
from .core import Dataset, derive_seed, softmax_rows
from .exceptions import InvalidHyperparameters
from .metrics import exact_class_wise_deviation, exact_top_label_deviation
from .wrappers import ClassWiseCalibrator, TopLabelCalibrator


@dataclass(frozen=True)
class DiscreteDistribution:
    """Joint law of (atom, label) plus the base model's score for every atom.

    Parameters
    ----------
    p : ndarray of shape (n_atoms,)
        Atom probabilities.
    cond : ndarray of shape (n_atoms, n_classes)
        Row ``i`` is ``P(Y = . | X = atom i)``.
    scores : ndarray of shape (n_atoms, n_classes)
        Base model output on each atom.
    """

    p: np.ndarray
    cond: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        cond = np.asarray(self.cond, dtype=float)
        scores = np.asarray(self.scores, dtype=float)
        if p.ndim != 1 or cond.shape != (p.size, cond.shape[-1]) or scores.shape != cond.shape:
            raise InvalidHyperparameters("p, cond and scores must describe the same atoms")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InvalidHyperparameters("atom probabilities must be a distribution")
        for name, m in (("cond", cond), ("scores", scores)):
            if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
                raise InvalidHyperparameters(f"{name} rows must lie on the simplex")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "cond", cond)
        object.__setattr__(self, "scores", scores)

    @property
    def n_atoms(self):
        return self.p.size

    @property
    def n_classes(self):
        return self.cond.shape[1]


def example1_distribution():
    """Two equally likely atoms, both predicted with confidence 0.6.

    Atom 0 predicts class 0 and is right 20% of the time; atom 1 predicts
    class 1 and is always right. Pooled over atoms the confidence is exact,
    yet per predicted class it is off by 0.4. The remaining label mass of
    atom 0 goes to class 2.
    """
    return DiscreteDistribution(
        p=np.array([0.5, 0.5]),
        cond=np.array([[0.2, 0.0, 0.8], [0.0, 1.0, 0.0]]),
        scores=np.array([[0.6, 0.3, 0.1], [0.3, 0.6, 0.1]]),
    )


def random_distribution(L, atoms, seed=0, sharpness=1.0, miscalibration=0.5,
                        concentration=0.5, degenerate=False):
    """Seeded random distribution whose base scores track the true conditionals.

    Scores are ``softmax(sharpness * (log cond + miscalibration * noise))``,
    so ``sharpness=0`` gives uniform scores and ``miscalibration=0,
    sharpness=1`` gives a perfectly canonically calibrated base model.
    ``degenerate=True`` gives every atom the same score.
    """
    if L < 2 or atoms < 1:
        raise InvalidHyperparameters("need L >= 2 and atoms >= 1")
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(atoms))
    cond = rng.dirichlet(np.full(L, concentration), size=atoms)
    cond = np.clip(cond, 1e-12, None)
    cond /= cond.sum(axis=1, keepdims=True)
    logits = np.log(cond) + miscalibration * rng.standard_normal((atoms, L))
    scores = softmax_rows(sharpness * logits)
    if degenerate:
        scores = np.repeat(scores[:1], atoms, axis=0)
    return DiscreteDistribution(p, cond, scores)


def sample_atoms(dist, n, seed=0):
    """Draw ``n`` i.i.d. (atom, label) pairs; returns two int arrays."""
    if n < 0:
        raise InvalidHyperparameters("n must be >= 0")
    rng = np.random.default_rng(seed)
    atoms = rng.choice(dist.n_atoms, size=n, p=dist.p)
    u = rng.random(n)
    cdf = np.cumsum(dist.cond[atoms], axis=1)
    labels = np.minimum((u[:, None] >= cdf).sum(axis=1), dist.n_classes - 1)
    return atoms, labels.astype(np.int64)


def sample(dist, n, seed=0):
    """``n`` i.i.d. draws as a :class:`Dataset` of scores and labels."""
    atoms, labels = sample_atoms(dist, n, seed)
    return Dataset(dist.scores[atoms], labels)


@dataclass
class CoverageReport:
    """Outcome of repeated fit-then-audit rounds.

    ``conditional_violations[r]`` says whether round ``r`` had any
    prediction cell whose true deviation exceeded the conditional level.
    ``marginal_violation_mass[r]`` is the probability mass of test points
    whose deviation exceeded the marginal level. ``ece[r]`` is the exact
    TL-ECE (top-label) or CW-ECE (class-wise) of round ``r``.
    """

    notion: str
    replications: int
    n: int
    k: int
    alpha: float
    delta: float
    eps_marginal: list
    eps_conditional: list
    alpha_total: float
    ece_bound: float
    conditional_violations: list
    marginal_violation_mass: list
    max_deviation: list
    ece: list

    @property
    def conditional_violation_rate(self):
        return float(np.mean(self.conditional_violations))

    @property
    def marginal_violation_rate(self):
        return float(np.mean(self.marginal_violation_mass))

    @property
    def mean_ece(self):
        return float(np.mean(self.ece))

    @property
    def ece_standard_error(self):
        if self.replications < 2:
            return 0.0
        return float(np.std(self.ece, ddof=1) / np.sqrt(self.replications))

    def to_dict(self):
        d = asdict(self)
        d.update(
            conditional_violation_rate=self.conditional_violation_rate,
            marginal_violation_rate=self.marginal_violation_rate,
            mean_ece=self.mean_ece,
            ece_standard_error=self.ece_standard_error,
        )
        return d


def _top_label_round(dist, data, k, delta, seed, e1, e2):
    cal = HistogramBinning(points_per_bin=k, delta=delta)
    model = TopLabelCalibrator(calibrator=cal, random_state=seed).fit(*data)
    dev = exact_top_label_deviation(dist, model.predict_top_label(dist.scores))
    pos = dist.p > 0
    return (
        bool(np.any(dev[pos] > e2)),
        float(dist.p[dev > e1].sum()),
        float(dev[pos].max()),
        float(np.sum(dist.p * dev)),
    )


def _class_wise_round(dist, data, k, delta, seed, e1, e2):
    cal = HistogramBinning(points_per_bin=k, delta=delta)
    model = ClassWiseCalibrator(calibrator=cal, random_state=seed).fit(*data)
    dev = exact_class_wise_deviation(dist, model.predict_proba(dist.scores))
    pos = dist.p > 0
    e1 = np.asarray(e1)[None, :]
    e2 = np.asarray(e2)[None, :]
    return (
        bool(np.any(dev[pos] > e2)),
        float(dist.p[np.any(dev > e1, axis=1)].sum()),
        float(dev[pos].max()),
        float(np.mean(dist.p @ dev)),
    )


def coverage_experiment(dist, notion="top_label", n=2000, k=50, delta=1e-10, alpha=0.1,
                        R=100, seed=0):
    """Fit histogram binning ``R`` times on fresh samples and audit each fit exactly.

    For ``notion='class_wise'`` every class gets failure level ``alpha / L``,
    so the union over classes fails with probability at most ``alpha``.
    """
    if R < 1:
        raise InvalidHyperparameters("R must be >= 1")
    if notion == "top_label":
        b = theorem1_bounds(k, n, alpha, delta)
        e1, e2 = [b.eps_marginal], [b.eps_conditional]
        alpha_total, ece_bound = alpha, b.expected_tl_ece_bound
        one_round = _top_label_round
        t1, t2 = e1[0], e2[0]
    elif notion == "class_wise":
        L = dist.n_classes
        b = theorem2_bounds([k] * L, n, [alpha / L] * L, delta)
        e1, e2 = list(b.eps_marginal), list(b.eps_conditional)
        alpha_total, ece_bound = b.alpha_sum, b.expected_cw_ece_bound
        one_round = _class_wise_round
        t1, t2 = e1, e2
    else:
        raise InvalidHyperparameters(f"unsupported notion {notion!r}")
    rows = []
    for r in range(R):
        data = sample(dist, n, derive_seed(seed, r, 0))
        rows.append(one_round(dist, data, k, delta, derive_seed(seed, r, 1), t1, t2))
    cond, marg, mx, ece = (list(col) for col in zip(*rows))
    return CoverageReport(
        notion=notion, replications=R, n=n, k=k, alpha=alpha, delta=delta,
        eps_marginal=e1, eps_conditional=e2, alpha_total=float(alpha_total),
        ece_bound=ece_bound, conditional_violations=cond,
        marginal_violation_mass=marg, max_deviation=mx, ece=ece,
    )
