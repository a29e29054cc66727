"""Calibration metrics, reliability-diagram data and validity curves.

All estimators are plugin estimates over groups of predictions. A group is
either an equal-width cell of ``[0, 1]`` (``n_bins=B``; cells are
``[0, 1/B), ..., [1 - 1/B, 1]``) or, with ``n_bins=None``, the set of points
sharing exactly the same predicted probability. The unbinned mode is meant for
predictors with discrete output such as histogram binning.

The ``exact_*`` functions compute the same quantities on a finite-support
distribution with known conditional label probabilities, so no estimation
error is involved.
"""
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import TopLabelDecomposition, check_labels, top_label
from .exceptions import EmptyInput, InvalidHyperparameters, UnsupportedPredictor

VALIDITY_TOL = 1e-12


def bin_index(prob, n_bins):
    """Equal-width cell of each probability; the last cell is closed at 1."""
    if n_bins < 1:
        raise InvalidHyperparameters("n_bins must be >= 1")
    idx = np.floor(np.asarray(prob, dtype=float) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def _group_ids(*keys):
    """Dense group id per row for the joint value of ``keys``."""
    if len(keys) == 1:
        _, first, inv = np.unique(keys[0], return_index=True, return_inverse=True)
    else:
        stacked = np.column_stack([np.asarray(k, dtype=float) for k in keys])
        _, first, inv = np.unique(stacked, axis=0, return_index=True, return_inverse=True)
    return inv.ravel(), first


def _grouped(prob, hit, weight, n_bins, by=None):
    """Per-group (weight, accuracy, confidence) for binary hits."""
    prob = np.asarray(prob, dtype=float)
    if prob.size == 0:
        raise EmptyInput("no predictions to evaluate")
    key = prob if n_bins is None else bin_index(prob, n_bins)
    ids, first = _group_ids(key) if by is None else _group_ids(by, key)
    w = np.ones_like(prob) if weight is None else np.asarray(weight, dtype=float)
    wg = np.bincount(ids, weights=w)
    acc = np.bincount(ids, weights=w * hit) / wg
    if n_bins is None:
        conf = prob[first]  # group key itself, so identical outputs compare exactly
    else:
        conf = np.bincount(ids, weights=w * prob) / wg
    keep = wg > 0
    return wg[keep], acc[keep], conf[keep], ids, keep


def _ece(wg, acc, conf):
    return float(np.sum(wg * np.abs(acc - conf)) / np.sum(wg))


def _mce(acc, conf):
    return float(np.max(np.abs(acc - conf)))


def _top_label_inputs(y_true, top_class, top_prob):
    top_prob = np.asarray(top_prob, dtype=float)
    top_class = np.asarray(top_class)
    y = check_labels(y_true, n_samples=top_prob.shape[0])
    if top_class.shape != top_prob.shape:
        raise ValueError("top_class and top_prob must be aligned")
    return y, top_class, top_prob, (y == top_class).astype(float)


def conf_ece(y_true, top_class, top_prob, n_bins=15, sample_weight=None):
    """Confidence ECE: groups on ``h(x)`` alone."""
    _, _, h, hit = _top_label_inputs(y_true, top_class, top_prob)
    wg, acc, conf, _, _ = _grouped(h, hit, sample_weight, n_bins)
    return _ece(wg, acc, conf)


def conf_mce(y_true, top_class, top_prob, n_bins=15, sample_weight=None):
    _, _, h, hit = _top_label_inputs(y_true, top_class, top_prob)
    _, acc, conf, _, _ = _grouped(h, hit, sample_weight, n_bins)
    return _mce(acc, conf)


def tl_ece(y_true, top_class, top_prob, n_bins=15, sample_weight=None):
    """Top-label ECE: groups on the pair ``(c(x), h(x))``."""
    _, c, h, hit = _top_label_inputs(y_true, top_class, top_prob)
    wg, acc, conf, _, _ = _grouped(h, hit, sample_weight, n_bins, by=c)
    return _ece(wg, acc, conf)


def tl_mce(y_true, top_class, top_prob, n_bins=15, sample_weight=None):
    """Top-label MCE over every non-empty (class, cell) group, however small."""
    _, c, h, hit = _top_label_inputs(y_true, top_class, top_prob)
    _, acc, conf, _, _ = _grouped(h, hit, sample_weight, n_bins, by=c)
    return _mce(acc, conf)


def cw_ece_per_class(y_true, probs, n_bins=15, sample_weight=None):
    H = np.asarray(probs, dtype=float)
    if H.ndim != 2 or H.shape[0] == 0:
        raise EmptyInput("need a non-empty n x L prediction matrix")
    y = check_labels(y_true, n_classes=H.shape[1], n_samples=H.shape[0])
    out = np.empty(H.shape[1])
    for l in range(H.shape[1]):
        wg, acc, conf, _, _ = _grouped(H[:, l], (y == l).astype(float), sample_weight, n_bins)
        out[l] = _ece(wg, acc, conf)
    return out


def cw_ece(y_true, probs, n_bins=15, sample_weight=None):
    """Class-wise ECE: average over classes of the binary ECE of ``h_l``."""
    return float(np.mean(cw_ece_per_class(y_true, probs, n_bins, sample_weight)))


METRICS = {
    "conf-ece": conf_ece,
    "tl-ece": tl_ece,
    "tl-mce": tl_mce,
    "conf-mce": conf_mce,
    "cw-ece": cw_ece,
}


@dataclass
class ReliabilityDiagram:
    """Per-bin reliability data for confidence and top-label diagrams.

    Only non-empty bins appear. ``top_label_ordinate`` is where the top-label
    marker is drawn: ``conf + delta`` if ``acc > conf`` else ``conf - delta``.
    ``per_class`` lists, for each bin, ``(class, count, weight, delta)`` rows
    where ``weight`` is the class share within the bin.
    """

    n_bins: int
    bin: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    count: np.ndarray
    weight: np.ndarray
    conf: np.ndarray
    acc: np.ndarray
    delta: np.ndarray
    top_label_ordinate: np.ndarray
    per_class: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d


def reliability_diagram(y_true, top_class, top_prob, n_bins=10):
    y, c, h, hit = _top_label_inputs(y_true, top_class, top_prob)
    if h.size == 0:
        raise EmptyInput("no predictions to evaluate")
    cell = bin_index(h, n_bins)
    n = h.size
    bins = np.unique(cell)
    rows = {name: [] for name in ("count", "conf", "acc", "delta")}
    per_class = []
    for b in bins:
        m = cell == b
        cnt = int(m.sum())
        conf_b = float(h[m].mean())
        acc_b = float(hit[m].mean())
        classes = []
        delta_b = 0.0
        for l in np.unique(c[m]):
            ml = m & (c == l)
            cl = int(ml.sum())
            d = abs(float(hit[ml].mean()) - float(h[ml].mean()))
            share = cl / cnt
            delta_b += share * d
            classes.append({"class": int(l), "count": cl, "weight": share, "delta": d})
        per_class.append(classes)
        for name, v in zip(("count", "conf", "acc", "delta"), (cnt, conf_b, acc_b, delta_b)):
            rows[name].append(v)
    count = np.array(rows["count"])
    conf = np.array(rows["conf"])
    acc = np.array(rows["acc"])
    delta = np.array(rows["delta"])
    ordinate = np.where(acc > conf, conf + delta, conf - delta)
    return ReliabilityDiagram(
        n_bins=n_bins, bin=bins, lower=bins / n_bins, upper=(bins + 1) / n_bins,
        count=count, weight=count / n, conf=conf, acc=acc, delta=delta,
        top_label_ordinate=ordinate, per_class=per_class,
    )


@dataclass
class ValidityCurve:
    """``values[i]`` is the fraction of mass whose group deviation is <= ``eps[i]``."""

    eps: np.ndarray
    values: np.ndarray

    def to_dict(self):
        return {"eps": self.eps.tolist(), "values": self.values.tolist()}


def epsilon_grid(grid_step=0.01):
    steps = int(round(1.0 / grid_step))
    if steps < 1 or abs(steps * grid_step - 1.0) > 1e-9:
        raise InvalidHyperparameters("grid_step must divide 1")
    return np.linspace(0.0, 1.0, steps + 1)


def _curve(point_dev, weight, grid_step):
    eps = epsilon_grid(grid_step)
    w = np.ones_like(point_dev) if weight is None else np.asarray(weight, dtype=float)
    order = np.argsort(point_dev)
    cum = np.cumsum(w[order]) / w.sum()
    pos = np.searchsorted(point_dev[order], eps + VALIDITY_TOL, side="right")
    values = np.where(pos > 0, cum[np.maximum(pos - 1, 0)], 0.0)
    return ValidityCurve(eps, values)


def validity_curve(y_true, top_class, top_prob, grouping="top_label", n_bins=None,
                   grid_step=0.01, sample_weight=None):
    """Validity curve over (class, cell) groups or, for ``grouping='confidence'``, cells."""
    _, c, h, hit = _top_label_inputs(y_true, top_class, top_prob)
    if grouping not in ("top_label", "confidence"):
        raise InvalidHyperparameters(f"unknown grouping {grouping!r}")
    by = c if grouping == "top_label" else None
    wg, acc, conf, ids, keep = _grouped(h, hit, sample_weight, n_bins, by=by)
    dev = np.full(keep.size, np.nan)
    dev[keep] = np.abs(acc - conf)
    return _curve(dev[ids], sample_weight, grid_step)


def canonical_validity_curve(y_true, probs, bin_ids, grid_step=0.01, sample_weight=None):
    """Validity curve with the l1 deviation between label frequencies and mean prediction per bin."""
    P = np.asarray(probs, dtype=float)
    if P.shape[0] == 0:
        raise EmptyInput("no predictions to evaluate")
    y = check_labels(y_true, n_classes=P.shape[1], n_samples=P.shape[0])
    ids, _ = _group_ids(np.asarray(bin_ids))
    w = np.ones(P.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    G = ids.max() + 1
    wg = np.bincount(ids, weights=w, minlength=G)
    onehot = np.zeros_like(P)
    onehot[np.arange(P.shape[0]), y] = 1.0
    dev = np.zeros(G)
    for l in range(P.shape[1]):
        freq = np.bincount(ids, weights=w * onehot[:, l], minlength=G) / wg
        mean = np.bincount(ids, weights=w * P[:, l], minlength=G) / wg
        dev += np.abs(freq - mean)
    return _curve(dev[ids], sample_weight, grid_step)


# ---------------------------------------------------------------------------
# exact metrics on finite-support distributions


@dataclass
class ExactMetrics:
    conf_ece: float
    tl_ece: float
    tl_mce: float
    conf_mce: float
    cw_ece: Optional[float] = None
    cw_ece_per_class: Optional[list] = None


def resolve_predictions(predictor, scores):
    """Turn a predictor into ``(TopLabelDecomposition, vector-or-None)`` on ``scores``.

    ``predictor`` may be ``None`` (the base scores themselves), a precomputed
    ``TopLabelDecomposition``, a plain callable returning either of those
    forms, or a fitted calibrator from this package.
    """
    if predictor is None:
        return top_label(scores), np.asarray(scores, dtype=float)
    if isinstance(predictor, TopLabelDecomposition):
        return predictor, None
    if getattr(predictor, "input_kind", "probs") != "probs":
        raise UnsupportedPredictor(f"{type(predictor).__name__} does not take probabilities")
    if hasattr(predictor, "predict_proba"):
        H = predictor.predict_proba(scores)
        return top_label(H), H
    if hasattr(predictor, "predict_top_label"):
        return predictor.predict_top_label(scores), None
    if callable(predictor):
        out = predictor(scores)
        if isinstance(out, TopLabelDecomposition):
            return out, None
        H = np.asarray(out, dtype=float)
        if H.ndim == 2:
            return top_label(H), H
    raise UnsupportedPredictor(f"cannot evaluate predictor of type {type(predictor).__name__}")


def _exact_groups(p, cond_hit, *keys):
    ids, first = _group_ids(*keys)
    mass = np.bincount(ids, weights=p)
    hit = np.bincount(ids, weights=p * cond_hit)
    pos = mass > 0
    return ids, first, mass, np.divide(hit, mass, out=np.zeros_like(hit), where=pos), pos


def exact_top_label_deviation(dist, decomposition):
    """Per-atom ``|P(Y = c(X) | c(X), h(X)) - h(X)|`` under ``dist``."""
    c = np.asarray(decomposition.top_class)
    h = np.asarray(decomposition.top_prob, dtype=float)
    hit = dist.cond[np.arange(len(c)), c]
    ids, first, _, rate, _ = _exact_groups(dist.p, hit, c, h)
    return np.abs(rate - h[first])[ids]


def exact_class_wise_deviation(dist, H):
    """Atoms x L matrix of ``|P(Y = l | h_l(X)) - h_l(X)|`` under ``dist``."""
    H = np.asarray(H, dtype=float)
    out = np.empty_like(H)
    for l in range(H.shape[1]):
        ids, first, _, rate, _ = _exact_groups(dist.p, dist.cond[:, l], H[:, l])
        out[:, l] = np.abs(rate - H[first, l])[ids]
    return out


def exact_metrics(dist, predictor=None):
    """All metrics computed exactly by enumerating the support of ``dist``.

    ``dist`` needs arrays ``p`` (atom masses), ``cond`` (rows of P(Y | atom))
    and ``scores`` (base model output per atom). Only atoms with positive mass
    enter the maxima.
    """
    dec, H = resolve_predictions(predictor, dist.scores)
    p = np.asarray(dist.p, dtype=float)
    c = np.asarray(dec.top_class)
    h = np.asarray(dec.top_prob, dtype=float)
    hit = dist.cond[np.arange(len(c)), c]
    pos = p > 0

    _, first, mass, rate, ok = _exact_groups(p, hit, c, h)
    tl_dev = np.abs(rate - h[first])
    _, first_c, mass_c, rate_c, ok_c = _exact_groups(p, hit, h)
    conf_dev = np.abs(rate_c - h[first_c])
    out = ExactMetrics(
        conf_ece=float(np.sum(mass_c * conf_dev)),
        tl_ece=float(np.sum(mass * tl_dev)),
        tl_mce=float(np.max(tl_dev[ok])) if pos.any() else 0.0,
        conf_mce=float(np.max(conf_dev[ok_c])) if pos.any() else 0.0,
    )
    if H is not None:
        per_class = []
        for l in range(H.shape[1]):
            _, fl, ml, rl, _ = _exact_groups(p, dist.cond[:, l], H[:, l])
            per_class.append(float(np.sum(ml * np.abs(rl - H[fl, l]))))
        out.cw_ece_per_class = per_class
        out.cw_ece = float(np.mean(per_class))
    return out
