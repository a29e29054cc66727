"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``eval``, ``diagram``, ``bounds`` and
``simulate``. Results are printed as JSON (sorted keys) to stdout or written
to ``--output``. Exit status is 0 on success, 2 on usage errors and 1 on data
or model-file errors. The default seed comes from ``MCALIB_SEED`` when set.
"""
import argparse
import json
import os
import sys

import numpy as np

from .binning import HistogramBinning, IdentityCalibrator
from .bounds import theorem1_bounds, theorem2_bounds
from .canonical import CanonicalBinning
from .core import top_label
from .exceptions import CalibrationError, MalformedHeader, SchemaViolation, UnsupportedPredictor
from .io import load_model, read_dataset, read_table, save_model
from .metrics import METRICS, canonical_validity_curve, reliability_diagram, validity_curve
from .synthetic import coverage_experiment, random_distribution
from .temperature import TemperatureScaling
from .wrappers import (
    ClassWiseCalibrator,
    ConfidenceCalibrator,
    NormalizedCalibrator,
    TopKConfidenceCalibrator,
    TopKLabelCalibrator,
    TopLabelCalibrator,
)

NOTION_FLAGS = ("top-label", "class-wise", "confidence", "normalized", "top-k-label",
                "top-k-confidence", "temperature", "canonical")


def _default_seed():
    raw = os.environ.get("MCALIB_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"MCALIB_SEED must be an integer, got {raw!r}") from None


def _emit(obj, output=None):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_inputs(path, logits, renormalize, require_labels=True):
    """Probabilities, raw logits (or log-probabilities) and labels from a CSV."""
    mode = "logits" if logits else "probs"
    ds = read_dataset(path, mode, renormalize, require_labels=require_labels)
    if logits:
        raw, _ = read_table(path, mode)
    else:
        with np.errstate(divide="ignore"):
            raw = np.log(ds.scores)
    return ds.scores, raw, ds.labels


# ---------------------------------------------------------------------------
# predictions


def _predictions(model, probs, raw):
    """Dict with 0-based ``top_class``, ``top_prob`` and optionally ``probs``."""
    if isinstance(model, TemperatureScaling):
        if not np.all(np.isfinite(raw)):
            raise CalibrationError("temperature models need finite logits; pass --logits")
        H = model.predict_proba(raw)
    elif isinstance(model, (ClassWiseCalibrator, CanonicalBinning)):
        H = model.predict_proba(probs)
    else:
        dec = model.predict_top_label(probs)
        return {"top_class": dec.top_class, "top_prob": dec.top_prob, "probs": None}
    dec = top_label(H)
    return {"top_class": dec.top_class, "top_prob": dec.top_prob, "probs": H}


def _pred_json(pred, labels):
    out = {
        "top_class": [int(c) + 1 for c in pred["top_class"]],
        "top_prob": [float(v) for v in pred["top_prob"]],
    }
    if pred["probs"] is not None:
        out["probs"] = np.asarray(pred["probs"]).tolist()
    if labels is not None:
        out["label"] = [int(v) + 1 for v in labels]
    return out


def _read_preds(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"predictions file is not JSON: {exc}") from None
    if not isinstance(doc, dict) or "top_class" not in doc or "top_prob" not in doc:
        raise SchemaViolation("predictions file needs top_class and top_prob")
    if "label" not in doc:
        raise MalformedHeader("predictions file has no labels to evaluate against")
    probs = np.asarray(doc["probs"], dtype=float) if "probs" in doc else None
    pred = {
        "top_class": np.asarray(doc["top_class"], dtype=np.int64) - 1,
        "top_prob": np.asarray(doc["top_prob"], dtype=float),
        "probs": probs,
    }
    return pred, np.asarray(doc["label"], dtype=np.int64) - 1


def _gather(args):
    """Predictions plus labels for eval/diagram from --preds or --input [--model]."""
    if args.preds:
        pred, labels = _read_preds(args.preds)
        return pred, labels, None, None
    probs, raw, labels = _load_inputs(args.input, args.logits, args.renormalize)
    model = load_model(args.model) if args.model else None
    if model is None:
        dec = top_label(probs)
        return {"top_class": dec.top_class, "top_prob": dec.top_prob, "probs": probs}, labels, None, probs
    return _predictions(model, probs, raw), labels, model, probs


def _n_bins(args):
    return None if args.unbinned else args.bins


# ---------------------------------------------------------------------------
# subcommands


def _build_model(args):
    notion = args.notion.replace("-", "_")
    if notion == "temperature":
        return TemperatureScaling()
    if notion == "canonical":
        return CanonicalBinning(scheme=args.scheme, depth=args.depth, grid_size=args.grid_size,
                                n_bins=args.bins or 10, random_state=args.seed)
    if args.calibrator == "identity":
        cal = IdentityCalibrator()
    else:
        cal = HistogramBinning(points_per_bin=args.points_per_bin or 50, n_bins=args.bins,
                               delta=args.delta)
    cls = {
        "top_label": TopLabelCalibrator, "confidence": ConfidenceCalibrator,
        "class_wise": ClassWiseCalibrator, "normalized": NormalizedCalibrator,
    }.get(notion)
    if cls is not None:
        return cls(calibrator=cal, random_state=args.seed)
    cls = TopKLabelCalibrator if notion == "top_k_label" else TopKConfidenceCalibrator
    return cls(K=args.K, calibrator=cal, random_state=args.seed)


def cmd_fit(args):
    probs, raw, labels = _load_inputs(args.input, args.logits, args.renormalize)
    model = _build_model(args)
    if isinstance(model, TemperatureScaling):
        if not np.all(np.isfinite(raw)):
            raise CalibrationError("temperature scaling needs finite logits; pass --logits")
        model.fit(raw, labels)
    else:
        model.fit(probs, labels)
    save_model(model, args.output)
    summary = {"notion": args.notion, "n": int(len(labels)), "n_classes": int(probs.shape[1]),
               "seed": int(args.seed)}
    if isinstance(model, TemperatureScaling):
        summary["temperature"] = model.T_
    _emit(summary)
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    probs, raw, labels = _load_inputs(args.input, args.logits, args.renormalize, require_labels=False)
    _emit(_pred_json(_predictions(model, probs, raw), labels), args.output)
    return 0


def cmd_eval(args):
    pred, labels, _, _ = _gather(args)
    B = _n_bins(args)
    if args.metric == "cw-ece":
        if pred["probs"] is None:
            raise UnsupportedPredictor("cw-ece needs full probability vectors")
        value = METRICS["cw-ece"](labels, pred["probs"], n_bins=B)
    else:
        value = METRICS[args.metric](labels, pred["top_class"], pred["top_prob"], n_bins=B)
    _emit({"metric": args.metric, "bins": B, "n": int(len(labels)), "value": value}, args.output)
    return 0


def cmd_diagram(args):
    pred, labels, model, probs = _gather(args)
    if args.type == "validity":
        if args.grouping == "canonical":
            if not isinstance(model, CanonicalBinning):
                raise UnsupportedPredictor("canonical validity needs a canonical model")
            curve = canonical_validity_curve(labels, pred["probs"], model.apply(probs), args.grid_step)
        else:
            curve = validity_curve(labels, pred["top_class"], pred["top_prob"],
                                   grouping=args.grouping.replace("-", "_"),
                                   n_bins=_n_bins(args), grid_step=args.grid_step)
        out = {"type": "validity", "grouping": args.grouping, **curve.to_dict()}
    else:
        d = reliability_diagram(labels, pred["top_class"], pred["top_prob"], n_bins=args.bins).to_dict()
        if args.type == "confidence":
            for key in ("delta", "top_label_ordinate", "per_class"):
                d.pop(key)
        out = {"type": args.type, **d}
    _emit(out, args.output)
    return 0


def _float_list(text):
    return [float(v) for v in str(text).split(",")]


def cmd_bounds(args):
    if args.theorem == 1:
        b = theorem1_bounds(int(args.k), args.n, float(args.alpha), args.delta)
        out = b.to_dict()
        out["tl_mce_bound"] = b.tl_mce_bound
    else:
        ks = [int(v) for v in _float_list(args.k)]
        alphas = _float_list(args.alpha)
        L = args.classes or max(len(ks), len(alphas))
        if len(ks) == 1:
            ks = ks * L
        if len(alphas) == 1:
            alphas = alphas * L
        if len(ks) != len(alphas):
            raise CalibrationError("--k and --alpha lists must have the same length")
        out = theorem2_bounds(ks, args.n, alphas, args.delta).to_dict()
    out["theorem"] = args.theorem
    _emit(out, args.output)
    return 0


def cmd_simulate(args):
    dist = random_distribution(args.classes, args.atoms, seed=args.seed)
    rep = coverage_experiment(dist, notion=args.notion.replace("-", "_"), n=args.n, k=args.k,
                              delta=args.delta, alpha=args.alpha, R=args.replications,
                              seed=args.seed)
    out = rep.to_dict()
    out.update(classes=args.classes, atoms=args.atoms, seed=args.seed)
    _emit(out, args.output)
    return 0


# ---------------------------------------------------------------------------
# parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_input(p, required=True):
    p.add_argument("--input", required=required, help="dataset CSV")
    p.add_argument("--logits", action="store_true", help="input columns are logit_1..logit_L")
    p.add_argument("--renormalize", action="store_true", help="divide probability rows by their sum")


def build_parser():
    seed = _default_seed()
    parser = argparse.ArgumentParser(prog="m2bcal", description="Multiclass calibration via binary reductions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a calibrator and save it as JSON")
    p.add_argument("--notion", choices=NOTION_FLAGS, default="top-label")
    p.add_argument("--calibrator", choices=("hb", "identity"), default="hb")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--points-per-bin", type=_positive_int)
    g.add_argument("--bins", type=_positive_int)
    p.add_argument("--delta", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--K", type=_positive_int, default=1, help="ranks for the top-K notions")
    p.add_argument("--scheme", choices=("sierpinski", "grid", "projection"), default="projection")
    p.add_argument("--depth", type=_positive_int, default=2)
    p.add_argument("--grid-size", type=_positive_int, default=4)
    _add_input(p)
    p.add_argument("--output", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a saved model")
    p.add_argument("--model", required=True)
    _add_input(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)

    for name, func, helptext in (("eval", cmd_eval, "compute a calibration metric"),
                                 ("diagram", cmd_diagram, "reliability or validity data")):
        p = sub.add_parser(name, help=helptext)
        if name == "eval":
            p.add_argument("--metric", choices=tuple(METRICS), default="tl-ece")
        else:
            p.add_argument("--type", choices=("confidence", "top-label", "validity"), default="top-label")
            p.add_argument("--grouping", choices=("top-label", "confidence", "canonical"), default="top-label")
            p.add_argument("--grid-step", type=float, default=0.01)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--bins", type=_positive_int, default=15)
        g.add_argument("--unbinned", action="store_true")
        p.add_argument("--model")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--input", help="dataset CSV")
        src.add_argument("--preds", help="predictions JSON written by `predict`")
        p.add_argument("--logits", action="store_true")
        p.add_argument("--renormalize", action="store_true")
        p.add_argument("--output")
        p.set_defaults(func=func)

    p = sub.add_parser("bounds", help="distribution-free guarantee levels")
    p.add_argument("--theorem", type=int, choices=(1, 2), default=1)
    p.add_argument("--k", required=True, help="points per bin (comma list allowed for --theorem 2)")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--alpha", default="0.1", help="failure level (comma list allowed for --theorem 2)")
    p.add_argument("--delta", type=float, default=1e-10)
    p.add_argument("--classes", type=_positive_int, help="class count when --k and --alpha are scalars")
    p.add_argument("--output")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="Monte-Carlo coverage check on a random finite distribution")
    p.add_argument("--notion", choices=("top-label", "class-wise"), default="top-label")
    p.add_argument("--replications", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=2000)
    p.add_argument("--k", type=_positive_int, default=50)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=1e-10)
    p.add_argument("--classes", type=_positive_int, default=3)
    p.add_argument("--atoms", type=_positive_int, default=10000)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "bounds" and args.theorem == 1:
            try:
                float(args.k), float(args.alpha)
            except ValueError:
                parser.error("--theorem 1 takes scalar --k and --alpha")
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (CalibrationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
