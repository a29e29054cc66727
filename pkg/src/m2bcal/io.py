"""CSV ingestion and JSON model files.

Dataset CSVs carry a header with ``p_1..p_L`` (probabilities) or
``logit_1..logit_L`` (raw scores) columns and, optionally, a 1-based
``label`` column. Model files are JSON documents validated against
:data:`MODEL_SCHEMA`; numbers are written with ``repr`` precision so a
save/load round trip is bit-exact.
"""
import csv
import json
import math
import re

import jsonschema
import numpy as np

from .binning import HistogramBinning, IdentityCalibrator
from .canonical import CanonicalBinning
from .core import Dataset, softmax_rows, validate_and_normalize
from .exceptions import (
    CalibrationError,
    LabelOutOfRange,
    MalformedHeader,
    NonRectangular,
    RaggedRow,
    SchemaViolation,
    VersionMismatch,
)
from .temperature import TemperatureScaling
from .wrappers import (
    ClassWiseCalibrator,
    ConfidenceCalibrator,
    NormalizedCalibrator,
    TopKConfidenceCalibrator,
    TopKLabelCalibrator,
    TopLabelCalibrator,
)

FORMAT_VERSION = 1

_PREFIX = {"probs": "p", "logits": "logit"}


# ---------------------------------------------------------------------------
# CSV


def read_table(path, mode="probs"):
    """Parse a dataset CSV into ``(matrix, labels_or_None)`` without transforming scores.

    Labels are returned 0-based.
    """
    if mode not in _PREFIX:
        raise MalformedHeader(f"unknown column mode {mode!r}")
    prefix = _PREFIX[mode]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedHeader("file is empty")
    header = [h.strip() for h in rows[0]]
    pat = re.compile(rf"^{prefix}_(\d+)$")
    cols = {}
    label_col = None
    for j, name in enumerate(header):
        m = pat.match(name)
        if m:
            cols[int(m.group(1))] = j
        elif name == "label" and label_col is None:
            label_col = j
        else:
            raise MalformedHeader(f"unexpected column {name!r}; expected {prefix}_1..{prefix}_L and label")
    L = len(cols)
    if L < 2 or sorted(cols) != list(range(1, L + 1)):
        raise MalformedHeader(f"score columns must be {prefix}_1..{prefix}_L with L >= 2")
    order = [cols[i] for i in range(1, L + 1)]
    body = [r for r in rows[1:] if r]
    X = np.empty((len(body), L))
    labels = np.empty(len(body), dtype=np.int64) if label_col is not None else None
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise RaggedRow(f"line {i + 2} has {len(r)} fields, header has {len(header)}")
        try:
            X[i] = [float(r[j]) for j in order]
        except ValueError:
            raise NonRectangular(f"line {i + 2} has a non-numeric score") from None
        if labels is not None:
            try:
                lab = float(r[label_col])
            except ValueError:
                raise LabelOutOfRange(f"line {i + 2}: label {r[label_col]!r} is not an integer") from None
            if not lab.is_integer() or not 1 <= lab <= L:
                raise LabelOutOfRange(f"line {i + 2}: label {r[label_col]} not in 1..{L}")
            labels[i] = int(lab) - 1
    return X, labels


def read_dataset(path, mode="probs", renormalize=False, require_labels=True):
    """Load a dataset CSV as probabilities; logits are passed through softmax.

    Examples
    --------
    A file with header ``p_1,p_2,label`` and row ``0.3,0.7,2`` yields one row
    with label index 1.
    """
    X, labels = read_table(path, mode)
    if require_labels and labels is None:
        raise MalformedHeader("a label column is required")
    P = softmax_rows(X) if mode == "logits" else validate_and_normalize(X, renormalize)
    return Dataset(P, labels)


def write_table(path, matrix, labels=None, mode="probs"):
    """Write a dataset CSV (labels converted to 1-based)."""
    M = np.asarray(matrix, dtype=float)
    prefix = _PREFIX[mode]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"{prefix}_{j + 1}" for j in range(M.shape[1])]
        if labels is not None:
            header.append("label")
        w.writerow(header)
        for i, row in enumerate(M):
            out = [repr(float(v)) for v in row]
            if labels is not None:
                out.append(str(int(labels[i]) + 1))
            w.writerow(out)


# ---------------------------------------------------------------------------
# model files

NOTIONS = {
    "top_label": TopLabelCalibrator,
    "confidence": ConfidenceCalibrator,
    "class_wise": ClassWiseCalibrator,
    "normalized": NormalizedCalibrator,
    "top_k_label": TopKLabelCalibrator,
    "top_k_confidence": TopKConfidenceCalibrator,
    "temperature": TemperatureScaling,
    "canonical": CanonicalBinning,
}
_PER_CLASS = ("top_label", "class_wise", "normalized")

_num_list = {"type": "array", "items": {"type": "number"}}
_BINARY = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "hb"},
                "upper_edges": _num_list,
                "bin_values": _num_list,
                "bin_counts": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
            "required": ["kind", "upper_edges", "bin_values", "bin_counts"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "identity"}},
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}
_CAL_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "hb"},
                "points_per_bin": {"type": "integer", "minimum": 2},
                "n_bins": {"type": ["integer", "null"], "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "random_state": {"type": "integer"},
            },
            "required": ["kind", "points_per_bin", "n_bins", "delta", "random_state"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "identity"}, "random_state": {"type": "integer"}},
            "required": ["kind", "random_state"],
            "additionalProperties": False,
        },
    ]
}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "notion": {"enum": list(NOTIONS)},
        "n_classes": {"type": "integer", "minimum": 2},
        "params": {
            "type": "object",
            "properties": {
                "random_state": {"type": "integer"},
                "K": {"type": "integer", "minimum": 1},
                "points_per_bin": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 2}},
                "t_min": {"type": "number", "exclusiveMinimum": 0},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "scheme": {"enum": ["sierpinski", "grid", "projection"]},
                "depth": {"type": "integer", "minimum": 1},
                "grid_size": {"type": "integer", "minimum": 1},
                "n_bins": {"type": "integer", "minimum": 1},
                "directions": {"type": ["string", "array"]},
            },
            "additionalProperties": False,
        },
        "calibrator": {"oneOf": [{"type": "null"}, _CAL_SCHEMA]},
        "state": {
            "type": "object",
            "properties": {
                "calibrators": {
                    "type": "array",
                    "items": {"oneOf": [_BINARY, {"type": "array", "items": _BINARY}]},
                },
                "calibrator": _BINARY,
                "kind": {"enum": ["temperature", "canonical"]},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "fit_nll": {"type": "number"},
                "n_classes": {"type": "integer", "minimum": 2},
                "scheme": {"enum": ["sierpinski", "grid", "projection"]},
                "depth": {"type": "integer"},
                "grid_size": {"type": "integer"},
                "n_bins": {"type": "integer"},
                "pi_hat": {"type": "array", "items": _num_list},
                "bin_counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "directions": {"type": "array", "items": _num_list},
                "thresholds": {"type": "array", "items": {"type": ["number", "null"]}},
            },
            "additionalProperties": False,
        },
    },
    "required": ["format_version", "notion", "n_classes", "params", "calibrator", "state"],
    "additionalProperties": False,
}


def _notion_of(model):
    for name, cls in NOTIONS.items():
        if type(model) is cls:
            return name
    raise SchemaViolation(f"cannot serialize {type(model).__name__}")


def _cal_spec(template):
    if template is None:
        template = HistogramBinning()
    if type(template) is HistogramBinning:
        p = template.get_params()
        return {
            "kind": "hb",
            "points_per_bin": int(p["points_per_bin"]),
            "n_bins": None if p["n_bins"] is None else int(p["n_bins"]),
            "delta": float(p["delta"]),
            "random_state": int(p["random_state"]),
        }
    if type(template) is IdentityCalibrator:
        return {"kind": "identity", "random_state": int(template.random_state)}
    raise SchemaViolation(f"cannot serialize binary calibrator {type(template).__name__}")


def model_to_dict(model):
    notion = _notion_of(model)
    if not hasattr(model, "n_classes_"):
        raise SchemaViolation("model is not fitted")
    params = {}
    calibrator = None
    if notion == "temperature":
        params = {k: float(v) for k, v in model.get_params().items()}
        state = model._state()
    elif notion == "canonical":
        p = model.get_params()
        params = {k: int(p[k]) for k in ("depth", "grid_size", "n_bins", "random_state")}
        params["scheme"] = p["scheme"]
        d = p["directions"]
        params["directions"] = d if isinstance(d, str) else np.asarray(d, dtype=float).tolist()
        state = model._state()
    else:
        calibrator = _cal_spec(model.calibrator)
        params["random_state"] = int(model.random_state)
        if hasattr(model, "K"):
            params["K"] = int(model.K)
        if notion in ("class_wise", "normalized"):
            k = model.points_per_bin
            params["points_per_bin"] = None if k is None else [int(v) for v in k]
        if notion == "confidence":
            state = {"calibrator": model.calibrator_._state()}
        elif notion == "top_k_label":
            state = {"calibrators": [[c._state() for c in row] for row in model.calibrators_]}
        else:
            state = {"calibrators": [c._state() for c in model.calibrators_]}
    return {
        "format_version": FORMAT_VERSION,
        "notion": notion,
        "n_classes": int(model.n_classes_),
        "params": params,
        "calibrator": calibrator,
        "state": state,
    }


def dumps_model(model):
    return json.dumps(model_to_dict(model), sort_keys=True, indent=2) + "\n"


def save_model(model, path):
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def _binary_from_state(state, cal_params):
    if state["kind"] == "identity":
        return IdentityCalibrator()._load_state(state)
    return HistogramBinning(**{k: v for k, v in cal_params.items() if k != "kind"})._load_state(state)


def _check_hb(state, where):
    if state["kind"] != "hb":
        return
    B = len(state["bin_values"])
    if B < 1 or len(state["bin_counts"]) != B or len(state["upper_edges"]) != B - 1:
        raise SchemaViolation(f"{where}: inconsistent histogram sizes")


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaViolation("model file must hold a JSON object")
    if "format_version" in doc and doc["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(f"format_version {doc['format_version']!r}, expected {FORMAT_VERSION}")
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaViolation(f"{path}: {exc.message}") from None
    notion, L, params, state = doc["notion"], doc["n_classes"], doc["params"], doc["state"]
    cls = NOTIONS[notion]
    try:
        if notion == "temperature":
            model = cls(**params)._load_state(state)
        elif notion == "canonical":
            model = cls(**params)._load_state(state)
            if model.pi_hat_.shape != (model.n_bins_, L):
                raise SchemaViolation("pi_hat has the wrong shape")
        else:
            cal_params = doc["calibrator"]
            if cal_params is None:
                raise SchemaViolation("calibrator description missing")
            template = _binary_from_state({"kind": "identity"}, cal_params) if cal_params["kind"] == "identity" \
                else HistogramBinning(**{k: v for k, v in cal_params.items() if k != "kind"})
            model = cls(calibrator=template, **params)
            if notion == "confidence":
                _check_hb(state["calibrator"], "calibrator")
                model.calibrator_ = _binary_from_state(state["calibrator"], cal_params)
            elif notion == "top_k_confidence":
                cal = state["calibrators"]
                if len(cal) != model.K:
                    raise SchemaViolation("need one calibrator per rank")
                for c in cal:
                    _check_hb(c, "rank calibrator")
                model.calibrators_ = [_binary_from_state(c, cal_params) for c in cal]
            elif notion == "top_k_label":
                cal = state["calibrators"]
                if len(cal) != model.K or any(not isinstance(r, list) or len(r) != L for r in cal):
                    raise SchemaViolation("need a K x L grid of calibrators")
                model.calibrators_ = [[_binary_from_state(c, cal_params) for c in row] for row in cal]
                model.fallback_cells_ = [
                    (k, l) for k, row in enumerate(cal) for l, c in enumerate(row) if c["kind"] == "identity"
                ]
            else:
                cal = state["calibrators"]
                if len(cal) != L or any(not isinstance(c, dict) for c in cal):
                    raise SchemaViolation("need one calibrator per class")
                for c in cal:
                    _check_hb(c, "class calibrator")
                model.calibrators_ = [_binary_from_state(c, cal_params) for c in cal]
                if notion == "top_label":
                    model.fallback_classes_ = [l for l, c in enumerate(cal) if c["kind"] == "identity"]
            model.n_classes_ = L
    except (KeyError, TypeError) as exc:
        raise SchemaViolation(f"incomplete model state: {exc}") from None
    except CalibrationError as exc:
        if isinstance(exc, SchemaViolation):
            raise
        raise SchemaViolation(str(exc)) from None
    return model


def load_model(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"not valid JSON: {exc}") from None
    return model_from_dict(doc)
