"""Versioned model container shared by Deep SVDD and kernel SVDD models.

Layout: the magic line ``QKDAD1`` followed by one JSON object holding
``format_version``, ``kind`` (``deep`` or ``svdd``) and the model payload.
Matrices are stored as ``{"shape": [...], "data": [row-major values]}``.
JSON floats use ``repr`` so every value survives a round trip bitwise.
"""
import json

import numpy as np

from .data import NormStats
from .deep_svdd import DeepSvddModel, Hypersphere, TrainConfig
from .errors import FormatError, QkdAdError
from .nn import NetworkParams
from .svdd import KernelSpec, SvddDualModel

MAGIC = "QKDAD1"
FORMAT_VERSION = 1

_DECODE_ERRORS = (ValueError, TypeError, KeyError, IndexError, AttributeError,
                  OverflowError, RecursionError, QkdAdError)


def _pack(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unpack(obj, ndim=None):
    shape = [int(s) for s in obj["shape"]]
    data = obj["data"]
    if not isinstance(data, list):
        raise TypeError("matrix data must be a list")
    if any(s < 0 for s in shape) or int(np.prod(shape, dtype=np.int64)) != len(data):
        raise ValueError(f"shape {shape} does not match {len(data)} values")
    if ndim is not None and len(shape) != ndim:
        raise ValueError(f"expected a {ndim}-D array, got shape {shape}")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in data):
        raise TypeError("matrix entries must be numbers")
    return np.array(data, dtype=np.float64).reshape(shape)


def _norm_to_json(stats):
    return {"mode": stats.mode, "shift": _pack(stats.shift), "scale": _pack(stats.scale)}


def _norm_from_json(obj):
    return NormStats(str(obj["mode"]), _unpack(obj["shift"], 1), _unpack(obj["scale"], 1))


def model_to_dict(model):
    if isinstance(model, DeepSvddModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "deep",
            "input_kind": model.input_kind,
            "architecture": list(model.params.layer_dims),
            "slope": model.params.slope,
            "weights": [_pack(w) for w in model.params.weights],
            "center": _pack(model.sphere.center),
            "radius": model.sphere.radius,
            "normalizer": _norm_to_json(model.normalizer),
            "config": model.config.to_dict(),
            "loss_trace": [float(v) for v in model.loss_trace],
        }
    if isinstance(model, SvddDualModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "svdd",
            "input_kind": model.input_kind,
            "kernel": {"kind": model.kernel.kind, "gamma": model.kernel.gamma},
            "alpha": _pack(model.alpha),
            "support": _pack(model.support),
            "r2": model.r2,
            "offset": model.offset,
            "nu": model.nu,
            "gap": model.gap,
            "normalizer": _norm_to_json(model.normalizer),
        }
    raise TypeError(f"cannot serialise {type(model).__name__}")


def _deep_from_dict(obj):
    arch = [int(d) for d in obj["architecture"]]
    weights = [_unpack(w, 2) for w in obj["weights"]]
    params = NetworkParams(tuple(arch), weights, float(obj["slope"]))
    center = _unpack(obj["center"], 1)
    if center.shape != (params.output_dim,):
        raise ValueError(f"centre length {center.size} != output dim {params.output_dim}")
    normalizer = _norm_from_json(obj["normalizer"])
    if normalizer.dim != params.input_dim:
        raise ValueError(f"normaliser width {normalizer.dim} != input dim {params.input_dim}")
    cfg = dict(obj["config"])
    if not set(cfg) <= set(TrainConfig.__dataclass_fields__):
        raise ValueError(f"unknown config keys {sorted(set(cfg) - set(TrainConfig.__dataclass_fields__))}")
    config = TrainConfig(**cfg)
    trace = [float(v) for v in obj["loss_trace"]]
    return DeepSvddModel(params, Hypersphere(center, float(obj["radius"])), normalizer, config,
                         trace, str(obj["input_kind"]))


def _svdd_from_dict(obj):
    k = obj["kernel"]
    gamma = k["gamma"]
    spec = KernelSpec(str(k["kind"]), None if gamma is None else float(gamma))
    alpha = _unpack(obj["alpha"], 1)
    support = _unpack(obj["support"], 2)
    if support.shape[0] != alpha.shape[0]:
        raise ValueError("alpha and support vectors disagree in length")
    normalizer = _norm_from_json(obj["normalizer"])
    if normalizer.dim != support.shape[1]:
        raise ValueError("normaliser width does not match support vectors")
    return SvddDualModel(alpha, spec, support, float(obj["r2"]), float(obj["offset"]),
                         float(obj["nu"]), normalizer, None, float(obj["gap"]),
                         str(obj["input_kind"]))


def model_from_dict(obj):
    if not isinstance(obj, dict):
        raise FormatError("model payload is not a JSON object")
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version!r}")
    kind = obj.get("kind")
    try:
        if kind == "deep":
            return _deep_from_dict(obj)
        if kind == "svdd":
            return _svdd_from_dict(obj)
    except _DECODE_ERRORS as exc:
        raise FormatError(f"invalid {kind} model: {exc}") from None
    raise FormatError(f"unknown model kind {kind!r}")


def dumps_model(model):
    return MAGIC + "\n" + json.dumps(model_to_dict(model), sort_keys=True) + "\n"


def loads_model(blob):
    if isinstance(blob, bytes):
        try:
            blob = blob.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"model file is not UTF-8: {exc}") from None
    head, sep, body = blob.partition("\n")
    if head != MAGIC:
        raise FormatError(f"bad magic {head[:16]!r}, expected {MAGIC!r}")
    if not sep:
        raise FormatError("model file truncated after magic line")
    try:
        obj = json.loads(body)
    except (ValueError, RecursionError) as exc:
        raise FormatError(f"model payload is not valid JSON: {exc}") from None
    return model_from_dict(obj)


def write_model(path, model):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def read_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
