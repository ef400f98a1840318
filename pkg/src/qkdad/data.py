"""Featurisation, normalisation, 1:1 test mixing and the dataset file format.

Dataset files are UTF-8 text::

    # provenance text
    f0,f1,...,f{D-1}[,label]
    0.12345678901234566,...[,0|1]

Floats are written with 17 significant digits so a write/read round trip is
bitwise exact.
"""
from dataclasses import dataclass, field
import os

import numpy as np

from .errors import EmptyDataError, ParseError, ShapeError

RECORD_FIELDS = (
    "gate_timing",
    "pc_setting_1",
    "pc_setting_2",
    "pc_setting_3",
    "pc_setting_4",
    "sifted_key_count",
    "signal_decoy_detection_ratio",
    "detection_efficiency_signal",
    "detection_efficiency_decoy",
    "detection_efficiency_vacuum",
    "qber_basis_H",
    "qber_basis_V",
    "qber_basis_D",
    "qber_basis_A",
    "qber_overall",
    "privacy_amp_factor",
)
RECORD_WIDTH = len(RECORD_FIELDS)
WINDOW_SIZES = (100, 225, 400)

_SIGMA_FLOOR = 1e-12


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray = None
    provenance: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {x.shape}")
        self.features = x
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise ShapeError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} rows")
            if y.size and not np.isin(y, (0, 1)).all():
                raise ValueError("labels must be 0 (normal) or 1 (anomalous)")
            self.labels = y.astype(np.int64)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def labelled(self):
        return self.labels is not None


@dataclass
class NormStats:
    """Per-feature affine normaliser.

    ``mode == "minmax"``: ``shift`` is the column min, ``scale`` the column max.
    ``mode == "zscore"``: ``shift`` is the mean, ``scale`` the std.
    """
    mode: str
    shift: np.ndarray
    scale: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.mode not in ("minmax", "zscore"):
            raise ValueError(f"unknown normaliser mode {self.mode!r}")
        self.shift = np.asarray(self.shift, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.shift.shape != self.scale.shape or self.shift.ndim != 1:
            raise ShapeError("normaliser vectors must be 1-D and of equal length")
        if self.mode == "minmax" and np.any(self.scale < self.shift):
            raise ValueError("min-max stats need max >= min per feature")
        if self.mode == "zscore" and np.any(self.scale < 0):
            raise ValueError("z-score stats need std >= 0")

    @property
    def dim(self):
        return self.shift.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls("minmax", np.zeros(dim), np.ones(dim))


def fit_normalizer(train, mode="minmax"):
    x = train.features if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataError("cannot fit a normaliser on an empty training set")
    if mode == "minmax":
        return NormStats(mode, x.min(axis=0), x.max(axis=0))
    if mode == "zscore":
        return NormStats(mode, x.mean(axis=0), x.std(axis=0))
    raise ValueError(f"unknown normaliser mode {mode!r}")


def apply_normalizer(stats, x):
    """Normalise rows of ``x``. Values outside the training range are not clipped."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.dim:
        raise ShapeError(f"input width {x.shape[-1]} != normaliser width {stats.dim}")
    if stats.mode == "minmax":
        span = stats.scale - stats.shift
        flat = span == 0
        out = (x - stats.shift) / np.where(flat, 1.0, span)
        if flat.any():
            out = np.where(flat, 0.5, out)
        return out
    return (x - stats.shift) / np.maximum(stats.scale, _SIGMA_FLOOR)


def invert_normalizer(stats, z):
    z = np.asarray(z, dtype=np.float64)
    if stats.mode == "minmax":
        span = stats.scale - stats.shift
        return np.where(span == 0, stats.shift, z * span + stats.shift)
    return z * np.maximum(stats.scale, _SIGMA_FLOOR) + stats.shift


def featurize_records(records, provenance=""):
    records = list(records)
    if not records:
        raise EmptyDataError("no telemetry records to featurize")
    return Dataset(np.array([r.as_vector() for r in records], dtype=np.float64), None, provenance)


def featurize_windows(windows, provenance=""):
    if isinstance(windows, np.ndarray) and windows.ndim == 2:
        return Dataset(windows.astype(np.float64, copy=True), None, provenance)
    rows = [np.asarray(w, dtype=np.float64) for w in windows]
    if not rows:
        raise EmptyDataError("no timestamp windows to featurize")
    sizes = {r.shape for r in rows}
    if len(sizes) != 1 or rows[0].ndim != 1:
        raise ShapeError(f"windows must share one length, got {sorted(s[0] for s in sizes)}")
    return Dataset(np.vstack(rows), None, provenance)


def mix_test_set(normal, anomalous, seed):
    """Equal numbers of normal (0) and anomalous (1) rows, shuffled by ``seed``."""
    if len(normal) == 0 or len(anomalous) == 0:
        raise EmptyDataError("both classes need at least one row")
    if normal.dim != anomalous.dim:
        raise ShapeError(f"feature dims differ: {normal.dim} vs {anomalous.dim}")
    m = min(len(normal), len(anomalous))
    x = np.vstack([normal.features[:m], anomalous.features[:m]])
    y = np.concatenate([np.zeros(m, dtype=np.int64), np.ones(m, dtype=np.int64)])
    perm = np.random.default_rng(seed).permutation(2 * m)
    prov = f"mix seed={seed} normal=[{normal.provenance}] anomalous=[{anomalous.provenance}]"
    return Dataset(x[perm], y[perm], prov)


# -- file format -------------------------------------------------------------------

def _fmt(v):
    return "%.17g" % v


def write_dataset(path, dataset):
    d = dataset.dim
    header = [f"f{j}" for j in range(d)]
    if dataset.labelled:
        header.append("label")
    prov = " ".join(dataset.provenance.splitlines())
    lines = [f"# {prov}", ",".join(header)]
    x = dataset.features
    for i in range(len(dataset)):
        row = [_fmt(v) for v in x[i]]
        if dataset.labelled:
            row.append(str(int(dataset.labels[i])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_dataset(text):
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    provenance = ""
    idx = 0
    if idx < len(lines) and lines[idx].startswith("#"):
        provenance = lines[idx][1:].strip()
        idx += 1
    if idx >= len(lines):
        raise ParseError("missing header row", idx + 1)
    header = lines[idx].strip().split(",")
    labelled = header[-1] == "label"
    names = header[:-1] if labelled else header
    if not names or names != [f"f{j}" for j in range(len(names))]:
        raise ParseError(f"header must read f0,...,f{{D-1}}[,label], got {lines[idx][:60]!r}", idx + 1)
    d = len(names)
    width = d + 1 if labelled else d
    rows, labels = [], []
    for lineno in range(idx + 2, len(lines) + 1):
        raw = lines[lineno - 1]
        if raw.startswith("#"):
            continue
        parts = raw.strip().split(",")
        if len(parts) != width:
            raise ParseError(f"expected {width} fields, found {len(parts)}", lineno)
        try:
            vals = [float(p) for p in parts[:d]]
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", lineno) from None
        if labelled:
            if parts[d] not in ("0", "1"):
                raise ParseError(f"label must be 0 or 1, got {parts[d]!r}", lineno)
            labels.append(int(parts[d]))
        rows.append(vals)
    x = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    return Dataset(x, np.array(labels, dtype=np.int64) if labelled else None, provenance)


def read_dataset(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = blob[:exc.start].count(b"\n") + 1
        raise ParseError("invalid UTF-8", line) from None
    return parse_dataset(text)


def ensure_dir(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
