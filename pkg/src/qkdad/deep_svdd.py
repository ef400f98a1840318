"""Soft-boundary Deep SVDD: fixed centre, quantile radius, hinge objective.

Scores are anomaly-positive: ``||phi(x) - c||^2 - R^2`` is > 0 outside the
hypersphere and < 0 inside it.
"""
from dataclasses import dataclass, field, asdict, replace
import math

import numpy as np

from . import kernels, nn
from .data import NormStats, apply_normalizer, fit_normalizer
from .errors import EmptyDataError, InvalidConfigError, NumericError, ShapeError

NORMAL = "normal"
ANOMALOUS = "anomalous"

CENTER_EPS = 0.1

# SeedSequence spawn keys for the independent training streams
_STREAM_INIT = 0
_STREAM_SHUFFLE = 1


def default_architecture(input_dim):
    if input_dim >= 64:
        return (input_dim, 128, 64, 32)
    return (input_dim, 32, 16, 8)


@dataclass
class TrainConfig:
    nu: float = 0.05
    weight_decay: float = 1e-6
    lr: float = 1e-4
    batch_size: int = 128
    epochs: int = 150
    radius_update_period: int = 5
    seed: int = 0
    architecture: tuple = None
    slope: float = nn.DEFAULT_SLOPE
    norm_mode: str = "minmax"

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise InvalidConfigError(f"nu must lie in (0, 1], got {self.nu}")
        if self.weight_decay < 0:
            raise InvalidConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not self.lr > 0:
            raise InvalidConfigError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise InvalidConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.radius_update_period < 1:
            raise InvalidConfigError(f"radius_update_period must be >= 1, got {self.radius_update_period}")
        if self.norm_mode not in ("minmax", "zscore"):
            raise InvalidConfigError(f"norm_mode must be minmax or zscore, got {self.norm_mode!r}")
        if self.architecture is not None:
            self.architecture = tuple(int(d) for d in self.architecture)

    def to_dict(self):
        d = asdict(self)
        d["architecture"] = list(self.architecture) if self.architecture is not None else None
        return d


@dataclass
class Hypersphere:
    center: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.radius = float(self.radius)
        if not self.radius >= 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")

    @property
    def r2(self):
        return self.radius * self.radius


@dataclass
class DeepSvddModel:
    params: nn.NetworkParams
    sphere: Hypersphere
    normalizer: NormStats
    config: TrainConfig
    loss_trace: list = field(default_factory=list)
    input_kind: str = ""

    @property
    def input_dim(self):
        return self.params.input_dim


def init_center(params, train_set, eps=CENTER_EPS):
    """Mean latent of the training set with coordinates pushed away from zero."""
    x = np.asarray(train_set, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise EmptyDataError("cannot initialise the centre from an empty training set")
    c = nn.predict(params, x).mean(axis=0)
    small = np.abs(c) < eps
    c[small] = np.where(c[small] < 0, -eps, eps)
    return c


def soft_boundary_loss(params, batch, sphere, nu, weight_decay, n_batch=None):
    """Objective value, weight gradients and per-point squared distances.

    ``R`` is held fixed; only points strictly outside the sphere feed the
    gradient. Weight decay is ``weight_decay / 2 * sum ||W||_F^2``.
    """
    if not nu > 0:
        raise InvalidConfigError(f"nu must be > 0, got {nu}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataError("loss needs a non-empty 2-D batch")
    if n_batch is None:
        n_batch = x.shape[0]
    z, cache = nn.forward(params, x)
    diff = z - sphere.center
    d2 = np.einsum("ij,ij->i", diff, diff)
    r2 = sphere.r2
    excess = d2 - r2
    active = excess > 0.0
    scale = 1.0 / (nu * n_batch)
    decay = 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in params.weights)
    loss = r2 + float(np.sum(excess[active])) / (nu * n_batch) + decay
    grads = nn.backward(params, cache, (2.0 * scale) * diff * active[:, None])
    if weight_decay:
        grads = [g + weight_decay * w for g, w in zip(grads, params.weights)]
    return loss, grads, d2


def soft_boundary_objective(params, batch, sphere, nu, weight_decay, n_batch=None):
    """Value of the soft-boundary objective alone (no backward pass)."""
    if not nu > 0:
        raise InvalidConfigError(f"nu must be > 0, got {nu}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataError("loss needs a non-empty 2-D batch")
    n_batch = x.shape[0] if n_batch is None else n_batch
    z, _ = nn.forward(params, x)
    diff = z - sphere.center
    excess = np.einsum("ij,ij->i", diff, diff) - sphere.r2
    decay = 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in params.weights)
    return sphere.r2 + float(np.sum(excess[excess > 0.0])) / (nu * n_batch) + decay


def radius_rank(n, nu):
    """1-based nearest rank of the (1 - nu)-quantile, clamped to [1, n]."""
    k = n - math.floor(nu * n + 1e-9)
    return min(max(k, 1), n)


def update_radius(distances2, nu):
    d2 = np.asarray(distances2, dtype=np.float64).ravel()
    if d2.size == 0:
        raise EmptyDataError("radius update needs at least one distance")
    if np.any(d2 < 0):
        raise ValueError("squared distances must be non-negative")
    k = radius_rank(d2.size, nu)
    q = float(np.partition(d2, k - 1)[k - 1])
    r = math.sqrt(q)
    # sqrt can round down; keep R*R >= q so the k-th point is never strictly outside
    while r * r < q:
        r = math.nextafter(r, math.inf)
    return r


def _latent_sq_dists(params, center, x):
    return kernels.sq_dists(nn.predict(params, x), center)


def train(train_set, config=None, input_kind="", log=None):
    """Fit a model on normal data only. ``train_set`` is a matrix or Dataset."""
    config = config or TrainConfig()
    x_raw = getattr(train_set, "features", train_set)
    x_raw = np.asarray(x_raw, dtype=np.float64)
    if x_raw.ndim != 2:
        raise ShapeError(f"training data must be a 2-D matrix, got shape {x_raw.shape}")
    n, d = x_raw.shape
    if n == 0:
        raise EmptyDataError("training set is empty")
    arch = config.architecture or default_architecture(d)
    if arch[0] != d:
        raise ShapeError(f"architecture input dim {arch[0]} != data dim {d}")
    config = replace(config, architecture=tuple(arch))

    normalizer = fit_normalizer(x_raw, config.norm_mode)
    x = apply_normalizer(normalizer, x_raw)

    ss = np.random.SeedSequence(config.seed)
    init_seed, shuffle_seed = ss.spawn(2)
    params = nn.mlp_init(arch, np.random.default_rng(init_seed), config.slope)
    rng = np.random.default_rng(shuffle_seed)
    sphere = Hypersphere(init_center(params, x), 0.0)
    state = nn.AdamState.zeros_like(params)

    trace = []
    bs = config.batch_size
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, bs):
            xb = x[perm[start:start + bs]]
            loss, grads, _ = soft_boundary_loss(params, xb, sphere, config.nu,
                                                config.weight_decay, xb.shape[0])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {state.t + 1}")
            nn.adam_step(params, grads, state, config.lr)
            total += loss
            batches += 1
        trace.append(total / batches)
        if (epoch + 1) % config.radius_update_period == 0:
            sphere.radius = update_radius(_latent_sq_dists(params, sphere.center, x), config.nu)
        if log is not None:
            log(epoch, trace[-1], sphere.radius)
    return DeepSvddModel(params, sphere, normalizer, config, trace, input_kind)


def _rows(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"input of shape {x.shape} does not match model input dim {model.input_dim}")
    return x, single


def score_batch(model, x):
    x, _ = _rows(model, x)
    z = apply_normalizer(model.normalizer, x)
    return _latent_sq_dists(model.params, model.sphere.center, z) - model.sphere.r2


def score(model, x):
    x, single = _rows(model, x)
    s = score_batch(model, x)
    return float(s[0]) if single else s


def classify(model, x, tau=0.0):
    if not math.isfinite(tau):
        raise ValueError(f"threshold must be finite, got {tau}")
    s = score(model, x)
    if np.ndim(s) == 0:
        return ANOMALOUS if s > tau else NORMAL
    return [ANOMALOUS if v > tau else NORMAL for v in s]


def quantile_threshold(scores, q):
    """Nearest-rank ``q``-quantile of validation scores, used as an alert threshold.

    With ``q = 1 - nu`` at most ``ceil(nu * n)`` of the given scores exceed it.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if s.size == 0:
        raise EmptyDataError("no validation scores")
    if not 0.0 <= q <= 1.0:
        raise InvalidConfigError(f"quantile must lie in [0, 1], got {q}")
    return float(s[radius_rank(s.size, 1.0 - q) - 1])
