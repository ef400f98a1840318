"""Bias-free MLP with leaky-ReLU hidden layers, manual backprop and Adam.

Training uses BLAS matmuls (:func:`forward` / :func:`backward`); inference
uses :func:`predict`, which goes through the row-stable dense kernel so that a
row's output never depends on the batch it was scored in.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CacheInvalidError, InvalidArchitectureError, NumericError, ShapeError

DEFAULT_SLOPE = 0.1


@dataclass
class NetworkParams:
    layer_dims: tuple
    weights: list
    slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        if len(self.weights) != len(self.layer_dims) - 1:
            raise InvalidArchitectureError(
                f"{len(self.layer_dims)} layer dims need {len(self.layer_dims) - 1} "
                f"weight matrices, got {len(self.weights)}")
        for ell, w in enumerate(self.weights):
            expected = (self.layer_dims[ell + 1], self.layer_dims[ell])
            if w.shape != expected:
                raise InvalidArchitectureError(f"layer {ell}: weight shape {w.shape}, expected {expected}")

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def copy(self):
        return NetworkParams(self.layer_dims, [w.copy() for w in self.weights], self.slope)


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations recorded by :func:`forward`."""
    inputs: list
    pre: list
    params_id: int
    weight_ids: tuple

    @property
    def depth(self):
        return len(self.pre)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls([np.zeros_like(w) for w in params.weights],
                   [np.zeros_like(w) for w in params.weights], 0, beta1, beta2, eps)


def _check_dims(layer_dims):
    dims = list(layer_dims)
    if len(dims) < 2:
        raise InvalidArchitectureError(f"need at least input and output dims, got {dims}")
    if any(int(d) != d or d < 1 for d in dims):
        raise InvalidArchitectureError(f"all layer dims must be positive integers, got {dims}")
    return [int(d) for d in dims]


def mlp_init(layer_dims, seed, slope=DEFAULT_SLOPE):
    """Glorot-uniform weights, limit ``sqrt(6 / (fan_in + fan_out))`` per matrix."""
    dims = _check_dims(layer_dims)
    if len(dims) < 3:
        raise InvalidArchitectureError(f"at least one hidden layer is required, got {dims}")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
    return NetworkParams(tuple(dims), weights, slope)


def _as_batch(params, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"batch shape {x.shape} does not match input dim {params.input_dim}")
    return x


def forward(params, batch):
    """Return ``(latent, cache)`` for a batch of shape ``(n, d)``."""
    h = _as_batch(params, batch)
    inputs, pre = [], []
    last = params.n_layers - 1
    for ell, w in enumerate(params.weights):
        inputs.append(h)
        a = h @ w.T
        pre.append(a)
        h = a if ell == last else np.where(a > 0.0, a, params.slope * a)
    cache = ForwardCache(inputs, pre, id(params), tuple(id(w) for w in params.weights))
    return h, cache


def backward(params, cache, latent_grad):
    """Gradients of a loss w.r.t. every weight matrix, given dLoss/dlatent."""
    if (cache.params_id != id(params) or cache.depth != params.n_layers
            or cache.weight_ids != tuple(id(w) for w in params.weights)):
        raise CacheInvalidError("forward cache was produced by different parameters")
    delta = np.asarray(latent_grad, dtype=np.float64)
    if delta.shape != cache.pre[-1].shape:
        raise ShapeError(f"latent grad shape {delta.shape} != latent shape {cache.pre[-1].shape}")
    grads = [None] * params.n_layers
    for ell in range(params.n_layers - 1, -1, -1):
        if ell != params.n_layers - 1:
            delta = delta * np.where(cache.pre[ell] > 0.0, 1.0, params.slope)
        grads[ell] = delta.T @ cache.inputs[ell]
        if ell:
            delta = delta @ params.weights[ell]
    return grads


def predict(params, batch):
    """Inference forward pass; row results are independent of batch size."""
    h = _as_batch(params, batch)
    last = params.n_layers - 1
    for ell, w in enumerate(params.weights):
        h = kernels.dense_rows(h, w, params.slope, ell != last)
    return h


def adam_step(params, grads, state, lr):
    """One in-place Adam update with bias correction. Returns ``(params, state)``."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(grads) != params.n_layers:
        raise ShapeError("one gradient per weight matrix is required")
    for ell, g in enumerate(grads):
        if g.shape != params.weights[ell].shape:
            raise ShapeError(f"layer {ell}: grad shape {g.shape} != weight shape {params.weights[ell].shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericError(f"layer {ell}: {bad} non-finite gradient entries at step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for w, g, m, v in zip(params.weights, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        w -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params, state


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_nan: int = 0
    worst_index: tuple = field(default=None)

    def __float__(self):
        return float(self.max_rel_error)


def grad_check(params, loss_fn, grad_fn, h=1e-5):
    """Compare analytic gradients to central differences on every weight.

    ``loss_fn(params)`` returns the scalar loss and ``grad_fn(params)`` the
    analytic gradients (one array per weight matrix). The relative error per
    entry is ``|a - n| / max(|a|, |n|, 1e-12)``; non-finite entries are
    counted in ``n_nan`` instead of poisoning the maximum.
    """
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    analytic = grad_fn(params)
    worst, worst_idx, n_nan, count = 0.0, None, 0, 0
    for ell, w in enumerate(params.weights):
        flat = w.reshape(-1)
        a_flat = np.asarray(analytic[ell]).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn(params)
            flat[k] = orig - h
            down = loss_fn(params)
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            a = a_flat[k]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            count += 1
            if not np.isfinite(err):
                n_nan += 1
                continue
            if err > worst:
                worst, worst_idx = err, (ell, k)
    return GradCheckResult(worst, count, n_nan, worst_idx)
