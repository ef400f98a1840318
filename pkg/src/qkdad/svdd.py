"""Kernel SVDD baseline solved in the dual by Frank-Wolfe.

Dual problem over the capped simplex ``{0 <= a_i <= 1/(nu n), sum a = 1}``::

    max_a  sum_i a_i K_ii - sum_ij a_i a_j K_ij

The centre is ``sum_i a_i phi(x_i)``, never formed explicitly.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import NormStats, apply_normalizer, fit_normalizer
from .errors import InvalidConfigError, ShapeError

_FREE_TOL = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = None

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise InvalidConfigError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise InvalidConfigError(f"rbf gamma must be > 0, got {self.gamma}")


def kernel_eval(kind, gamma, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    if kind == "linear":
        return float(np.dot(x, y))
    if kind == "rbf":
        if gamma is None or not gamma > 0:
            raise InvalidConfigError(f"rbf gamma must be > 0, got {gamma}")
        diff = x - y
        return float(np.exp(-gamma * np.dot(diff, diff)))
    raise InvalidConfigError(f"unknown kernel {kind!r}")


def gram(spec, x, y):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature widths differ: {x.shape[1]} vs {y.shape[1]}")
    if spec.kind == "linear":
        return x @ y.T
    return kernels.rbf_gram(x, y, spec.gamma)


def default_gamma(x):
    """``1 / (d * var(x))`` over all entries of the training matrix."""
    var = float(np.var(x))
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


@dataclass
class SvddDualModel:
    alpha: np.ndarray
    kernel: KernelSpec
    support: np.ndarray
    r2: float
    offset: float
    nu: float
    normalizer: NormStats = None
    objective_trace: np.ndarray = field(default=None, repr=False)
    gap: float = float("nan")
    input_kind: str = ""

    @property
    def input_dim(self):
        return self.support.shape[1]

    @property
    def cap(self):
        return 1.0 / (self.nu * self.support.shape[0])


def svdd_fit(train_set, nu, kernel="rbf", iters=20000, tol=1e-13, normalize=False):
    x_raw = np.asarray(getattr(train_set, "features", train_set), dtype=np.float64)
    if x_raw.ndim != 2:
        raise ShapeError(f"training data must be 2-D, got shape {x_raw.shape}")
    n = x_raw.shape[0]
    if n < 2:
        raise InvalidConfigError(f"SVDD needs at least 2 training points, got {n}")
    if not 0.0 < nu <= 1.0:
        raise InvalidConfigError(f"nu must lie in (0, 1], got {nu}")
    if nu * n < 1.0 - 1e-12:
        raise InvalidConfigError(f"nu * n = {nu * n:g} < 1 makes the box 1/(nu n) exceed 1")
    if int(iters) < 1:
        raise InvalidConfigError(f"iters must be >= 1, got {iters}")
    normalizer = fit_normalizer(x_raw) if normalize else NormStats.identity(x_raw.shape[1])
    x = apply_normalizer(normalizer, x_raw)
    spec = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    if spec.kind == "rbf" and spec.gamma is None:
        spec = KernelSpec("rbf", default_gamma(x))

    kmat = np.ascontiguousarray(gram(spec, x, x))
    cap = min(1.0, 1.0 / (nu * n))
    alpha0 = np.full(n, 1.0 / n)
    alpha, trace, gap = kernels.fw_capped_simplex(kmat, cap, alpha0, int(iters), tol, 50)

    ka = kmat @ alpha
    offset = float(alpha @ ka)
    d2 = np.diag(kmat) - 2.0 * ka + offset
    free = (alpha > _FREE_TOL) & (alpha < cap - _FREE_TOL)
    if free.any():
        r2 = float(np.median(d2[free]))
    else:
        # no free SV: the KKT interval for R^2 tops out at the closest bounded SV
        bounded = alpha >= cap - _FREE_TOL
        r2 = float(d2[bounded].min()) if bounded.any() else float(d2.max())
    return SvddDualModel(alpha, spec, x, max(r2, 0.0), offset, float(nu), normalizer,
                         trace, float(gap))


def svdd_dual_objective(kmat, alpha):
    return float(alpha @ np.diag(kmat) - alpha @ kmat @ alpha)


def svdd_score(model, x):
    """Kernel distance to the centre minus ``R^2``; positive means anomalous."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"input of shape {x.shape} does not match model input dim {model.input_dim}")
    z = apply_normalizer(model.normalizer, x)
    cross = gram(model.kernel, z, model.support)
    if model.kernel.kind == "linear":
        self_k = np.einsum("ij,ij->i", z, z)
    else:
        self_k = np.ones(z.shape[0])
    s = self_k - 2.0 * (cross @ model.alpha) + model.offset - model.r2
    return float(s[0]) if single else s
