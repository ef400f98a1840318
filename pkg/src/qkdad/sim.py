"""Synthetic QKD telemetry with controlled attack signatures.

Every generator is a pure function of ``(profile, stream)``: the random
stream is ``SeedSequence(profile.seed, spawn_key=(stream,))``, so distinct
stream ids drawn from one master seed are independent and individually
reproducible. Attack generators with their attack parameters zeroed run
exactly the normal code path (on their own stream).
"""
from dataclasses import dataclass, field, fields, replace
import math
import warnings

import numpy as np

from . import kernels
from .data import WINDOW_SIZES, RECORD_FIELDS
from .errors import DegenerateAttackWarning, EmptyDataError, InvalidConfigError

CYCLE_NS = 100.0

STREAM_CONFIG_NORMAL = 1
STREAM_CONFIG_CALIB = 2
STREAM_TS_NORMAL = 3
STREAM_TS_MUTED = 4

BASES = ("H", "V", "D", "A")


@dataclass
class SimProfile:
    seed: int = 0
    # calibration stage
    gate_mu: float = 42.0
    gate_sigma: float = 0.3
    pc_nominal: tuple = (1.20, 2.50, 0.80, 3.10)
    pc_sigma: float = 0.05
    # post-processing statistics
    sifted_key_mean: float = 50000.0
    sifted_key_sigma: float = 1500.0
    signal_decoy_ratio: float = 2.0
    signal_decoy_ratio_sigma: float = 0.05
    eff_signal: float = 0.10
    eff_decoy: float = 0.06
    eff_vacuum: float = 0.001
    eff_sigma: float = 0.003
    qber_nominal: float = 0.02
    qber_sigma: float = 0.004
    ec_efficiency: float = 1.16
    pa_sigma: float = 0.005
    # calibration attack
    calib_gate_shift: float = 1.5
    calib_qber_inflation: float = 0.03
    calib_inflated_bases: tuple = ("H", "V")
    # muted attack
    muted_centers: tuple = (20.0, 60.0)
    muted_width: float = 1.0
    muted_weight: float = 0.3
    sort_windows: bool = True

    def __post_init__(self):
        self.pc_nominal = tuple(float(v) for v in self.pc_nominal)
        self.calib_inflated_bases = tuple(self.calib_inflated_bases)
        self.muted_centers = tuple(float(v) for v in self.muted_centers)
        self.validate()

    def validate(self):
        for name in ("gate_sigma", "pc_sigma", "sifted_key_sigma", "signal_decoy_ratio_sigma",
                     "eff_sigma", "qber_sigma", "pa_sigma", "muted_width"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if len(self.pc_nominal) != 4:
            raise InvalidConfigError("pc_nominal needs 4 values")
        if not 0.0 <= self.muted_weight <= 1.0:
            raise InvalidConfigError(f"muted_weight must lie in [0, 1], got {self.muted_weight}")
        if not self.muted_centers:
            raise InvalidConfigError("muted_centers is empty")
        for c in self.muted_centers:
            if not 0.0 <= c < CYCLE_NS:
                raise InvalidConfigError(f"muted centre {c} outside [0, {CYCLE_NS:g})")
        for b in self.calib_inflated_bases:
            if b not in BASES:
                raise InvalidConfigError(f"unknown basis {b!r}")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


def profile_fields():
    return {f.name: f for f in fields(SimProfile)}


def stream_rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


@dataclass
class TelemetryRecord:
    gate_timing: float
    pc_settings: tuple
    sifted_key_count: int
    signal_decoy_detection_ratio: float
    detection_efficiency_signal: float
    detection_efficiency_decoy: float
    detection_efficiency_vacuum: float
    qber_basis_H: float
    qber_basis_V: float
    qber_basis_D: float
    qber_basis_A: float
    qber_overall: float
    privacy_amp_factor: float

    def as_vector(self):
        return [self.gate_timing, *self.pc_settings, float(self.sifted_key_count),
                self.signal_decoy_detection_ratio, self.detection_efficiency_signal,
                self.detection_efficiency_decoy, self.detection_efficiency_vacuum,
                self.qber_basis_H, self.qber_basis_V, self.qber_basis_D, self.qber_basis_A,
                self.qber_overall, self.privacy_amp_factor]

    @classmethod
    def from_vector(cls, v):
        if len(v) != len(RECORD_FIELDS):
            raise ValueError(f"record vector needs {len(RECORD_FIELDS)} values, got {len(v)}")
        v = [float(a) for a in v]
        return cls(v[0], tuple(v[1:5]), int(round(v[5])), *v[6:])


def _binary_entropy(q):
    q = np.clip(q, 1e-12, 1 - 1e-12)
    return -q * np.log2(q) - (1 - q) * np.log2(1 - q)


def _check_count(n):
    if int(n) != n or n < 1:
        raise EmptyDataError(f"need a positive count of samples, got {n}")
    return int(n)


def _records(n, profile, rng, gate_shift, inflation):
    gate = np.clip(rng.normal(profile.gate_mu + gate_shift, profile.gate_sigma, n),
                   0.0, np.nextafter(CYCLE_NS, 0.0))
    pc = rng.normal(profile.pc_nominal, profile.pc_sigma, (n, 4))
    sifted = np.maximum(np.rint(rng.normal(profile.sifted_key_mean, profile.sifted_key_sigma, n)), 0)
    ratio = rng.normal(profile.signal_decoy_ratio, profile.signal_decoy_ratio_sigma, n)
    eff = np.clip(rng.normal((profile.eff_signal, profile.eff_decoy, profile.eff_vacuum),
                             (profile.eff_sigma, profile.eff_sigma, profile.eff_sigma / 10), (n, 3)),
                  0.0, 1.0)
    bump = np.array([inflation if b in profile.calib_inflated_bases else 0.0 for b in BASES])
    qber = np.clip(rng.normal(profile.qber_nominal, profile.qber_sigma, (n, 4)) + bump, 0.0, 1.0)
    overall = qber.mean(axis=1)
    pa = 1.0 - (1.0 + profile.ec_efficiency) * _binary_entropy(overall)
    pa = np.clip(pa + rng.normal(0.0, profile.pa_sigma, n), 1e-6, 1.0)
    return [TelemetryRecord(float(gate[i]), tuple(float(v) for v in pc[i]), int(sifted[i]),
                            float(ratio[i]), float(eff[i, 0]), float(eff[i, 1]), float(eff[i, 2]),
                            *(float(v) for v in qber[i]), float(overall[i]), float(pa[i]))
            for i in range(n)]


def gen_config_normal(n, profile=None, stream=STREAM_CONFIG_NORMAL):
    profile = profile or SimProfile()
    n = _check_count(n)
    return _records(n, profile, stream_rng(profile.seed, stream), 0.0, 0.0)


def gen_config_calibration_attack(n, profile=None, stream=STREAM_CONFIG_CALIB):
    """Records with the gate timing shifted and the inflated bases' QBER raised."""
    profile = profile or SimProfile()
    n = _check_count(n)
    if profile.calib_gate_shift == 0.0:
        warnings.warn("calibration attack with zero gate shift", DegenerateAttackWarning, stacklevel=2)
    return _records(n, profile, stream_rng(profile.seed, stream),
                    profile.calib_gate_shift, profile.calib_qber_inflation)


def _check_window(window_size, allow_any_size):
    if int(window_size) != window_size or window_size < 1:
        raise InvalidConfigError(f"window size must be a positive integer, got {window_size}")
    if not allow_any_size and window_size not in WINDOW_SIZES:
        raise InvalidConfigError(f"window size {window_size} not in {WINDOW_SIZES} "
                                 "(pass allow_any_size=True to override)")
    return int(window_size)


def _finish(ts, profile):
    if profile.sort_windows:
        ts.sort(axis=1)
    return ts


def gen_timestamps_normal(n_windows, window_size, profile=None, stream=STREAM_TS_NORMAL,
                          allow_any_size=False):
    """Uniform detection times over one cycle, shape ``(n_windows, window_size)``."""
    profile = profile or SimProfile()
    n = _check_count(n_windows)
    size = _check_window(window_size, allow_any_size)
    rng = stream_rng(profile.seed, stream)
    return _finish(rng.uniform(0.0, CYCLE_NS, (n, size)), profile)


def _truncated_normal(rng, centers, width, count):
    out = np.empty(count)
    todo = np.arange(count)
    mu = np.asarray(centers)
    while todo.size:
        draw = rng.normal(mu[rng.integers(0, mu.size, todo.size)], width)
        ok = (draw >= 0.0) & (draw < CYCLE_NS)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return out


def gen_timestamps_muted_attack(n_windows, window_size, profile=None, stream=STREAM_TS_MUTED,
                                allow_any_size=False):
    """Each detection is concentrated near a profile centre with prob. ``muted_weight``."""
    profile = profile or SimProfile()
    n = _check_count(n_windows)
    size = _check_window(window_size, allow_any_size)
    rng = stream_rng(profile.seed, stream)
    ts = rng.uniform(0.0, CYCLE_NS, (n, size))
    if profile.muted_weight == 0.0:
        warnings.warn("muted attack with zero mixture weight", DegenerateAttackWarning, stacklevel=2)
        return _finish(ts, profile)
    hit = rng.random((n, size)) < profile.muted_weight
    ts[hit] = _truncated_normal(rng, profile.muted_centers, profile.muted_width, int(hit.sum()))
    return _finish(ts, profile)


def histogram(windows, bin_ns=0.1):
    """Counts of all timestamps per ``[k*bin, (k+1)*bin)`` bin over one cycle."""
    if not bin_ns > 0:
        raise InvalidConfigError(f"bin width must be > 0, got {bin_ns}")
    n_bins = int(round(CYCLE_NS / bin_ns))
    if n_bins < 1 or not math.isclose(n_bins * bin_ns, CYCLE_NS, rel_tol=0, abs_tol=1e-9):
        raise InvalidConfigError(f"bin width {bin_ns} does not divide the {CYCLE_NS:g} ns cycle")
    if isinstance(windows, np.ndarray):
        values = windows.ravel()
    else:
        windows = list(windows)
        values = np.concatenate([np.ravel(w) for w in windows]) if windows else np.empty(0)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.size and (values.min() < 0.0 or values.max() >= CYCLE_NS):
        raise InvalidConfigError("timestamps must lie in [0, 100) ns")
    return kernels.bin_counts(values, float(bin_ns), n_bins)
