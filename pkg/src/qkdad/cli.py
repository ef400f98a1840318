"""Command-line entry point: simulate, train, eval, score, monitor, histogram.

Exit codes: 0 clean, 1 usage/config error, 2 anomalies detected,
3 runtime/data error.
"""
import argparse
import contextlib
from dataclasses import dataclass, field, fields, replace
import hashlib
import json
import logging
import math
import sys
import warnings

import numpy as np

from . import deep_svdd, experiments, modelio, sim, svdd
from .data import (RECORD_WIDTH, Dataset, featurize_records, featurize_windows,
                   read_dataset, write_dataset)
from .errors import DegenerateAttackWarning, InvalidConfigError, QkdAdError, StreamError
from .evaluation import format_trial_stats, repeated_eval

log = logging.getLogger("qkdad")

EXIT_OK, EXIT_USAGE, EXIT_ANOMALY, EXIT_RUNTIME = 0, 1, 2, 3

VERBS = ("simulate", "train", "eval", "score", "monitor", "histogram")
SIM_KINDS = ("config-normal", "config-calib", "ts-normal", "ts-muted")


# -- configuration -------------------------------------------------------------------

def _bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v):
    return int(v.strip())


def _float(v):
    out = float(v.strip())
    if not math.isfinite(out):
        raise ValueError(f"not a finite number: {v!r}")
    return out


def _float_list(v):
    return tuple(_float(p) for p in v.split(",") if p.strip())


def _int_list(v):
    return tuple(_int(p) for p in v.split(",") if p.strip())


def _str_list(v):
    return tuple(p.strip() for p in v.split(",") if p.strip())


def _tau(v):
    v = v.strip()
    if v.startswith("quantile:"):
        q = _float(v[len("quantile:"):])
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"quantile must lie in [0, 1], got {q}")
        return v
    _float(v)
    return v


def _choice(*options):
    def parse(v):
        v = v.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


_TRAIN_KEYS = {
    "nu": _float, "weight_decay": _float, "lr": _float, "batch_size": _int, "epochs": _int,
    "radius_update_period": _int, "architecture": _int_list, "slope": _float,
    "norm_mode": _choice("minmax", "zscore"),
}

_PROFILE_KEYS = {}
for _f in fields(sim.SimProfile):
    if _f.name == "seed":
        continue
    if _f.name in ("pc_nominal", "muted_centers"):
        _PROFILE_KEYS[_f.name] = _float_list
    elif _f.name == "calib_inflated_bases":
        _PROFILE_KEYS[_f.name] = _str_list
    elif _f.name == "sort_windows":
        _PROFILE_KEYS[_f.name] = _bool
    else:
        _PROFILE_KEYS[_f.name] = _float

_RUN_KEYS = {
    "seed": _int, "eval_seed": _int, "kind": _choice(*SIM_KINDS), "n": _int, "window": _int,
    "label": _bool, "data": str, "model": str, "model_out": str, "out": str, "in": str,
    "stdin": _bool, "validation": str, "tau": _tau, "trials": _int, "n_train": _int,
    "test_per_class": _int, "bin": _float, "model_kind": _choice("deep", "svdd"),
    "svdd_kernel": _choice("rbf", "linear"), "svdd_gamma": _float, "svdd_iters": _int,
    "log_level": _choice("debug", "info", "warning", "error"),
}

KEY_TYPES = {**_RUN_KEYS, **_TRAIN_KEYS, **_PROFILE_KEYS}

_REQUIRED = {
    "simulate": ("kind", "n", "out"),
    "train": ("data", "model_out"),
    "eval": ("model", "out"),
    "score": ("model", "data"),
    "monitor": ("model",),
    "histogram": ("data", "out"),
}

_DEFAULTS = {
    "seed": 0, "eval_seed": 12345, "window": 400, "label": False, "trials": 100,
    "test_per_class": 200, "bin": 0.1, "model_kind": "deep", "svdd_kernel": "rbf",
    "svdd_iters": 2000, "tau": "0", "stdin": False, "log_level": "warning",
}


@dataclass
class RunConfig:
    verb: str
    values: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, _DEFAULTS.get(key, default))

    def train_config(self):
        kw = {k: self.values[k] for k in _TRAIN_KEYS if k in self.values}
        kw["seed"] = self.get("seed")
        return deep_svdd.TrainConfig(**kw)

    def profile(self):
        kw = {k: self.values[k] for k in _PROFILE_KEYS if k in self.values}
        return sim.SimProfile(seed=self.get("seed"), **kw)


def _convert(key, raw, where):
    if key not in KEY_TYPES:
        raise InvalidConfigError(f"{where}: unknown key {key!r}")
    try:
        return KEY_TYPES[key](raw)
    except ValueError as exc:
        raise InvalidConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def parse_config_text(text, source="<config>"):
    """``key = value`` lines with ``#`` comments into a dict of typed values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidConfigError(f"{source} line {lineno}: expected 'key = value'")
        out[key] = _convert(key, value.strip(), f"{source} line {lineno}")
    return out


def parse_config(verb, config_text=None, overrides=None, source="<config>"):
    """Resolve defaults < config file < flag overrides into a RunConfig."""
    if verb not in VERBS:
        raise InvalidConfigError(f"unknown verb {verb!r}")
    values, sources = {}, {}
    if config_text is not None:
        for k, v in parse_config_text(config_text, source).items():
            values[k], sources[k] = v, source
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        values[k] = _convert(k, v, f"flag --{k.replace('_', '-')}") if isinstance(v, str) else v
        sources[k] = "flag"
    cfg = RunConfig(verb, values, sources)
    for key in _REQUIRED[verb]:
        if cfg.get(key) is None:
            raise InvalidConfigError(f"{verb}: missing required setting {key!r}")
    if verb == "monitor" and cfg.get("in") is None and not cfg.get("stdin"):
        raise InvalidConfigError("monitor: give --in PATH or --stdin")
    try:
        cfg.train_config()
        cfg.profile()
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(str(exc)) from None
    return cfg


# -- helpers ---------------------------------------------------------------------------

def profile_hash(profile):
    blob = json.dumps({f.name: getattr(profile, f.name) for f in fields(profile)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def model_scores(model, x):
    if isinstance(model, svdd.SvddDualModel):
        return svdd.svdd_score(model, np.asarray(x, dtype=np.float64).reshape(-1, model.input_dim))
    return deep_svdd.score_batch(model, x)


def _input_kind(dataset):
    for token in dataset.provenance.split():
        if token.startswith("kind="):
            return experiments.RECORDS if token[5:].startswith("config") else experiments.TIMESTAMPS
    return experiments.RECORDS if dataset.dim == RECORD_WIDTH else experiments.TIMESTAMPS


def _model_kind(model):
    return model.input_kind or (experiments.RECORDS if model.input_dim == RECORD_WIDTH
                                else experiments.TIMESTAMPS)


def resolve_tau(cfg, model):
    spec = cfg.get("tau")
    if not spec.startswith("quantile:"):
        return float(spec)
    if cfg.get("validation") is None:
        raise InvalidConfigError("tau = quantile:q needs a validation dataset (--validation)")
    q = float(spec[len("quantile:"):])
    val = read_dataset(cfg.get("validation"))
    return deep_svdd.quantile_threshold(model_scores(model, val.features), q)


def _verdict(s, tau):
    return deep_svdd.ANOMALOUS if s > tau else deep_svdd.NORMAL


def format_event(index, s, tau):
    return f"{index}, {'%.17g' % s}, {_verdict(s, tau)}"


# -- monitor ---------------------------------------------------------------------------

@dataclass
class MonitorResult:
    windows: int = 0
    anomalies: int = 0
    malformed: int = 0
    lines: int = 0


def run_monitor(model, stream, window_size, tau, emit, mode=experiments.TIMESTAMPS,
                sort=True, max_malformed_frac=0.01):
    """Score non-overlapping windows read from ``stream`` (an iterable of lines).

    ``emit`` receives one ``"index, score, verdict"`` string per window, in
    window order. Malformed lines are logged and skipped; if more than
    ``max_malformed_frac`` of the lines are malformed a StreamError is raised.
    """
    res = MonitorResult()
    width = RECORD_WIDTH if mode == experiments.RECORDS else 1
    per_window = 1 if mode == experiments.RECORDS else window_size
    if model.input_dim != per_window * width:
        raise InvalidConfigError(f"model expects {model.input_dim} features, monitor windows "
                                 f"carry {per_window * width}")
    buf = []

    def check_rate(final):
        if res.malformed and (final or res.lines >= 100) and res.malformed > max_malformed_frac * res.lines:
            raise StreamError(f"{res.malformed} of {res.lines} lines malformed")

    for lineno, raw in enumerate(stream, 1):
        line = raw.strip()
        if not line:
            continue
        res.lines += 1
        try:
            vals = [float(p) for p in line.split(",")]
            if len(vals) != width or not all(math.isfinite(v) for v in vals):
                raise ValueError(f"expected {width} finite value(s)")
            if mode == experiments.TIMESTAMPS and not 0.0 <= vals[0] < sim.CYCLE_NS:
                raise ValueError("timestamp outside [0, 100) ns")
        except ValueError as exc:
            res.malformed += 1
            log.warning("line %d skipped: %s", lineno, exc)
            check_rate(False)
            continue
        buf.extend(vals)
        if len(buf) == per_window * width:
            x = np.array(buf)
            if mode == experiments.TIMESTAMPS and sort:
                x.sort()
            s = float(model_scores(model, x[None, :])[0])
            if s > tau:
                res.anomalies += 1
            emit(format_event(res.windows, s, tau))
            res.windows += 1
            buf = []
    check_rate(True)
    if buf:
        log.info("%d trailing values did not fill a window", len(buf) // width)
    return res


# -- verbs -----------------------------------------------------------------------------

@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8") as fh:
        yield fh


def cmd_simulate(cfg):
    kind, n = cfg.get("kind"), cfg.get("n")
    profile = cfg.profile()
    window = cfg.get("window")
    prov = f"kind={kind} seed={profile.seed} profile={profile_hash(profile)}"
    with warnings.catch_warnings():
        warnings.simplefilter("always", DegenerateAttackWarning)
        if kind == "config-normal":
            ds = featurize_records(sim.gen_config_normal(n, profile), prov)
        elif kind == "config-calib":
            ds = featurize_records(sim.gen_config_calibration_attack(n, profile), prov)
        elif kind == "ts-normal":
            ds = featurize_windows(sim.gen_timestamps_normal(n, window, profile), prov + f" window={window}")
        else:
            ds = featurize_windows(sim.gen_timestamps_muted_attack(n, window, profile),
                                   prov + f" window={window}")
    if cfg.get("label"):
        ds = Dataset(ds.features, np.full(len(ds), int(kind in ("config-calib", "ts-muted"))),
                     ds.provenance)
    write_dataset(cfg.get("out"), ds)
    log.info("wrote %d rows of dim %d to %s", len(ds), ds.dim, cfg.get("out"))
    return EXIT_OK


def cmd_train(cfg):
    ds = read_dataset(cfg.get("data"))
    x = ds.features
    if ds.labelled:
        x = x[ds.labels == 0]
        log.info("labelled input: training on %d normal rows only", x.shape[0])
    kind = _input_kind(ds)
    if cfg.get("model_kind") == "svdd":
        spec = svdd.KernelSpec(cfg.get("svdd_kernel"), cfg.get("svdd_gamma"))
        model = svdd.svdd_fit(x, cfg.train_config().nu, spec, cfg.get("svdd_iters"), normalize=True)
        model.input_kind = kind
    else:
        model = deep_svdd.train(x, cfg.train_config(), kind)
    modelio.write_model(cfg.get("model_out"), model)
    return EXIT_OK


def cmd_eval(cfg):
    model = modelio.read_model(cfg.get("model"))
    kind = _model_kind(model)
    if cfg.get("data") is not None:
        ds = read_dataset(cfg.get("data"))
        if not ds.labelled:
            raise InvalidConfigError("eval --data needs a labelled dataset")
        stats = repeated_eval(lambda x: model_scores(model, x), lambda _seed: ds, 1,
                              cfg.get("eval_seed"))
    else:
        make = experiments.test_set_factory(kind, cfg.profile(), cfg.get("test_per_class"),
                                            model.input_dim)
        stats = repeated_eval(lambda x: model_scores(model, x), make, cfg.get("trials"),
                              cfg.get("eval_seed"))
    with _open_out(cfg.get("out")) as fh:
        fh.write(format_trial_stats(stats))
    print(f"mean AUC {stats.mean_percent:.2f}%  variance {stats.variance_percent2:.3f}  "
          f"min {100 * stats.aucs.min():.2f}%  trials {stats.aucs.size}", file=sys.stderr)
    return EXIT_OK


def cmd_score(cfg):
    model = modelio.read_model(cfg.get("model"))
    ds = read_dataset(cfg.get("data"))
    tau = resolve_tau(cfg, model)
    scores = model_scores(model, ds.features)
    with _open_out(cfg.get("out")) as fh:
        for i, s in enumerate(scores):
            fh.write(format_event(i, float(s), tau) + "\n")
    return EXIT_ANOMALY if np.any(scores > tau) else EXIT_OK


def cmd_monitor(cfg, stdin=None):
    model = modelio.read_model(cfg.get("model"))
    tau = resolve_tau(cfg, model)
    kind = _model_kind(model)
    window = model.input_dim if kind == experiments.TIMESTAMPS else 1
    with contextlib.ExitStack() as stack:
        if cfg.get("in") in (None, "-"):
            src = stdin or sys.stdin
        else:
            src = stack.enter_context(open(cfg.get("in"), encoding="utf-8"))
        fh = stack.enter_context(_open_out(cfg.get("out")))

        def emit(line):
            fh.write(line + "\n")
            fh.flush()

        res = run_monitor(model, src, window, tau, emit, kind, cfg.profile().sort_windows)
    log.info("%d windows, %d anomalous, %d malformed lines", res.windows, res.anomalies, res.malformed)
    return EXIT_ANOMALY if res.anomalies else EXIT_OK


def cmd_histogram(cfg):
    ds = read_dataset(cfg.get("data"))
    width = cfg.get("bin")
    counts = sim.histogram(ds.features, width)
    with _open_out(cfg.get("out")) as fh:
        fh.write("bin_start_ns,count\n")
        for k, c in enumerate(counts):
            fh.write(f"{'%.10g' % (k * width)},{int(c)}\n")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval,
            "score": cmd_score, "monitor": cmd_monitor, "histogram": cmd_histogram}


# -- argument parsing --------------------------------------------------------------------

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="qkdad", description="Deep SVDD anomaly detection for QKD telemetry")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key")
        p.add_argument("--seed")
        p.add_argument("--log-level", dest="log_level")
        for flag in flags:
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)
        return p

    add("simulate", "generate a synthetic dataset", "kind", "n", "out", "window")
    sub.choices["simulate"].add_argument("--label", action="store_const", const="true")
    add("train", "train a model on normal data", "data", "model_out", "model_kind", "epochs",
        "nu", "lr", "batch_size", "architecture")
    add("eval", "repeated 1:1 AUC trials", "model", "trials", "out", "data", "test_per_class",
        "eval_seed")
    add("score", "score a dataset", "model", "data", "tau", "out", "validation")
    mon = add("monitor", "score a live stream window by window", "model", "in", "tau", "out",
              "validation")
    mon.add_argument("--stdin", action="store_const", const="true")
    add("histogram", "bin timestamps over the 100 ns cycle", "data", "bin", "out")
    return parser


def _overrides(ns):
    skip = {"verb", "config", "set"}
    out = {k: v for k, v in vars(ns).items() if k not in skip and v is not None}
    for item in ns.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def main(argv=None, stdin=None):
    try:
        ns = build_parser().parse_args(argv)
        text, source = None, "<config>"
        if ns.config:
            source = ns.config
            with open(ns.config, encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(ns.verb, text, _overrides(ns), source)
    except (_UsageError, InvalidConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=cfg.get("log_level").upper(), format="%(levelname)s %(message)s")
    try:
        if ns.verb == "monitor":
            return cmd_monitor(cfg, stdin)
        return COMMANDS[ns.verb](cfg)
    except InvalidConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QkdAdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
