"""Time every hot kernel under both backends and check that they agree.

    python benchmarks/bench_kernels.py [--repeat N]

The numba variants are warmed up (compiled) before timing.
"""
import argparse
import time

import numpy as np

from qkdad import kernels
from qkdad._accel import HAVE_NUMBA, backend_name


def _time(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    x = rng.uniform(0, 1, (1000, 400))
    w = rng.normal(0, 0.1, (128, 400))
    z = rng.normal(size=(5000, 32))
    c = rng.normal(size=32)
    ts = rng.uniform(0, 100, 400_000)
    sc = np.round(rng.normal(size=200_000), 3)
    g = rng.normal(size=(400, 8))
    pts = rng.normal(size=(300, 2))
    kmat = np.ascontiguousarray(pts @ pts.T)
    a0 = np.full(300, 1 / 300)
    return {
        "dense_rows 1000x400->128": ("dense_rows", (x, w, 0.1, True)),
        "sq_dists 5000x32": ("sq_dists", (z, c)),
        "bin_counts 400k ts, 0.1 ns": ("bin_counts", (ts, 0.1, 1000)),
        "midranks 200k (ties)": ("midranks", (sc,)),
        "rbf_gram 400x400, d=8": ("rbf_gram", (g, g, 0.5)),
        "fw_capped_simplex n=300": ("fw_capped_simplex", (kmat, 1 / 30, a0, 500, 0.0, 50)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path can be timed")
    print(f"active backend: {backend_name()}")
    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  max |diff|")
    rng = np.random.default_rng(0)
    for label, (name, fargs) in cases(rng).items():
        np_fn = getattr(kernels, f"{name}_numpy")
        nb_fn = getattr(kernels, f"{name}_numba")
        t_np = _time(np_fn, fargs, args.repeat)
        r_np = np_fn(*fargs)
        if HAVE_NUMBA:
            t_nb = _time(nb_fn, fargs, args.repeat)
            r_nb = nb_fn(*fargs)
            if isinstance(r_np, tuple):
                r_np, r_nb = r_np[0], r_nb[0]
            diff = float(np.max(np.abs(np.asarray(r_np, float) - np.asarray(r_nb, float))))
            print(f"{label:32s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f}  {diff:.2e}")
        else:
            print(f"{label:32s} {1e3 * t_np:11.3f} {'-':>11s}")


if __name__ == "__main__":
    main()
