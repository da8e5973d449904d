"""Compare the compiled and pure-Python exponential filter.

    python3 benchmarks/bench_kernels.py [--nodes N] [--modes M] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from lpfoliation._kernels_py import exp_filter as exp_filter_py
from lpfoliation.semigroup import step_weights

try:
    from lpfoliation._kernels import exp_filter as exp_filter_c
except ImportError:
    exp_filter_c = None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20_000)
    ap.add_argument("--modes", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rates = -np.linspace(0.0, 200.0, args.modes)
    decay, wp, wn = step_weights(rates, 1e-3)
    h = rng.standard_normal((args.nodes, args.modes))

    backends = {"python": exp_filter_py}
    if exp_filter_c is not None:
        backends["cython"] = exp_filter_c
    else:
        print("compiled extension not available; timing the Python fallback only")

    ref = exp_filter_py(decay, wp, wn, h)
    times = {}
    for name, fn in backends.items():
        out = fn(decay, wp, wn, h)
        err = float(np.abs(out - ref).max())
        t = min(timeit.repeat(lambda: fn(decay, wp, wn, h), number=1, repeat=args.repeat))
        times[name] = t
        print(f"{name:>7}: {t * 1e3:9.3f} ms  ({args.nodes} nodes x {args.modes} modes, max diff {err:.1e})")
    if len(times) == 2:
        print(f"speed-up: {times['python'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
