"""Compiled core vs numpy fallback on the particle hot loops.

    python3 benchmarks/bench_core.py [--n 200000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from besov_mkv import _fallback

try:
    from besov_mkv import _core
except ImportError:
    _core = None


def cases(n, N=512, L=10.0):
    rng = np.random.default_rng(0)
    x = rng.uniform(-3 * L, 3 * L, n)
    y = rng.uniform(-3 * L, 3 * L, n)
    f1 = rng.standard_normal(N)
    f2 = rng.standard_normal((N // 4, N // 4))
    ids = np.arange(n, dtype=np.uint64)
    return {
        "cic_deposit_1d": lambda m: m.cic_deposit_1d(x, L, N),
        "cic_deposit_2d": lambda m: m.cic_deposit_2d(x, y, L, N // 4),
        "interp_1d": lambda m: m.interp_1d(f1, x, L),
        "interp_2d": lambda m: m.interp_2d(f2, x, y, L),
        "counter_uniforms": lambda m: m.counter_uniforms(12345, ids, 7, 2),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"n={args.n}  best of {args.repeat}")
    print(f"{'kernel':18s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for name, fn in cases(args.n).items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{name:18s} {t_py:10.2f} {'-':>10s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat)) * 1e3
        same = np.array_equal(fn(_fallback), fn(_core))
        print(f"{name:18s} {t_py:10.2f} {t_c:10.2f} {t_py / t_c:8.1f}x  {same}")


if __name__ == "__main__":
    main()
