"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 10000] [--repeat 200]
"""
import argparse
import timeit

import numpy as np

from qgeom import _kernels


def cases(n, rng):
    w = rng.standard_normal(n)
    u = rng.random(n)
    x2d = rng.standard_normal((256, max(1, n // 256)))
    delta = np.max(np.abs(w)) / 256
    return {
        "fused_binary": lambda m: m.fused_binary(w),
        "fused_ternary": lambda m: m.fused_ternary(w, 0.6),
        "fused_midrise": lambda m: m.fused_midrise(w, delta),
        "fused_dot": lambda m: m.fused_dot(w, u),
        "stochastic_round": lambda m: m.stochastic_round(w, 0.01, u),
        "stochastic_ternarize": lambda m: m.stochastic_ternarize(w, 4.0, u),
        "column_extrema": lambda m: m.column_extrema(x2d),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if _kernels.compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, fn in cases(args.n, rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels.pure), number=args.repeat, repeat=3)) / args.repeat
        t_cy = min(timeit.repeat(lambda: fn(_kernels.compiled), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:<22}{t_py * 1e6:>12.1f}{t_cy * 1e6:>12.1f}{t_py / t_cy:>10.2f}")


if __name__ == "__main__":
    main()
