"""Time the LUT GEMV kernels against a plain int64 matmul.

Run from the repository root:

    python3 benchmarks/bench_lut_gemv.py [--repeats 7] [--inner 20]

Each kernel is checked for agreement with the matmul oracle before it
is timed, so a fast-but-wrong build shows up here rather than in the
numbers.
"""

import argparse
import time

import numpy as np

from tenet_sim import _lut_py

try:
    from tenet_sim import _lutcore
except ImportError:
    _lutcore = None

SHAPES = [(128, 16), (512, 64), (2048, 256), (4096, 1024)]


def _case(rng, k, n):
    values = rng.integers(-127, 128, size=k).astype(np.int8)
    trits = rng.integers(-1, 2, size=(k, n)).astype(np.int8)
    return values, trits


def _time(fn, values, trits, repeats, inner):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(values, trits)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="timing repeats (best wins)")
    parser.add_argument("--inner", type=int, default=20, help="calls per repeat")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    kernels = {"python": _lut_py.lut_gemv}
    if _lutcore is not None:
        kernels["cython"] = _lutcore.lut_gemv
    else:
        print("compiled extension not available; timing the fallback only")

    def matmul(values, trits):
        return values.astype(np.int64) @ trits.astype(np.int64)

    header = f"{'shape':>12} {'matmul':>12}" + "".join(f"{name:>12}" for name in kernels)
    print(header)
    print("-" * len(header))
    for k, n in SHAPES:
        values, trits = _case(rng, k, n)
        want = matmul(values, trits)
        for name, fn in kernels.items():
            got = fn(values, trits)[0]
            if not np.array_equal(np.asarray(got), want):
                raise SystemExit(f"{name} kernel disagrees with matmul at K={k}, N={n}")
        row = [f"{k}x{n:>5}", f"{_time(matmul, values, trits, args.repeats, args.inner) * 1e6:10.1f}us"]
        for fn in kernels.values():
            row.append(f"{_time(fn, values, trits, args.repeats, args.inner) * 1e6:10.1f}us")
        print(" ".join(f"{c:>12}" for c in row))


if __name__ == "__main__":
    main()
