"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend, and checks that the
two backends agree on every input.
"""

import argparse
import time

import numpy as np

from tabvfm._kernels import _pykernels

try:
    from tabvfm._kernels import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def cases(rng):
    for n in (1_000, 100_000, 1_000_000):
        a = np.sort(rng.normal(size=n))
        b = np.sort(rng.normal(0.1, 1.2, size=n + n // 3))
        yield f"ks_sorted  n={n:>9,}", "ks_sorted", (a, b)
        yield f"w1_sorted  n={n:>9,}", "w1_sorted", (a, b)
    for nq, nr in ((1_000, 5_000), (5_000, 20_000)):
        args = (rng.normal(size=(nq, 6)), rng.integers(0, 4, (nq, 8)),
                rng.normal(size=(nr, 6)), rng.integers(0, 4, (nr, 8)))
        yield f"nearest    {nq:,}x{nr:,}", "nearest_mixed_distance", args


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    print(f"{'kernel':<28}{'cython (s)':>12}{'numpy (s)':>12}{'speed-up':>10}  agree")
    for label, name, inputs in cases(np.random.default_rng(args.seed)):
        tc, oc = best_time(lambda: getattr(_ckernels, name)(*inputs), args.repeat)
        tp, op = best_time(lambda: getattr(_pykernels, name)(*inputs), args.repeat)
        agree = np.allclose(oc, op, rtol=1e-12, atol=1e-12)
        print(f"{label:<28}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
