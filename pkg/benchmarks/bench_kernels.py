"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from edsr._core import _pykernels

try:
    from edsr._core import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    def logp(T, V):
        x = rng.normal(size=(T, V))
        return x - np.log(np.exp(x).sum(axis=1, keepdims=True))

    yield "ctc T=50 V=29 U=10", "ctc_forward_backward", (logp(50, 29), rng.integers(1, 29, size=10))
    yield "ctc T=250 V=157 U=60", "ctc_forward_backward", (logp(250, 157), rng.integers(1, 157, size=60))
    yield "ctc T=1000 V=157 U=200", "ctc_forward_backward", (logp(1000, 157), rng.integers(1, 157, size=200))
    for n in (10, 60, 300):
        ref, hyp = list(rng.integers(0, 40, size=n)), list(rng.integers(0, 40, size=n))
        yield f"align n={n}", "align_counts", (ref, hyp, 1.0, 1.0, 1.0)


def bench(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'case':<26}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, op, call_args in cases(rng):
        t_py = bench(getattr(_pykernels, op), call_args, args.repeat)
        if _kernels is None:
            print(f"{name:<26}{t_py * 1e3:>14.3f}{'-':>14}{'-':>10}")
            continue
        t_c = bench(getattr(_kernels, op), call_args, args.repeat)
        print(f"{name:<26}{t_py * 1e3:>14.3f}{t_c * 1e3:>14.3f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
