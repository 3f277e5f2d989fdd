"""Compare the compiled log-sum-exp kernels against the NumPy fallback.

Run as ``python3 benchmarks/bench_kernels.py``. Reports wall time per call
and the maximum absolute disagreement between both implementations, for the
matrix-matrix contraction and the batched mode contraction used inside every
conjugate-gradient evaluation.
"""

import time

import numpy as np

from wassfact import kernels

try:
    from wassfact import _lse
except ImportError:
    _lse = None


def timeit(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_logmatmulexp(rng):
    print("logmatmulexp (L: n x n, M: n x m)")
    print(f"{'n':>6} {'m':>6} {'numpy':>12} {'compiled':>12} {'speedup':>8} {'max diff':>10}")
    for n, m in [(32, 256), (64, 1024), (128, 4096), (256, 4096)]:
        L = -rng.random((n, n)) / 0.1
        M = rng.normal(size=(n, m))
        t_np, out_np = timeit(kernels.logmatmulexp_numpy, L, M)
        if _lse is None:
            print(f"{n:>6} {m:>6} {t_np:>11.4f}s {'n/a':>12}")
            continue
        t_c, out_c = timeit(_lse.logmatmulexp, L, M)
        diff = float(np.abs(out_np - out_c).max())
        print(f"{n:>6} {m:>6} {t_np:>11.4f}s {t_c:>11.4f}s {t_np / t_c:>7.1f}x {diff:>10.2e}")


def bench_logmodeexp(rng):
    print()
    print("logmodeexp (L: n x n, T: a x n x c)")
    print(f"{'a':>6} {'n':>6} {'c':>6} {'numpy':>12} {'compiled':>12} {'speedup':>8} {'max diff':>10}")
    for a, n, c in [(1, 32, 1024), (32, 32, 32), (1024, 32, 1), (1, 64, 4096), (64, 64, 64)]:
        L = -rng.random((n, n)) / 0.1
        T = rng.normal(size=(a, n, c))
        t_np, out_np = timeit(kernels.logmodeexp_numpy, L, T)
        if _lse is None:
            print(f"{a:>6} {n:>6} {c:>6} {t_np:>11.4f}s {'n/a':>12}")
            continue
        t_c, out_c = timeit(_lse.logmodeexp, L, T)
        diff = float(np.abs(out_np - out_c).max())
        print(f"{a:>6} {n:>6} {c:>6} {t_np:>11.4f}s {t_c:>11.4f}s "
              f"{t_np / t_c:>7.1f}x {diff:>10.2e}")


def main():
    rng = np.random.default_rng(0)
    if _lse is None:
        print("compiled extension not available; showing NumPy fallback only")
    print(f"active implementation: "
          f"{'compiled' if kernels.HAVE_COMPILED_KERNEL else 'numpy fallback'}")
    print()
    bench_logmatmulexp(rng)
    bench_logmodeexp(rng)


if __name__ == "__main__":
    main()
