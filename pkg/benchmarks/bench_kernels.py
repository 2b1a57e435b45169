"""Time the numba and numpy kernel backends on a synthetic corpus.

    python3 benchmarks/bench_kernels.py [--n 2000] [--m 1500] [--d 15] [--repeat 20]

Prints seconds per objective and per half-gradient evaluation for each
backend, plus the largest disagreement between the two.
"""
import argparse
import time

import numpy as np

from congrec import kernels
from congrec._accel import HAVE_NUMBA


def make_problem(n, m, d, density, pair_density, seed):
    rng = np.random.default_rng(seed)
    nnz = int(density * n * m)
    flat = rng.choice(n * m, size=nnz, replace=False)
    rows, cols = flat // m, flat % m
    vals = rng.integers(1, 6, size=nnz).astype(np.float64)
    npairs = int(pair_density * n * (n - 1))
    a = rng.integers(n, size=npairs)
    b = (a + 1 + rng.integers(n - 1, size=npairs)) % n
    pw = rng.uniform(-1, 1, size=npairs)
    U = rng.normal(scale=0.1, size=(n, d))
    V = rng.normal(scale=0.1, size=(m, d))
    return U, V, rows, cols, vals, a, b, pw


def timeit(fn, repeat):
    fn()  # warm-up (includes numba compilation)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--m", type=int, default=1500)
    ap.add_argument("--d", type=int, default=15)
    ap.add_argument("--density", type=float, default=0.01)
    ap.add_argument("--pair-density", type=float, default=0.005)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    U, V, rows, cols, vals, a, b, pw = make_problem(args.n, args.m, args.d, args.density,
                                                    args.pair_density, args.seed)
    print(f"n={args.n} m={args.m} d={args.d} ratings={len(vals)} pairs={len(pw)}")
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    grads = {}
    for name in backends:
        t_obj = timeit(lambda: kernels.objective_terms(U, V, rows, cols, vals, a, b, pw, backend=name),
                       args.repeat)
        t_grad = timeit(lambda: kernels.half_gradient(U, V, rows, cols, vals, a, b, pw, 0.01, 1.0,
                                                      True, backend=name), args.repeat)
        grads[name] = kernels.half_gradient(U, V, rows, cols, vals, a, b, pw, 0.01, 1.0, True, backend=name)
        print(f"{name:6s} objective {t_obj * 1e3:8.2f} ms   gradient {t_grad * 1e3:8.2f} ms")
    if len(grads) == 2:
        diff = max(float(np.abs(x - y).max()) for x, y in zip(grads["numpy"], grads["numba"]))
        print(f"max |numpy - numba| gradient difference: {diff:.3g}")
    else:
        print("numba not installed; only the numpy backend was timed")


if __name__ == "__main__":
    main()
