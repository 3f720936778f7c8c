"""Benchmark: compiled SMO extension vs the pure NumPy fallback.

Run:  python benchmarks/bench_backends.py

Times solver training and leave-one-out hyperparameter selection on
synthetic regression problems, plus the vectorised re-weighted Gram
assembly (shared by both backends, shown for context).
"""

import time

import numpy as np

from covtune import _smo_pure
from covtune.data import LabeledDataset
from covtune.kernels import KernelSpec, ReweightSet, gram, pair_matrix, reweight

try:
    from covtune import _smo as _smo_ext
except ImportError:
    _smo_ext = None


def problem(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    y = np.linalg.norm(X, axis=1)
    K = gram(KernelSpec.se(0.4), X, 0.0)
    return K, y, X


def time_solver(solver, K, y, box, eps, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        alpha, iters, converged, _ = solver(K, y, box, eps, tol=1e-6,
                                            max_iter=200000)
        best = min(best, time.perf_counter() - t0)
    assert converged
    return best, iters


def time_loo(solver, K, y, box, eps):
    n = len(y)
    t0 = time.perf_counter()
    warm = None
    for i in range(n):
        keep = np.arange(n) != i
        a0 = None
        if warm is not None:
            a0 = np.clip(warm[keep], -box, box)
            a0 -= a0.sum() / (n - 1)
            a0 = np.clip(a0, -box, box)
        alpha, *_ = solver(K[np.ix_(keep, keep)], y[keep], box, eps,
                           tol=1e-6, max_iter=200000, alpha0=a0)
        warm = np.zeros(n)
        warm[keep] = alpha
    return time.perf_counter() - t0


def bench_gram(n_anchors, n_points, seed=0):
    rng = np.random.default_rng(seed)
    E = ReweightSet.from_pairs(
        [(rng.uniform(-1, 1, 2), rng.normal()) for _ in range(n_anchors)])
    spec = reweight(KernelSpec.se(0.4), E)
    X = rng.uniform(-1, 1, (n_points, 2))
    t0 = time.perf_counter()
    pair_matrix(spec, X, X)
    return time.perf_counter() - t0


def main():
    print(f"{'problem':<34}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for n in (50, 100, 200):
        K, y, _ = problem(n)
        box, eps = 100.0 / n, 0.01
        t_pure, it_pure = time_solver(_smo_pure.smo_svr, K, y, box, eps)
        row = f"svr train n={n} ({it_pure} iters)"
        if _smo_ext is not None:
            t_ext, it_ext = time_solver(_smo_ext.smo_svr, K, y, box, eps)
            assert it_ext == it_pure
            print(f"{row:<34}{t_pure * 1e3:>10.2f}ms{t_ext * 1e3:>10.2f}ms"
                  f"{t_pure / t_ext:>9.1f}x")
        else:
            print(f"{row:<34}{t_pure * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")
    for n in (50, 100):
        K, y, _ = problem(n)
        box, eps = 100.0 / n, 0.01
        t_pure = time_loo(_smo_pure.smo_svr, K, y, box, eps)
        row = f"loo sweep n={n} ({n} retrains)"
        if _smo_ext is not None:
            t_ext = time_loo(_smo_ext.smo_svr, K, y, box, eps)
            print(f"{row:<34}{t_pure * 1e3:>10.2f}ms{t_ext * 1e3:>10.2f}ms"
                  f"{t_pure / t_ext:>9.1f}x")
        else:
            print(f"{row:<34}{t_pure * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")
    for s, m in ((40, 200), (80, 400)):
        t = bench_gram(s, m)
        row = f"reweighted gram |E|={s} N={m}"
        print(f"{row:<34}{t * 1e3:>10.2f}ms{'(numpy, shared)':>22}")
    if _smo_ext is None:
        print("\ncompiled extension not built; showing fallback only")


if __name__ == "__main__":
    main()
