"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from hetcausal import _kernels as K
from hetcausal._accel import HAVE_NUMBA


def cases(rng):
    for w in (10, 30, 60):
        B = rng.standard_normal((w, w)) * (rng.random((w, w)) < 0.2)
        D = rng.standard_normal((500, w))
        S = D.T @ D
        resp = np.ones(w, dtype=np.bool_)
        yield f"acyclicity w={w}", "acyclicity", (B, 1.0 / w, w)
        yield f"augmented w={w}", "augmented", (B, S, 500.0, resp, 1.0 / w, w, 0.5, 10.0)
        order = np.arange(w, dtype=np.int64)
        fixed = np.zeros(w, dtype=np.bool_)
        yield f"sem_sample w={w} n=500", "sem_sample", (np.triu(B, 1), D, order, 2, fixed, np.zeros((1, w)))
    for k in (5, 20, 50):
        X = rng.standard_normal((1000, k))
        y = X @ rng.standard_normal(k)
        yield f"lasso_cd k={k}", "lasso_cd", (X.T @ X / 1000, X.T @ y / 1000, 0.01, 10000, 1e-10)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is unavailable or disabled; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for label, name, call_args in cases(rng):
        fast = getattr(K, f"{name}_numba")
        slow = getattr(K, f"{name}_numpy")
        fast(*call_args)  # compile outside the timing
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<28}{t_slow:>12.3f}{t_fast:>12.3f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()
