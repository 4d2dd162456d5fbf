"""Per-node LASSO refit on an estimated skeleton."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .graph import Skeleton, WeightedGraph
from .scenario import Dataset


@dataclass(frozen=True)
class LassoConfig:
    lambda_frac: float = 1e-4
    max_iter: int = 10000
    tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.lambda_frac < 1.0:
            raise ValueError("lambda_frac must lie in [0, 1)")
        if self.max_iter < 1 or self.tol <= 0:
            raise ValueError("max_iter and tol must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which the all-zero solution is optimal."""
    return float(np.max(np.abs(X.T @ y))) / X.shape[0]


def lasso(X, y, lam: float, max_iter: int = 10000, tol: float = 1e-8) -> np.ndarray:
    """Minimise ``1/(2n) ||y - X b||^2 + lam ||b||_1`` by cyclic coordinate descent.

    No intercept is fitted.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("design must be a non-empty n x k matrix")
    if X.shape[0] != y.shape[0]:
        raise ValueError("design and response lengths differ")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("lasso inputs must be finite")
    if lam < 0:
        raise ValueError("penalty must be non-negative")
    n = X.shape[0]
    G = np.ascontiguousarray(X.T @ X / n)
    c = np.ascontiguousarray(X.T @ y / n)
    beta, _ = _kernels.lasso_cd(G, c, float(lam), int(max_iter), float(tol))
    return np.asarray(beta)


def refit(data: Dataset, skel: Skeleton, cfg: LassoConfig = LassoConfig()) -> WeightedGraph:
    """Regress each node on its skeleton parents; all other weights are zero."""
    if skel.layout != data.layout:
        raise ValueError("skeleton and data layouts differ")
    L = data.layout
    D = data.values
    B = np.zeros((L.w, L.w))
    deterministic = np.zeros(L.w, dtype=bool)
    deterministic[L.X] = True
    deterministic[L.XA] = True
    for j in range(L.w):
        if deterministic[j]:
            continue
        pa = skel.parents(j)
        if pa.size == 0:
            continue
        X = D[:, pa]
        y = D[:, j]
        lam = cfg.lambda_frac * lambda_max(X, y)
        B[pa, j] = lasso(X, y, lam, cfg.max_iter, cfg.tol)
    return WeightedGraph(L, B)
