"""Constrained score-based estimation of the weighted adjacency matrix.

The score is a masked least-squares reconstruction loss. Acyclicity enters
through an augmented Lagrangian on ``h1``; the structural zero blocks are
either hard-masked (default) or penalised through ``h2``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .graph import AcyclicityOverflow, WeightedGraph, acyclicity, default_t
from .scenario import Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscoveryConfig:
    t: Optional[float] = None  # acyclicity scale, 1/w when None
    K_outer: int = 20
    H_inner: int = 300
    r0: float = 1e-2
    r_decay: float = 0.999
    rho: float = 0.25
    tau: float = 10.0
    U: float = 1e16
    delta_h: float = 1e-8
    l1: float = 0.0
    hard_mask: bool = True
    loss_mask_deterministic: bool = True
    include_x_in_loss: bool = False
    solver: str = "lbfgs"  # or "gd"
    init_scale: float = 0.0
    init_seed: int = 0
    profile: bool = True  # solve only the mediator block when that is exact

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.tau <= 1.0:
            raise ValueError("tau must exceed 1")
        for name in ("delta_h", "U", "r0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t is not None and self.t <= 0:
            raise ValueError("t must be positive")
        if self.l1 < 0:
            raise ValueError("l1 must be non-negative")
        if self.solver not in ("lbfgs", "gd"):
            raise ValueError(f"unknown solver {self.solver!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DiscoveryConfig":
        return cls(**d)


class NotConverged(RuntimeError):
    """The acyclicity tolerance was not reached before the penalty cap."""

    def __init__(self, best: WeightedGraph, h1: float):
        super().__init__(f"acyclicity {h1:.3e} above tolerance when the penalty cap was reached")
        self.best = best
        self.h1 = h1


@dataclass
class FitTrace:
    """Diagnostics collected during ``fit``."""

    h1: list = field(default_factory=list)
    c: list = field(default_factory=list)
    inner_losses: list = field(default_factory=list)  # one list per inner solve


class _Problem:
    """One augmented-Lagrangian problem over a square coefficient matrix.

    ``power`` is the acyclicity exponent; it exceeds the matrix size when
    the matrix is the mediator block of a larger graph.
    """

    def __init__(self, S, n, resp, t, power, var_mask, l1_mask, l1=0.0, forbidden=None):
        self.S = np.ascontiguousarray(S, dtype=np.float64)
        self.n = float(n)
        self.resp = np.ascontiguousarray(resp, dtype=np.bool_)
        self.t, self.power = float(t), int(power)
        self.var_mask, self.l1_mask, self.l1 = var_mask, l1_mask, float(l1)
        self.forbidden = forbidden

    def smooth(self, B, lam1, c, lam2, d):
        """Value, gradient and h1 of everything except the l1 term."""
        try:
            val, grad, h = _kernels.augmented(B, self.S, self.n, self.resp, self.t, self.power, lam1, c)
        except (FloatingPointError, OverflowError) as exc:
            raise AcyclicityOverflow("acyclicity overflow") from exc
        if not np.isfinite(val) or not np.isfinite(h):
            raise AcyclicityOverflow("acyclicity overflow")
        if self.forbidden is not None:
            h2 = float(np.abs(B[self.forbidden]).sum())
            val += lam2 * h2 + d * h2 * h2
            grad = grad.copy()
            grad[self.forbidden] += (lam2 + 2.0 * d * h2) * np.sign(B[self.forbidden])
        return val, grad, h

    def h2(self, B):
        return float(np.abs(B[self.forbidden]).sum()) if self.forbidden is not None else 0.0


def _inner_lbfgs(prob, B0, lam1, c, lam2, d, maxiter, losses):
    """L-BFGS-B over the free entries, split into positive and negative parts.

    The split makes the l1 term and the soft structural penalty linear, so the
    bound-constrained problem is smooth.
    """
    w = B0.shape[0]
    idx = np.flatnonzero(prob.var_mask.ravel())
    k = idx.size
    if k == 0:
        return B0.copy()
    pen = np.where(prob.l1_mask.ravel()[idx], prob.l1, 0.0)
    forb = prob.forbidden.ravel()[idx] if prob.forbidden is not None else np.zeros(k, dtype=bool)
    split = prob.l1 > 0 or forb.any()
    b0 = B0.ravel()[idx]
    flat = np.zeros(w * w)

    def unpack(x):
        flat[:] = 0.0
        flat[idx] = x[:k] - x[k:] if split else x
        return flat.reshape(w, w).copy()

    def fun(x):
        B = unpack(x)
        try:
            val, gB, _ = prob.smooth(B, lam1, c, 0.0, 0.0) if forb.any() else prob.smooth(B, lam1, c, lam2, d)
        except AcyclicityOverflow:
            return 1e300, np.zeros_like(x)
        g = gB.ravel()[idx]
        if not split:
            losses.append(val)
            return val, g
        gp, gn = g + pen, -g + pen
        val += float(pen @ (x[:k] + x[k:]))
        if forb.any():
            h2 = float(np.sum(x[:k][forb] + x[k:][forb]))
            val += lam2 * h2 + d * h2 * h2
            slope = lam2 + 2.0 * d * h2
            gp[forb] += slope
            gn[forb] += slope
        losses.append(val)
        return val, np.concatenate([gp, gn])

    if split:
        x0 = np.concatenate([np.maximum(b0, 0.0), np.maximum(-b0, 0.0)])
        bounds = [(0.0, None)] * (2 * k)
    else:
        x0, bounds = b0, None
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": maxiter, "ftol": 1e-12, "gtol": 1e-7})
    return unpack(res.x)


def _inner_gd(prob, B0, lam1, c, lam2, d, cfg, losses):
    """Projected proximal gradient with backtracking; the loss never increases."""
    B = B0 * prob.var_mask
    l1 = prob.l1
    r = cfg.r0

    def total(B):
        v, g, _ = prob.smooth(B, lam1, c, lam2, d)
        return v + l1 * float(np.abs(B[prob.l1_mask]).sum()), g

    try:
        cur, g = total(B)
    except AcyclicityOverflow:
        return B
    losses.append(cur)
    for _ in range(cfg.H_inner):
        step = r
        accepted = False
        for _ in range(60):
            cand = B - step * g
            if l1 > 0:
                shrunk = np.sign(cand) * np.maximum(np.abs(cand) - step * l1, 0.0)
                cand = np.where(prob.l1_mask, shrunk, cand)
            cand *= prob.var_mask
            try:
                new, g_new = total(cand)
            except AcyclicityOverflow:
                step *= 0.5
                continue
            if new <= cur:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        B, cur, g = cand, new, g_new
        losses.append(cur)
        r = 2.0 * step * cfg.r_decay
    return B


def _augmented_lagrangian(prob, B, cfg, trace):
    lam1, c, lam2, d = 0.0, 1.0, 0.0, 1.0
    h_old, h2_old = np.inf, np.inf
    h_new, h2_new = acyclicity(B, prob.t, prob.power)[0], prob.h2(B)
    for k in range(cfg.K_outer):
        while True:
            losses: list = []
            if cfg.solver == "lbfgs":
                B_new = _inner_lbfgs(prob, B, lam1, c, lam2, d, cfg.H_inner, losses)
            else:
                B_new = _inner_gd(prob, B, lam1, c, lam2, d, cfg, losses)
            if trace is not None:
                trace.inner_losses.append(losses)
            h_new = acyclicity(B_new, prob.t, prob.power)[0]
            h2_new = prob.h2(B_new)
            grow_c = h_new > cfg.rho * h_old
            grow_d = prob.forbidden is not None and h2_new > cfg.rho * h2_old
            if (grow_c or grow_d) and c * d < cfg.U:
                c *= cfg.tau if grow_c else 1.0
                d *= cfg.tau if grow_d else 1.0
                continue
            break
        B = B_new
        h_old, h2_old = h_new, h2_new
        lam1 += c * h_new
        lam2 += d * h2_new
        if trace is not None:
            trace.h1.append(h_new)
            trace.c.append(c)
        log.debug("outer %d: h1=%.3e c=%.1e", k, h_new, c)
        if h_new <= cfg.delta_h and h2_new <= cfg.delta_h:
            break
        if c * d >= cfg.U:
            break
    return B, h_new


def _lstsq(Z, y):
    return np.linalg.lstsq(Z, y, rcond=None)[0]


def _fit_profiled(data, cfg, t, trace):
    """Hard mask, no l1: only the mediator block can carry a cycle.

    Coefficients into A and Y, and the non-mediator parents of every
    mediator, are least-squares profiles of the mediator block, so the
    augmented Lagrangian runs on residualised mediators alone.
    """
    L = data.layout
    D = data.values
    w, s = L.w, L.s
    B = np.zeros((w, w))
    Zc = np.arange(0, 2 * L.p + 1)  # X, A, XA
    B[L.X, L.A] = _lstsq(D[:, L.X], D[:, L.A])
    h = 0.0
    if s:
        M = D[:, L.M]
        P = _lstsq(D[:, Zc], M)
        Mt = M - D[:, Zc] @ P
        offdiag = ~np.eye(s, dtype=bool)
        prob = _Problem(Mt.T @ Mt, data.n, np.ones(s, dtype=bool), t, w, offdiag, offdiag)
        init = _init(cfg, (s, s), offdiag)
        B_m, h = _augmented_lagrangian(prob, init, cfg, trace)
        B[L.M, L.M] = B_m
        B[Zc[:, None], np.arange(L.M.start, L.M.stop)[None, :]] = P - P @ B_m
    B[:L.Y, L.Y] = _lstsq(D[:, :L.Y], D[:, L.Y])
    return B * L.allowed_mask(), h


def _init(cfg, shape, mask):
    if cfg.init_scale > 0:
        rng = np.random.default_rng(cfg.init_seed)
        return rng.uniform(-cfg.init_scale, cfg.init_scale, shape) * mask
    return np.zeros(shape)


def fit(data: Dataset, cfg: DiscoveryConfig = DiscoveryConfig(), trace: Optional[FitTrace] = None) -> WeightedGraph:
    """Raw estimate of B under the structural and acyclicity constraints.

    Raises ``NotConverged`` (carrying the last iterate) when ``h1`` is still
    above ``cfg.delta_h`` once ``c * d`` reaches ``cfg.U``.
    """
    L = data.layout
    if data.n < 1:
        raise ValueError("empty dataset")
    if np.sum(np.std(data.values, axis=0) > 0) < 2:
        raise ValueError("need at least two varying columns")
    w = L.w
    t = cfg.t if cfg.t is not None else default_t(w)

    if cfg.hard_mask and cfg.l1 == 0 and cfg.solver == "lbfgs" and cfg.profile:
        B, h_new = _fit_profiled(data, cfg, t, trace)
    else:
        if cfg.loss_mask_deterministic:
            resp = L.response_mask(include_x=cfg.include_x_in_loss)
        else:
            resp = np.ones(w, dtype=bool)
        allowed = L.allowed_mask()
        offdiag = ~np.eye(w, dtype=bool)
        if cfg.hard_mask:
            var_mask, forbidden = allowed, None
        else:
            var_mask, forbidden = offdiag, offdiag & ~allowed
        D = data.values
        prob = _Problem(D.T @ D, data.n, resp, t, w, var_mask, allowed, cfg.l1, forbidden)
        B, h_new = _augmented_lagrangian(prob, _init(cfg, (w, w), var_mask), cfg, trace)
        if cfg.hard_mask:
            B = B * allowed
    G = WeightedGraph(L, B)
    if h_new > cfg.delta_h:
        raise NotConverged(G, h_new)
    return G


def thresholded(B0: WeightedGraph, delta: float) -> np.ndarray:
    return B0.B * (np.abs(B0.B) > delta)


def _refit_rss(D, support, resp):
    """Per-column residual sum of squares after OLS on the supported parents."""
    rss = np.empty(int(resp.sum()))
    for k, j in enumerate(np.flatnonzero(resp)):
        pa = np.flatnonzero(support[:, j])
        y = D[:, j]
        if pa.size:
            coef = np.linalg.lstsq(D[:, pa], y, rcond=None)[0]
            y = y - D[:, pa] @ coef
        rss[k] = y @ y
    return rss


def reconstruction_losses(B0: WeightedGraph, data: Dataset, grid, criterion: str = "mse",
                          include_x: bool = False) -> np.ndarray:
    """Loss of ``B0`` thresholded at each grid value.

    ``mse``: mean squared residual of ``D - D Bt`` over response columns.
    ``bic``: the support of ``Bt`` is refit column by column with OLS, then
    scored as ``n log(RSS_j / n)`` summed over response columns plus
    ``log(n)`` per retained edge.
    """
    L = data.layout
    D = data.values
    n = data.n
    resp = L.response_mask(include_x=include_x)
    out = []
    for delta in grid:
        Bt = thresholded(B0, delta)
        if criterion == "mse":
            R = D[:, resp] - D @ Bt[:, resp]
            out.append(float(np.mean(R * R)))
        elif criterion == "bic":
            rss = np.maximum(_refit_rss(D, Bt != 0, resp), 1e-300)
            out.append(float(n * np.sum(np.log(rss / n)) + np.log(n) * np.count_nonzero(Bt)))
        else:
            raise ValueError(f"unknown criterion {criterion!r}")
    return np.asarray(out)


def select_threshold(B0: WeightedGraph, data: Dataset, grid, criterion: str = "mse") -> float:
    """Grid value minimising the reconstruction loss; ties go to the smallest."""
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("threshold grid is empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("threshold grid must be sorted ascending")
    losses = reconstruction_losses(B0, data, grid, criterion)
    best = 0
    for k in range(1, len(grid)):
        if losses[k] < losses[best]:
            best = k
    return grid[best]


DEFAULT_GRID = tuple(np.round(np.arange(0.05, 0.95, 0.05), 2))
