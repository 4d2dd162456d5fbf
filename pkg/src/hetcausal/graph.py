"""Block-structured weighted DAGs over (X, A, XA, M, Y).

Node order is fixed: ``p`` pre-treatment variables X, the treatment A, the
``p`` interaction columns XA, ``s`` mediators M and the outcome Y. Entry
``B[i, j]`` is the weight of the edge ``Z_i -> Z_j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels


class AcyclicityOverflow(FloatingPointError):
    """Raised when the acyclicity polynomial overflows."""


class CyclicMediators(ValueError):
    """The mediator block is not acyclic, so ``I - B_M'`` is singular."""


@dataclass(frozen=True)
class BlockLayout:
    p: int
    s: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")

    @property
    def w(self) -> int:
        return 2 * self.p + self.s + 2

    @property
    def X(self) -> slice:
        return slice(0, self.p)

    @property
    def A(self) -> int:
        return self.p

    @property
    def XA(self) -> slice:
        return slice(self.p + 1, 2 * self.p + 1)

    @property
    def M(self) -> slice:
        return slice(2 * self.p + 1, 2 * self.p + 1 + self.s)

    @property
    def Y(self) -> int:
        return self.w - 1

    def names(self) -> list[str]:
        p, s = self.p, self.s
        return (
            [f"X{k + 1}" for k in range(p)]
            + ["A"]
            + [f"XA{k + 1}" for k in range(p)]
            + [f"M{k + 1}" for k in range(s)]
            + ["Y"]
        )

    def allowed_mask(self) -> np.ndarray:
        """Boolean w x w mask of entries permitted by g1..g4 (diagonal excluded)."""
        w = self.w
        ok = np.ones((w, w), dtype=bool)
        ok[:, self.X] = False  # g1: X has no parents
        ok[:, self.A] = False  # g2: only X points to A
        ok[self.X, self.A] = True
        ok[self.Y, :] = False  # g3: Y has no children
        ok[:, self.XA] = False  # g4: XA has no parents
        np.fill_diagonal(ok, False)
        return ok

    def response_mask(self, include_x: bool = False) -> np.ndarray:
        """Columns that carry a reconstruction residual (stochastic nodes)."""
        resp = np.ones(self.w, dtype=bool)
        resp[self.XA] = False
        if not include_x:
            resp[self.X] = False
        return resp

    def sampling_order(self, B: Optional[np.ndarray] = None) -> np.ndarray:
        """X, A, XA, mediators in a topological order of ``B``'s M block, Y."""
        m_idx = np.arange(self.M.start, self.M.stop)
        if B is not None and self.s:
            order = topological_order(B[self.M, self.M] != 0)
            if order is None:
                raise CyclicMediators("cyclic mediators")
            m_idx = m_idx[order]
        return np.concatenate(
            [np.arange(self.p), [self.A], np.arange(self.XA.start, self.XA.stop), m_idx, [self.Y]]
        ).astype(np.int64)


def topological_order(adj: np.ndarray) -> Optional[np.ndarray]:
    """Kahn's algorithm on a boolean adjacency (``adj[i, j]`` means i -> j).

    Ties resolve to the lowest index. Returns None if a cycle exists.
    """
    adj = np.asarray(adj, dtype=bool)
    k = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    ready = sorted(np.flatnonzero(indeg == 0).tolist())
    out = []
    while ready:
        v = ready.pop(0)
        out.append(v)
        for u in np.flatnonzero(adj[v]):
            indeg[u] -= 1
            if indeg[u] == 0:
                ready.append(int(u))
                ready.sort()
    if len(out) != k:
        return None
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True)
class WeightedGraph:
    layout: BlockLayout
    B: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        w = self.layout.w
        if B.shape != (w, w):
            raise ValueError(f"matrix shape {B.shape} does not match layout (w={w})")
        if not np.all(np.isfinite(B)):
            raise ValueError("graph weights must be finite")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @classmethod
    def zeros(cls, p: int, s: int) -> "WeightedGraph":
        lay = BlockLayout(p, s)
        return cls(lay, np.zeros((lay.w, lay.w)))

    @property
    def p(self) -> int:
        return self.layout.p

    @property
    def s(self) -> int:
        return self.layout.s

    def is_structurally_valid(self) -> bool:
        return structural_report(self)["h2"] == 0.0

    def support(self) -> "Skeleton":
        return Skeleton(self.layout, self.B != 0)

    def to_dict(self) -> dict:
        return {"p": self.p, "s": self.s, "matrix": self.B.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedGraph":
        return cls(BlockLayout(int(d["p"]), int(d["s"])), np.asarray(d["matrix"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "WeightedGraph":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Skeleton:
    layout: BlockLayout
    E: np.ndarray

    def __post_init__(self):
        E = np.array(self.E, dtype=bool)
        if E.shape != (self.layout.w, self.layout.w):
            raise ValueError("skeleton shape does not match layout")
        E.setflags(write=False)
        object.__setattr__(self, "E", E)

    @property
    def n_edges(self) -> int:
        return int(self.E.sum())

    def parents(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.E[:, j])

    @property
    def is_acyclic(self) -> bool:
        return topological_order(self.E) is not None


@dataclass(frozen=True)
class Parameters:
    """Coefficient blocks of the interaction SEM.

    Shapes: ``delta_x`` (p,), ``B_x`` (p, s), ``beta_a`` (s,), ``B_xa`` (p, s),
    ``B_m`` (s, s) with ``B_m[i, j]`` the weight of ``M_i -> M_j``,
    ``gamma_x`` (p,), ``gamma_a`` scalar, ``gamma_xa`` (p,), ``gamma_m`` (s,),
    and the optional ``Gamma_xm`` (p, s) for X*M interactions on Y.
    """

    delta_x: np.ndarray
    B_x: np.ndarray
    beta_a: np.ndarray
    B_xa: np.ndarray
    B_m: np.ndarray
    gamma_x: np.ndarray
    gamma_a: float
    gamma_xa: np.ndarray
    gamma_m: np.ndarray
    Gamma_xm: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        for name in ("delta_x", "B_x", "beta_a", "B_xa", "B_m", "gamma_x", "gamma_xa", "gamma_m"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        object.__setattr__(self, "gamma_a", float(self.gamma_a))
        p, s = self.p, self.s
        shapes = {
            "delta_x": (p,), "B_x": (p, s), "beta_a": (s,), "B_xa": (p, s),
            "B_m": (s, s), "gamma_x": (p,), "gamma_xa": (p,), "gamma_m": (s,),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.Gamma_xm is not None:
            G = np.array(self.Gamma_xm, dtype=float)
            if G.shape != (p, s):
                raise ValueError(f"Gamma_xm has shape {G.shape}, expected {(p, s)}")
            object.__setattr__(self, "Gamma_xm", G)

    @property
    def p(self) -> int:
        return self.delta_x.shape[0]

    @property
    def s(self) -> int:
        return self.beta_a.shape[0]

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout(self.p, self.s)

    @classmethod
    def unpack(cls, G: WeightedGraph, Gamma_xm=None) -> "Parameters":
        L, B = G.layout, G.B
        return cls(
            delta_x=B[L.X, L.A],
            B_x=B[L.X, L.M],
            beta_a=B[L.A, L.M],
            B_xa=B[L.XA, L.M],
            B_m=B[L.M, L.M],
            gamma_x=B[L.X, L.Y],
            gamma_a=B[L.A, L.Y],
            gamma_xa=B[L.XA, L.Y],
            gamma_m=B[L.M, L.Y],
            Gamma_xm=Gamma_xm,
        )

    def pack(self) -> WeightedGraph:
        L = self.layout
        B = np.zeros((L.w, L.w))
        B[L.X, L.A] = self.delta_x
        B[L.X, L.M] = self.B_x
        B[L.A, L.M] = self.beta_a
        B[L.XA, L.M] = self.B_xa
        B[L.M, L.M] = self.B_m
        B[L.X, L.Y] = self.gamma_x
        B[L.A, L.Y] = self.gamma_a
        B[L.XA, L.Y] = self.gamma_xa
        B[L.M, L.Y] = self.gamma_m
        return WeightedGraph(L, B)

    def replace(self, **kw) -> "Parameters":
        return replace(self, **kw)


@dataclass(frozen=True)
class HCGProjection:
    """Graph over (A, M_1..M_s, Y) after do(X = x)."""

    B_do: np.ndarray
    intercepts: np.ndarray
    x: np.ndarray

    def names(self) -> list[str]:
        s = self.B_do.shape[0] - 2
        return ["A"] + [f"M{k + 1}" for k in range(s)] + ["Y"]


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def structural_report(G: WeightedGraph) -> dict:
    """Absolute weight mass sitting in each forbidden block, and their sum."""
    L, aB = G.layout, np.abs(G.B)
    g1 = float(aB[:, L.X].sum())
    g2 = float(aB[L.p + 1:, L.A].sum())
    g3 = float(aB[L.Y, :].sum())
    g4 = float(aB[:, L.XA].sum())
    return {"g1": g1, "g2": g2, "g3": g3, "g4": g4, "h2": g1 + g2 + g3 + g4}


def default_t(w: int) -> float:
    return 1.0 / w


def acyclicity(G, t: Optional[float] = None, power: Optional[int] = None):
    """Value and gradient of ``tr[(I + t B*B)^w] - w``.

    ``G`` may be a WeightedGraph or a bare square matrix. The value is zero
    exactly when the support of B is acyclic. ``power`` overrides the
    exponent, used when B is the only cyclable block of a larger graph.
    """
    B = G.B if isinstance(G, WeightedGraph) else np.asarray(G, dtype=float)
    if t is None:
        t = default_t(B.shape[0])
    if t <= 0:
        raise ValueError("t must be positive")
    if power is None:
        power = B.shape[0]
    if B.shape[0] == 0:
        return 0.0, np.zeros_like(B)
    with np.errstate(over="ignore", invalid="ignore"):
        value, grad = _kernels.acyclicity_kernel(np.ascontiguousarray(B, dtype=np.float64), float(t), int(power))
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise AcyclicityOverflow("acyclicity overflow")
    return float(value), grad


def threshold_graph(G: WeightedGraph, delta: float) -> Skeleton:
    if delta < 0:
        raise ValueError("threshold must be non-negative")
    return Skeleton(G.layout, np.abs(G.B) > delta)


def project_hcg(params: Parameters, x) -> HCGProjection:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != params.p:
        raise ValueError(f"moderator value has length {x.shape[0]}, expected p={params.p}")
    s = params.s
    Bt = np.zeros((s + 2, s + 2))  # transposed form: row = child
    Bt[1:s + 1, 0] = params.beta_a + params.B_xa.T @ x
    Bt[1:s + 1, 1:s + 1] = params.B_m.T
    Bt[s + 1, 0] = params.gamma_a + params.gamma_xa @ x
    Bt[s + 1, 1:s + 1] = params.gamma_m
    intercepts = np.concatenate([[params.delta_x @ x], params.B_x.T @ x, [params.gamma_x @ x]])
    return HCGProjection(B_do=Bt.T.copy(), intercepts=intercepts, x=x)


def remove_mediator(params: Parameters, i: int) -> Parameters:
    s = params.s
    if not 0 <= i < s:
        raise IndexError(f"mediator index {i} out of range for s={s}")
    keep = np.array([k for k in range(s) if k != i], dtype=int)
    return Parameters(
        delta_x=params.delta_x,
        B_x=params.B_x[:, keep],
        beta_a=params.beta_a[keep],
        B_xa=params.B_xa[:, keep],
        B_m=params.B_m[np.ix_(keep, keep)],
        gamma_x=params.gamma_x,
        gamma_a=params.gamma_a,
        gamma_xa=params.gamma_xa,
        gamma_m=params.gamma_m[keep],
        Gamma_xm=None if params.Gamma_xm is None else params.Gamma_xm[:, keep],
    )


def check_dag(G, tol: float = 0.0) -> bool:
    """True iff the support of B admits a topological order.

    A positive acyclicity value above ``tol`` rejects immediately (the value
    is exactly zero on any DAG); everything else is settled by Kahn's
    algorithm, which also catches cycles too faint to register numerically.
    """
    B = G.B if isinstance(G, WeightedGraph) else np.asarray(G, dtype=float)
    try:
        value, _ = acyclicity(B)
    except AcyclicityOverflow:
        return False
    if value > tol:
        return False
    return topological_order(B != 0) is not None
