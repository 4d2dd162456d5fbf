"""Functional SEM with per-block link functions.

Each structural equation keeps the linear coefficient blocks of the linear
model but feeds its parents through a scalar link::

    A = delta_X f_Ax(X) + e
    M = B_X' f_Mx(X) + beta_A f_Ma(A) + B_XA' f_Mxa(XA) + B_M' M + e
    Y = gamma_X f_Yx(X) + gamma_A f_Ya(A) + gamma_XA f_Yxa(XA) + gamma_M f_Ym(M) + e

Links act componentwise. Effects are derivatives in the treatment level ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .effects import EffectReport, MediatorEffects, TreatmentEffects
from .graph import (
    CyclicMediators, Parameters, Skeleton, WeightedGraph, remove_mediator, topological_order,
)
from .scenario import Dataset

BLOCKS = ("A.x", "M.x", "M.a", "M.xa", "Y.x", "Y.a", "Y.xa", "Y.m")
KINDS = ("identity", "polynomial", "sine", "tanh", "table", "custom")


@dataclass(frozen=True)
class LinkFunction:
    kind: str = "identity"
    degree: int = 1
    knots: Optional[tuple] = None  # table kind: abscissae
    values: Optional[tuple] = None  # table kind: ordinates
    fn: Optional[Callable] = field(default=None, compare=False)
    dfn: Optional[Callable] = field(default=None, compare=False)
    separable: bool = True
    h: float = 1e-5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}")
        if self.kind == "polynomial" and int(self.degree) < 1:
            raise ValueError("polynomial degree must be at least 1")
        if self.kind == "table":
            if self.knots is None or self.values is None or len(self.knots) != len(self.values) or len(self.knots) < 2:
                raise ValueError("table link needs matching knots and values (at least two)")
            if np.any(np.diff(self.knots) <= 0):
                raise ValueError("table knots must be strictly increasing")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom link needs a callable")
        if self.h <= 0:
            raise ValueError("finite-difference step must be positive")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "identity":
            return u.copy()
        if k == "polynomial":
            return u ** int(self.degree)
        if k == "sine":
            return np.sin(u)
        if k == "tanh":
            return np.tanh(u)
        if k == "table":
            return np.interp(u, self.knots, self.values)
        return np.asarray(self.fn(u), dtype=float)

    def fd_derivative(self, u, h: Optional[float] = None):
        h = self.h if h is None else h
        u = np.asarray(u, dtype=float)
        return (self(u + h) - self(u - h)) / (2.0 * h)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "identity":
            return np.ones_like(u)
        if k == "polynomial":
            d = int(self.degree)
            return d * u ** (d - 1)
        if k == "sine":
            return np.cos(u)
        if k == "tanh":
            return 1.0 - np.tanh(u) ** 2
        if k == "custom" and self.dfn is not None:
            return np.asarray(self.dfn(u), dtype=float)
        return self.fd_derivative(u)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity" or (self.kind == "polynomial" and int(self.degree) == 1)

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom links are not serialisable")
        d = {"kind": self.kind}
        if self.kind == "polynomial":
            d["degree"] = int(self.degree)
        if self.kind == "table":
            d["knots"] = list(map(float, self.knots))
            d["values"] = list(map(float, self.values))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LinkFunction":
        d = {k: v for k, v in d.items() if k != "block"}
        for key in ("knots", "values"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)


IDENTITY = LinkFunction()


def parse_links(spec) -> dict:
    """Accept ``{"Y.a": LinkFunction}`` or a list of ``{"block": ..., "kind": ...}`` records."""
    if spec is None:
        return {}
    if isinstance(spec, dict):
        items = spec.items()
    else:
        items = [(rec["block"], rec) for rec in spec]
    out = {}
    for block, link in items:
        if block not in BLOCKS:
            raise ValueError(f"unknown link block {block!r}; choose from {BLOCKS}")
        out[block] = link if isinstance(link, LinkFunction) else LinkFunction.from_dict(link)
    return out


def links_to_json(links: dict) -> list:
    return [{"block": b, **links[b].to_dict()} for b in BLOCKS if b in links]


@dataclass(frozen=True)
class FunctionalParams:
    params: Parameters
    links: dict = field(default_factory=dict)
    # intercepts of the A, M and Y equations (zero for centred data)
    intercept_a: float = 0.0
    intercept_m: Optional[np.ndarray] = None
    intercept_y: float = 0.0
    fd_step: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "links", parse_links(self.links))
        if self.intercept_m is None:
            object.__setattr__(self, "intercept_m", np.zeros(self.params.s))
        else:
            c = np.asarray(self.intercept_m, dtype=float).reshape(-1)
            if c.shape[0] != self.params.s:
                raise ValueError("intercept_m must have length s")
            object.__setattr__(self, "intercept_m", c)

    def link(self, block: str) -> LinkFunction:
        return self.links.get(block, IDENTITY)

    @property
    def p(self):
        return self.params.p

    @property
    def s(self):
        return self.params.s

    def drop_mediator(self, i: int) -> "FunctionalParams":
        keep = np.delete(np.arange(self.s), i)
        return replace(self, params=remove_mediator(self.params, i), intercept_m=self.intercept_m[keep])


def _deriv(link: LinkFunction, u, use_fd: bool, h: float):
    return link.fd_derivative(u, h) if use_fd else link.derivative(u)


def _resolvent(B_m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    s = B_m.shape[0]
    if s == 0:
        return np.zeros(0)
    if topological_order(B_m != 0) is None:
        raise CyclicMediators("cyclic mediators")
    try:
        return np.linalg.solve(np.eye(s) - B_m.T, rhs)
    except np.linalg.LinAlgError:
        raise CyclicMediators("cyclic mediators") from None


def _xa(x, a):
    return np.asarray(x, dtype=float) * float(a)


def mediator_means(fp: FunctionalParams, x, a) -> np.ndarray:
    """Noise-free mediator values under do(X = x, A = a)."""
    P = fp.params
    xa = _xa(x, a)
    rhs = (fp.intercept_m + P.B_x.T @ fp.link("M.x")(x) + P.beta_a * fp.link("M.a")(a)
           + P.B_xa.T @ fp.link("M.xa")(xa))
    return _resolvent(P.B_m, rhs)


def mediator_slopes(fp: FunctionalParams, x, a, use_fd: bool = False) -> np.ndarray:
    """d m^(a) / da."""
    P = fp.params
    x = np.asarray(x, dtype=float)
    h = fp.fd_step
    rhs = (P.beta_a * _deriv(fp.link("M.a"), a, use_fd, h)
           + P.B_xa.T @ (_deriv(fp.link("M.xa"), _xa(x, a), use_fd, h) * x))
    return _resolvent(P.B_m, rhs)


def outcome_mean(fp: FunctionalParams, x, a) -> float:
    """Noise-free outcome under do(X = x, A = a) with mediators at their noise-free values."""
    P = fp.params
    x = np.asarray(x, dtype=float)
    y = (fp.intercept_y + P.gamma_x @ fp.link("Y.x")(x) + P.gamma_a * fp.link("Y.a")(a)
         + P.gamma_xa @ fp.link("Y.xa")(_xa(x, a)))
    if fp.s:
        y = y + P.gamma_m @ fp.link("Y.m")(mediator_means(fp, x, a))
    return float(y)


def _check_x(fp, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != fp.p:
        raise ValueError(f"moderator value has length {x.shape[0]}, expected p={fp.p}")
    return x


def _hie(fp: FunctionalParams, x, a, use_fd: bool):
    if fp.s == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    slopes = mediator_slopes(fp, x, a, use_fd)
    ym = _deriv(fp.link("Y.m"), mediator_means(fp, x, a), use_fd, fp.fd_step)
    per = fp.params.gamma_m * ym * slopes
    return float(np.sum(per)), slopes, per


def functional_treatment_effects(fp: FunctionalParams, x, a: float, use_fd: bool = False) -> TreatmentEffects:
    x = _check_x(fp, x)
    P = fp.params
    h = fp.fd_step
    hde = (P.gamma_a * float(_deriv(fp.link("Y.a"), a, use_fd, h))
           + float(P.gamma_xa @ (_deriv(fp.link("Y.xa"), _xa(x, a), use_fd, h) * x)))
    hie = _hie(fp, x, a, use_fd)[0]
    return TreatmentEffects(hde=float(hde), hie=hie, hte=float(hde) + hie, x=x)


def functional_mediator_effects(fp: FunctionalParams, x, a: float, use_fd: bool = False) -> list:
    x = _check_x(fp, x)
    if fp.s == 0:
        return []
    if not fp.link("Y.m").separable:
        raise ValueError("mediator removal needs a separable Y.m link")
    hie, slopes, per = _hie(fp, x, a, use_fd)
    out = []
    for i in range(fp.s):
        htm = hie - _hie(fp.drop_mediator(i), x, a, use_fd)[0]
        hdm = float(per[i])
        out.append(MediatorEffects(i=i, delta=float(slopes[i]), hdm=hdm, him=htm - hdm, htm=htm))
    return out


def functional_report(fp: FunctionalParams, x, a: float, provenance: Optional[dict] = None) -> EffectReport:
    x = _check_x(fp, x)
    return EffectReport(x=x, treatment=functional_treatment_effects(fp, x, a),
                        mediators=functional_mediator_effects(fp, x, a), a=float(a),
                        provenance=dict(provenance or {}))


# --------------------------------------------------------------------------
# fitting and simulation
# --------------------------------------------------------------------------

def _role_link(fp_links: dict, L, response: int, parent: int) -> LinkFunction:
    src = "x" if parent < L.p else "a" if parent == L.A else "xa" if parent < L.M.start else "m"
    if response == L.A:
        block = "A.x" if src == "x" else None
    elif response == L.Y:
        block = "Y." + src
    else:
        block = "M." + src if src != "m" else None
    return fp_links.get(block, IDENTITY) if block else IDENTITY


def fit_functional(data: Dataset, skel: Skeleton, links=None, fd_step: float = 1e-5) -> FunctionalParams:
    """Least squares (with intercept) of each node on its link-transformed skeleton parents."""
    if skel.layout != data.layout:
        raise ValueError("skeleton and data layouts differ")
    if not skel.is_acyclic:
        raise ValueError("skeleton must be acyclic")
    links = parse_links(links)
    L = data.layout
    D = data.values
    names = L.names()
    allowed = L.allowed_mask()
    B = np.zeros((L.w, L.w))
    intercepts = np.zeros(L.w)
    for j in [L.A, *range(L.M.start, L.M.stop), L.Y]:
        pa = [k for k in skel.parents(j) if allowed[k, j]]
        if not pa:
            intercepts[j] = D[:, j].mean()
            continue
        F = np.column_stack([np.ones(data.n)] + [_role_link(links, L, j, k)(D[:, k]) for k in pa])
        if not np.all(np.isfinite(F)):
            raise ValueError(f"non-finite link features for response {names[j]}")
        if np.linalg.matrix_rank(F) < F.shape[1]:
            raise ValueError(f"rank-deficient design for response {names[j]}")
        coef = np.linalg.lstsq(F, D[:, j], rcond=None)[0]
        intercepts[j] = coef[0]
        B[pa, j] = coef[1:]
    params = Parameters.unpack(WeightedGraph(L, B))
    return FunctionalParams(params, links, intercept_a=float(intercepts[L.A]),
                            intercept_m=intercepts[L.M], intercept_y=float(intercepts[L.Y]),
                            fd_step=fd_step)


def functional_sample(fp: FunctionalParams, n: int, rng: Optional[np.random.Generator] = None,
                      x=None, a=None, noise_scale: float = 1.0) -> np.ndarray:
    """Draw ``n`` rows (layout order) from the functional SEM.

    ``x`` and ``a`` pin the moderators and treatment (do-interventions); X is
    standard normal otherwise.
    """
    rng = np.random.default_rng() if rng is None else rng
    P = fp.params
    p, s = P.p, P.s
    order = topological_order(P.B_m != 0) if s else []
    if order is None:
        raise CyclicMediators("cyclic mediators")
    e = noise_scale * rng.standard_normal((n, 2 + s))
    X = np.broadcast_to(np.asarray(x, dtype=float), (n, p)).copy() if x is not None else rng.standard_normal((n, p))
    if a is not None:
        A = np.full(n, float(a))
    else:
        A = fp.intercept_a + fp.link("A.x")(X) @ P.delta_x + e[:, 0]
    XA = X * A[:, None]
    M = np.zeros((n, s))
    base = (fp.intercept_m + fp.link("M.x")(X) @ P.B_x + np.outer(fp.link("M.a")(A), P.beta_a)
            + fp.link("M.xa")(XA) @ P.B_xa)
    for k in order:
        M[:, k] = base[:, k] + M @ P.B_m[:, k] + e[:, 2 + k]
    Y = (fp.intercept_y + fp.link("Y.x")(X) @ P.gamma_x + P.gamma_a * fp.link("Y.a")(A)
         + fp.link("Y.xa")(XA) @ P.gamma_xa + fp.link("Y.m")(M) @ P.gamma_m + e[:, 1])
    return np.column_stack([X, A, XA, M, Y])
