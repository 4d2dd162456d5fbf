"""Synthetic ground truth: random interaction SEMs and data drawn from them."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .graph import BlockLayout, CyclicMediators, Parameters, WeightedGraph, structural_report


@dataclass(frozen=True)
class ScenarioSpec:
    id: str = "custom"
    p: int = 2
    s: int = 6
    n: int = 500
    # "constrained-random" draws every permitted slot from the alphabet;
    # "er" draws the mediator block as an Erdos-Renyi DAG of expected degree er_degree
    graph_kind: str = "constrained-random"
    er_degree: float = 2.0
    weight_alphabet: tuple = (-1.0, 0.0, 1.0)
    require_interaction: bool = True
    mediator_edges: bool = True  # False: mediators are isolated (S1)
    parallel_mediators: bool = False  # True: B_M = 0 (S2)
    no_interaction: bool = False  # S3nx
    independent_treatment: bool = False  # S3mod
    baseline: float = 1.0
    center: bool = True
    seed: int = 1

    def __post_init__(self):
        if self.graph_kind not in ("constrained-random", "er"):
            raise ValueError(f"unknown graph_kind {self.graph_kind!r}")
        BlockLayout(self.p, self.s)
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "weight_alphabet", tuple(float(v) for v in self.weight_alphabet))

    @property
    def layout(self) -> BlockLayout:
        return BlockLayout(self.p, self.s)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weight_alphabet"] = list(self.weight_alphabet)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "weight_alphabet" in d:
            d["weight_alphabet"] = tuple(d["weight_alphabet"])
        return cls(**d)


_BASE = dict(p=2, s=6, n=500)
PRESETS = {
    "S1": ScenarioSpec(id="S1", mediator_edges=False, **_BASE),
    "S2": ScenarioSpec(id="S2", parallel_mediators=True, **_BASE),
    "S3": ScenarioSpec(id="S3", graph_kind="er", er_degree=2.0, **_BASE),
    "S3nx": ScenarioSpec(id="S3nx", graph_kind="er", er_degree=2.0, no_interaction=True,
                         require_interaction=False, **_BASE),
    "S3mod": ScenarioSpec(id="S3mod", graph_kind="er", er_degree=2.0, independent_treatment=True, **_BASE),
    "S4": ScenarioSpec(id="S4", p=2, s=38, n=1000, graph_kind="er", er_degree=4.0),
    "S5": ScenarioSpec(id="S5", p=18, s=6, n=1000, graph_kind="er", er_degree=4.0),
    "S6": ScenarioSpec(id="S6", p=22, s=10, n=1000, graph_kind="er", er_degree=4.0),
}


def preset(name: str, **overrides) -> ScenarioSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(spec, **overrides) if overrides else spec


@dataclass(frozen=True)
class Dataset:
    layout: BlockLayout
    values: np.ndarray
    centered: bool = False
    column_means: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        V = np.array(self.values, dtype=float)
        if V.ndim != 2 or V.shape[1] != self.layout.w:
            raise ValueError(f"values must be n x {self.layout.w}, got {V.shape}")
        V.setflags(write=False)
        object.__setattr__(self, "values", V)
        if self.column_means is None:
            object.__setattr__(self, "column_means", V.mean(axis=0))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def names(self) -> list[str]:
        return self.layout.names()

    def take(self, rows) -> "Dataset":
        return Dataset(self.layout, self.values[rows], centered=self.centered, meta=self.meta)


def _draw(rng, alphabet, shape):
    return rng.choice(np.asarray(alphabet), size=shape)


def _er_mediator_block(rng, s, degree, nonzero):
    B_m = np.zeros((s, s))
    if s < 2:
        return B_m
    prob = min(1.0, degree / (s - 1))
    order = rng.permutation(s)
    for a in range(s):
        for b in range(a + 1, s):
            if rng.random() < prob:
                B_m[order[a], order[b]] = rng.choice(nonzero)
    return B_m


def _random_dag_block(rng, s, alphabet):
    B_m = np.zeros((s, s))
    order = rng.permutation(s)
    for a in range(s):
        for b in range(a + 1, s):
            B_m[order[a], order[b]] = rng.choice(alphabet)
    return B_m


def gen_true_graph(spec: ScenarioSpec, rng: np.random.Generator) -> WeightedGraph:
    """Draw a structurally valid DAG for ``spec``."""
    alphabet = np.asarray(spec.weight_alphabet)
    nonzero = alphabet[alphabet != 0]
    if spec.require_interaction and (nonzero.size == 0 or spec.no_interaction):
        raise ValueError("an interaction edge is required but cannot be drawn")
    p, s = spec.p, spec.s
    while True:
        delta_x = _draw(rng, alphabet, p)
        gamma_x = _draw(rng, alphabet, p)
        gamma_a = float(_draw(rng, alphabet, 1)[0])
        gamma_xa = _draw(rng, alphabet, p)
        if spec.mediator_edges:
            B_x = _draw(rng, alphabet, (p, s))
            beta_a = _draw(rng, alphabet, s)
            B_xa = _draw(rng, alphabet, (p, s))
            gamma_m = _draw(rng, alphabet, s)
            if spec.parallel_mediators:
                B_m = np.zeros((s, s))
            elif spec.graph_kind == "er":
                B_m = _er_mediator_block(rng, s, spec.er_degree, nonzero)
            else:
                B_m = _random_dag_block(rng, s, alphabet)
        else:
            B_x = np.zeros((p, s))
            beta_a = np.zeros(s)
            B_xa = np.zeros((p, s))
            gamma_m = np.zeros(s)
            B_m = np.zeros((s, s))
        if spec.no_interaction:
            B_xa = np.zeros((p, s))
            gamma_xa = np.zeros(p)
        if spec.independent_treatment:
            delta_x = np.zeros(p)
        has_interaction = np.any(B_xa != 0) or np.any(gamma_xa != 0)
        if not spec.require_interaction or has_interaction:
            break
    params = Parameters(delta_x, B_x, beta_a, B_xa, B_m, gamma_x, gamma_a, gamma_xa, gamma_m)
    return params.pack()


def gaussian_noise(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def forward_sample(
    G: WeightedGraph,
    n: int,
    baseline: float = 1.0,
    center: bool = True,
    rng: Optional[np.random.Generator] = None,
    noise: Callable = gaussian_noise,
) -> Dataset:
    """Simulate ``n`` rows of the interaction SEM defined by ``G``.

    XA columns are exact products of their X column and A; ``baseline`` is
    added to Y after simulation; centering (if requested) comes last and the
    pre-centering means are kept on the dataset.
    """
    if rng is None:
        rng = np.random.default_rng()
    L = G.layout
    if structural_report(G)["h2"] != 0.0:
        raise ValueError("graph violates the structural constraints")
    order = L.sampling_order(G.B)
    eps = np.ascontiguousarray(noise(rng, (n, L.w)), dtype=np.float64)
    fixed = np.zeros(L.w, dtype=np.bool_)
    D = _kernels.sem_sample(np.ascontiguousarray(G.B), eps, order, L.p, fixed, np.zeros((1, L.w)))
    D[:, L.Y] += baseline
    means = D.mean(axis=0)
    if center:
        D = D - means
    return Dataset(L, D, centered=center, column_means=means)


def simulate(spec: ScenarioSpec, seed: Optional[int] = None):
    """Graph and dataset for ``spec``; fully determined by the seed."""
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    G = gen_true_graph(spec, rng)
    data = forward_sample(G, spec.n, spec.baseline, spec.center, rng)
    meta = {"spec": replace(spec, seed=int(seed)).to_dict(), "seed": int(seed)}
    return G, Dataset(data.layout, data.values, data.centered, data.column_means, meta)


__all__ = [
    "CyclicMediators", "Dataset", "PRESETS", "ScenarioSpec", "forward_sample",
    "gaussian_noise", "gen_true_graph", "preset", "simulate",
]
