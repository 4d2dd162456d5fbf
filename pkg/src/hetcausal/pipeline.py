"""End-to-end estimation: constrained fit, threshold, LASSO refit, effects."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import discover
from .debias import LassoConfig, refit
from .discover import DEFAULT_GRID, DiscoveryConfig, NotConverged
from .effects import effect_report
from .graph import Parameters, Skeleton, WeightedGraph, threshold_graph
from .scenario import Dataset


@dataclass(frozen=True)
class PipelineConfig:
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    # a number fixes the threshold; "auto" picks it from ``grid`` by ``criterion``
    threshold: Union[float, str] = "auto"
    criterion: str = "bic"
    grid: tuple = DEFAULT_GRID
    lasso: LassoConfig = field(default_factory=LassoConfig)
    accept_unconverged: bool = True

    def __post_init__(self):
        if isinstance(self.threshold, str):
            if self.threshold != "auto":
                raise ValueError("threshold must be a number or 'auto'")
        elif self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.criterion not in ("mse", "bic"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))

    def to_dict(self) -> dict:
        return {
            "discovery": self.discovery.to_dict(),
            "threshold": self.threshold,
            "criterion": self.criterion,
            "grid": list(self.grid),
            "lasso": self.lasso.to_dict(),
            "accept_unconverged": self.accept_unconverged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "discovery" in d:
            d["discovery"] = DiscoveryConfig.from_dict(d["discovery"])
        if "lasso" in d:
            d["lasso"] = LassoConfig(**d["lasso"])
        if "grid" in d:
            d["grid"] = tuple(d["grid"])
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class PipelineResult:
    raw: WeightedGraph
    threshold: float
    skeleton: Skeleton
    refit: WeightedGraph
    converged: bool = True

    @property
    def params(self) -> Parameters:
        return Parameters.unpack(self.refit)


def discover_graph(data: Dataset, cfg: PipelineConfig):
    """Raw estimate, chosen threshold, skeleton and convergence flag."""
    converged = True
    try:
        raw = discover.fit(data, cfg.discovery)
    except NotConverged as exc:
        if not cfg.accept_unconverged:
            raise
        raw, converged = exc.best, False
    if cfg.threshold == "auto":
        delta = discover.select_threshold(raw, data, cfg.grid, cfg.criterion)
    else:
        delta = float(cfg.threshold)
    skel = threshold_graph(raw, delta)
    if not skel.is_acyclic:
        raise NotConverged(raw, float("nan"))
    return raw, delta, skel, converged


def estimate(data: Dataset, cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    raw, delta, skel, converged = discover_graph(data, cfg)
    return PipelineResult(raw, delta, skel, refit(data, skel, cfg.lasso), converged)


def estimate_effects(data: Dataset, x_list, cfg: PipelineConfig = PipelineConfig(),
                     result: Optional[PipelineResult] = None) -> list:
    """Effect reports at each moderator value in ``x_list``."""
    result = estimate(data, cfg) if result is None else result
    params = result.params
    prov = {"graph": "pipeline", "config": cfg.digest(), "threshold": result.threshold}
    return [effect_report(params, x, prov) for x in x_list]


def with_threshold(cfg: PipelineConfig, delta) -> PipelineConfig:
    return replace(cfg, threshold=delta)
