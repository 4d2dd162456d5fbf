"""Heterogeneous causal effects in linear and functional SEMs with moderators and mediators."""

__version__ = "0.1.0"

from ._accel import backend
from .effects import mediator_effects, treatment_effects, xm_effects
from .graph import BlockLayout, Parameters, Skeleton, WeightedGraph
from .pipeline import PipelineConfig, estimate
from .scenario import preset, simulate

__all__ = [
    "BlockLayout", "Parameters", "PipelineConfig", "Skeleton", "WeightedGraph", "backend",
    "estimate", "mediator_effects", "preset", "simulate", "treatment_effects", "xm_effects",
]
