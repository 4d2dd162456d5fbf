"""Graphviz DOT export: positive weights red, negative blue."""
from __future__ import annotations

from typing import Union

import numpy as np

from .graph import HCGProjection, WeightedGraph


def _edge_color(weight: float) -> str:
    return "red" if weight > 0 else "blue"


def to_dot(G: Union[WeightedGraph, HCGProjection], name: str = "G") -> str:
    if isinstance(G, HCGProjection):
        B, names = G.B_do, G.names()
    else:
        B, names = G.B, G.layout.names()
    lines = [f"digraph {name} {{"]
    for i, j in zip(*np.nonzero(B)):
        w = float(B[i, j])
        lines.append(f'  "{names[i]}" -> "{names[j]}" [label="{w:.3f}", color={_edge_color(w)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
