"""File formats: role-tagged dataset CSV with a sidecar, graph and config JSON."""
from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .functional import FunctionalParams, links_to_json, parse_links
from .graph import BlockLayout, Parameters, WeightedGraph
from .scenario import Dataset

_ROLE_PATTERNS = [
    ("XA", re.compile(r"^XA\d*$")),
    ("X", re.compile(r"^X\d*$")),
    ("A", re.compile(r"^A$")),
    ("M", re.compile(r"^M\d*$")),
    ("Y", re.compile(r"^Y$")),
]


def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".meta.json")


def infer_roles(names) -> list:
    roles = []
    for name in names:
        for role, pat in _ROLE_PATTERNS:
            if pat.match(name.strip()):
                roles.append(role)
                break
        else:
            raise ValueError(f"cannot infer the role of column {name!r}")
    return roles


def _layout_permutation(roles: list) -> tuple:
    """Layout and the column permutation that puts the file in block order."""
    by = {r: [k for k, v in enumerate(roles) if v == r] for r in ("X", "A", "XA", "M", "Y")}
    p, s = len(by["X"]), len(by["M"])
    if len(by["A"]) != 1 or len(by["Y"]) != 1:
        raise ValueError("dataset needs exactly one A column and one Y column")
    if len(by["XA"]) != p:
        raise ValueError(f"expected {p} XA columns, found {len(by['XA'])}")
    perm = by["X"] + by["A"] + by["XA"] + by["M"] + by["Y"]
    return BlockLayout(p, s), perm


def write_dataset(path, data: Dataset, sidecar: bool = True) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.names())
        for row in data.values:
            w.writerow([repr(float(v)) for v in row])
    if sidecar:
        meta = {
            "p": data.layout.p,
            "s": data.layout.s,
            "roles": infer_roles(data.names()),
            "centered": data.centered,
            "column_means": [float(v) for v in data.column_means],
            "meta": data.meta,
        }
        sidecar_path(path).write_text(json.dumps(meta, indent=2))
    return path


def read_dataset(path, sidecar: Optional[Union[str, Path]] = None) -> Dataset:
    """Load a dataset; roles come from the sidecar if present, else from the header."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"dataset {path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"dataset {path} has no rows")
    try:
        values = np.array(body, dtype=float)
    except ValueError as exc:
        raise ValueError(f"dataset {path} has non-numeric entries") from exc
    if values.shape[1] != len(header):
        raise ValueError(f"dataset {path} has ragged rows")
    side = Path(sidecar) if sidecar is not None else sidecar_path(path)
    meta = json.loads(side.read_text()) if side.is_file() else {}
    roles = meta.get("roles") or infer_roles(header)
    if len(roles) != len(header):
        raise ValueError("sidecar roles do not match the header")
    layout, perm = _layout_permutation(list(roles))
    values = values[:, perm]
    means = meta.get("column_means")
    return Dataset(
        layout, values, centered=bool(meta.get("centered", False)),
        column_means=np.asarray(means)[perm] if means is not None else None,
        meta=meta.get("meta", {}),
    )


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------

def graph_to_dict(G: Union[WeightedGraph, FunctionalParams]) -> dict:
    if isinstance(G, FunctionalParams):
        return {
            "kind": "functional",
            **G.params.pack().to_dict(),
            "links": links_to_json(G.links),
            "intercepts": {"A": G.intercept_a, "M": list(map(float, G.intercept_m)), "Y": G.intercept_y},
            "fd_step": G.fd_step,
        }
    return {"kind": "linear", **G.to_dict()}


def graph_from_dict(d: dict) -> Union[WeightedGraph, FunctionalParams]:
    G = WeightedGraph.from_dict(d)
    kind = d.get("kind", "linear")
    if kind == "linear":
        return G
    if kind != "functional":
        raise ValueError(f"unknown graph kind {kind!r}")
    icp = d.get("intercepts", {})
    return FunctionalParams(
        Parameters.unpack(G), parse_links(d.get("links", [])),
        intercept_a=float(icp.get("A", 0.0)), intercept_m=icp.get("M"),
        intercept_y=float(icp.get("Y", 0.0)), fd_step=float(d.get("fd_step", 1e-5)),
    )


def write_graph(path, G) -> Path:
    path = Path(path)
    path.write_text(json.dumps(graph_to_dict(G), indent=2))
    return path


def read_graph(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such graph: {path}")
    return graph_from_dict(json.loads(path.read_text()))


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return json.loads(path.read_text())


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
