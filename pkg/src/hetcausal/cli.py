"""Command-line interface.

Every command writes its outputs plus one ``manifest.json`` into ``--out``.
Failures exit nonzero and print a JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .debias import refit
from .dot import to_dot
from .effects import effect_report
from .functional import FunctionalParams, fit_functional, functional_report, parse_links
from .graph import Parameters, WeightedGraph, project_hcg, threshold_graph
from .inference import BootstrapConfig, bootstrap_effects, ci_json, evaluate, forest_csv, run_replication
from .pipeline import PipelineConfig, discover_graph
from .scenario import PRESETS, ScenarioSpec, preset, simulate


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    sys.exit(code)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, args, started: str, inputs: dict, outputs: list, configs: dict, seed=None):
    io.write_json(out / "manifest.json", {
        "command": args.command,
        "argv": sys.argv[1:],
        "config_digests": {k: _digest(v) for k, v in configs.items()},
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "started": started,
        "finished": _now(),
        "version": __version__,
    })


def _parse_x(values, p: int) -> list:
    if not values:
        return [np.ones(p)]
    out = []
    for v in values:
        try:
            x = np.array([float(t) for t in v.split(",")])
        except ValueError:
            raise CLIError(f"cannot parse moderator value {v!r}") from None
        if x.shape[0] != p:
            raise CLIError(f"moderator value {v!r} has length {x.shape[0]}, expected p={p}")
        out.append(x)
    return out


def _pipeline_cfg(args) -> PipelineConfig:
    cfg = PipelineConfig.from_dict(io.read_json(args.config)) if args.config else PipelineConfig()
    if getattr(args, "threshold", None) is not None:
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), "threshold": args.threshold})
    return cfg


def _threshold_arg(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("threshold must be a number or 'auto'") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    started = _now()
    if args.spec:
        spec = ScenarioSpec.from_dict(io.read_json(args.spec))
    else:
        spec = preset(args.preset)
    if args.n is not None:
        spec = ScenarioSpec.from_dict({**spec.to_dict(), "n": args.n})
    seed = spec.seed if args.seed is None else args.seed
    G, data = simulate(spec, seed=seed)
    out = _outdir(args.out)
    files = [io.write_dataset(out / "data.csv", data), io.sidecar_path(out / "data.csv"),
             io.write_graph(out / "true_graph.json", G)]
    _manifest(out, args, started, {"spec": args.spec}, files, {"scenario": spec.to_dict()}, seed)


def cmd_discover(args):
    started = _now()
    data = io.read_dataset(args.data)
    cfg = _pipeline_cfg(args)
    raw, delta, skel, converged = discover_graph(data, cfg)
    out = _outdir(args.out)
    thr = WeightedGraph(raw.layout, raw.B * skel.E)
    files = [io.write_graph(out / "raw_graph.json", raw), io.write_graph(out / "thresholded_graph.json", thr)]
    if args.links:
        fp = fit_functional(data, skel, parse_links(io.read_json(args.links)))
        files.append(io.write_graph(out / "graph.json", fp))
    else:
        files.append(io.write_graph(out / "graph.json", refit(data, skel, cfg.lasso)))
    files.append(io.write_json(out / "discovery.json", {
        "threshold": delta, "converged": converged, "n_edges": skel.n_edges,
    }))
    _manifest(out, args, started, {"data": args.data, "config": args.config, "links": args.links},
              files, {"pipeline": cfg.to_dict()})


def cmd_effects(args):
    started = _now()
    G = io.read_graph(args.graph)
    p = G.p
    xs = _parse_x(args.x, p)
    prov = {"graph": str(args.graph)}
    if isinstance(G, FunctionalParams):
        reports = [functional_report(G, x, args.a, prov) for x in xs]
    else:
        reports = [effect_report(Parameters.unpack(G), x, prov) for x in xs]
    out = _outdir(args.out)
    files = [io.write_json(out / "effects.json", [r.to_dict() for r in reports])]
    _manifest(out, args, started, {"graph": args.graph}, files, {})


def cmd_bootstrap(args):
    started = _now()
    data = io.read_dataset(args.data)
    cfg = _pipeline_cfg(args)
    boot = BootstrapConfig(K=args.K, alpha=args.alpha, method=args.method, seed=args.seed,
                           parallel_degree=args.workers, by_adjust=args.by_adjust)
    records = bootstrap_effects(data, cfg, _parse_x(args.x, data.layout.p), boot)
    out = _outdir(args.out)
    (out / "ci.json").write_text(ci_json(records))
    (out / "forest.csv").write_text(forest_csv(records))
    _manifest(out, args, started, {"data": args.data, "config": args.config},
              [out / "ci.json", out / "forest.csv"], {"pipeline": cfg.to_dict(), "bootstrap": boot.to_dict()},
              args.seed)


def _skeleton(path, delta):
    G = io.read_graph(path)
    if isinstance(G, FunctionalParams):
        G = G.params.pack()
    return threshold_graph(G, delta)


def cmd_evaluate(args):
    started = _now()
    rep = evaluate(_skeleton(args.est, args.threshold), _skeleton(args.truth, 0.0))
    out = _outdir(args.out)
    files = [io.write_json(out / "eval.json", rep.to_dict())]
    _manifest(out, args, started, {"est": args.est, "truth": args.truth}, files, {})
    print(json.dumps(rep.to_dict()))


def _seed_range(text):
    try:
        if ".." in text:
            a, b = text.split("..")
            seeds = list(range(int(a), int(b) + 1))
        else:
            seeds = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    return seeds


def cmd_replicate(args):
    started = _now()
    cfg = _pipeline_cfg(args)
    overrides = {"n": args.n} if args.n is not None else {}
    table = run_replication(args.preset, args.seeds, cfg, **overrides)
    out = _outdir(args.out)
    files = [io.write_json(out / "replication.json", table.to_dict())]
    _manifest(out, args, started, {"config": args.config}, files, {"pipeline": cfg.to_dict()})
    print("scenario fdr tpr shd hde_bias hie_bias hte_bias")
    print(table.format_row())


def cmd_export_dot(args):
    started = _now()
    G = io.read_graph(args.graph)
    params = G.params if isinstance(G, FunctionalParams) else Parameters.unpack(G)
    target = project_hcg(params, _parse_x([args.x], params.p)[0]) if args.x else params.pack()
    out = _outdir(args.out)
    path = out / "graph.dot"
    path.write_text(to_dot(target))
    _manifest(out, args, started, {"graph": args.graph}, [path], {})


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hetcausal", description="Heterogeneous causal effects with moderated mediation graphs.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("simulate", help="draw a synthetic scenario")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--spec", help="scenario JSON")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("discover", help="estimate the graph from data")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", help="pipeline JSON")
    sp.add_argument("--threshold", type=_threshold_arg)
    sp.add_argument("--links", help="link specification JSON; fits the functional model")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_discover)

    sp = sub.add_parser("effects", help="effects of a fitted graph")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--x", action="append", help="comma-separated moderator values; repeatable")
    sp.add_argument("--a", type=float, default=0.0, help="treatment level (functional graphs)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_effects)

    sp = sub.add_parser("bootstrap", help="bootstrap confidence intervals")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config")
    sp.add_argument("--threshold", type=_threshold_arg)
    sp.add_argument("--x", action="append")
    sp.add_argument("--K", type=int, default=1000)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--method", choices=("percentile", "gaussian"), default="percentile")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--by-adjust", action="store_true", help="Benjamini-Yekutieli level adjustment")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bootstrap)

    sp = sub.add_parser("evaluate", help="FDR, TPR and SHD of an estimate against a truth")
    sp.add_argument("--est", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--threshold", type=float, default=0.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("replicate", help="run a preset over many seeds")
    sp.add_argument("--preset", required=True, choices=sorted(PRESETS))
    sp.add_argument("--seeds", type=_seed_range, default=list(range(1, 21)), help="e.g. 1..20")
    sp.add_argument("--n", type=int)
    sp.add_argument("--config")
    sp.add_argument("--threshold", type=_threshold_arg, default=0.4)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_replicate)

    sp = sub.add_parser("export-dot", help="write a Graphviz DOT file")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--x", help="project onto the graph at this moderator value")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export_dot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # reported as JSON for callers
        _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
