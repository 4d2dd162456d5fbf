"""Bootstrap confidence intervals for effects and graph-recovery metrics."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np

from .effects import treatment_effects
from .graph import CyclicMediators, Parameters, Skeleton
from .pipeline import PipelineConfig, estimate, estimate_effects
from .discover import NotConverged
from .scenario import Dataset, preset, simulate

log = logging.getLogger(__name__)

WORKERS_ENV = "HETCAUSAL_WORKERS"
MAX_DROP_FRACTION = 0.10


def default_parallel_degree() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class BootstrapConfig:
    K: int = 1000
    alpha: float = 0.05
    method: str = "percentile"
    seed: int = 0
    parallel_degree: Optional[int] = None  # None reads HETCAUSAL_WORKERS
    by_adjust: bool = False  # Benjamini-Yekutieli adjustment of alpha across effects

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.method not in ("percentile", "gaussian"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.parallel_degree is not None and self.parallel_degree < 1:
            raise ValueError("parallel_degree must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CIRecord:
    name: str
    point: float
    lo: float
    hi: float
    method: str
    K: int

    def to_dict(self) -> dict:
        return asdict(self)


def effect_vector(reports) -> dict:
    """Flatten effect reports to ``{name: value}`` in a stable order."""
    out = {}
    for k, rep in enumerate(reports):
        tag = f"x{k}"
        te = rep.treatment
        out[f"hte@{tag}"] = te.hte
        out[f"hde@{tag}"] = te.hde
        out[f"hie@{tag}"] = te.hie
        for m in rep.mediators:
            for key in ("delta", "hdm", "him", "htm"):
                out[f"{key}_M{m.i + 1}@{tag}"] = getattr(m, key)
    return out


def replicate_seed(seed: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(k)])


def resample(data: Dataset, rng: np.random.Generator) -> Dataset:
    rows = rng.integers(0, data.n, size=data.n)
    values = data.values[rows]
    if data.centered:
        values = values - values.mean(axis=0)
    return Dataset(data.layout, values, centered=data.centered, meta=data.meta)


def _one_replicate(args):
    data, cfg, x_list, seed, k = args
    rng = np.random.default_rng(replicate_seed(seed, k))
    sample = resample(data, rng)
    try:
        return effect_vector(estimate_effects(sample, x_list, cfg))
    except (NotConverged, CyclicMediators, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        log.debug("replicate %d failed: %s", k, exc)
        return None


def run_replicates(data: Dataset, cfg: PipelineConfig, x_list, boot: BootstrapConfig) -> list:
    """Effect vectors of every replicate in index order; failures are None."""
    degree = boot.parallel_degree or default_parallel_degree()
    tasks = [(data, cfg, x_list, boot.seed, k) for k in range(boot.K)]
    if degree == 1:
        return [_one_replicate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=degree) as pool:
        return list(pool.map(_one_replicate, tasks, chunksize=max(1, boot.K // (4 * degree))))


def by_alpha(alpha: float, m: int) -> float:
    """Benjamini-Yekutieli adjusted level for ``m`` simultaneous intervals."""
    if m < 1:
        return alpha
    return alpha / (m * np.sum(1.0 / np.arange(1, m + 1)))


def interval(point: float, values: np.ndarray, alpha: float, method: str):
    values = np.asarray(values, dtype=float)
    if method == "percentile":
        lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    else:
        z = NormalDist().inv_cdf(1.0 - alpha / 2.0)
        sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        lo, hi = point - z * sd, point + z * sd
    return float(min(lo, hi)), float(max(lo, hi))


def summarize(point: dict, replicates: list, boot: BootstrapConfig) -> list:
    ok = [r for r in replicates if r is not None]
    dropped = len(replicates) - len(ok)
    if dropped > MAX_DROP_FRACTION * len(replicates):
        raise RuntimeError(f"{dropped} of {len(replicates)} bootstrap replicates failed")
    if len(ok) < 2:
        raise RuntimeError("fewer than two successful bootstrap replicates")
    alpha = by_alpha(boot.alpha, len(point)) if boot.by_adjust else boot.alpha
    records = []
    for name, value in point.items():
        values = np.array([r[name] for r in ok])
        lo, hi = interval(value, values, alpha, boot.method)
        records.append(CIRecord(name, float(value), lo, hi, boot.method, len(ok)))
    return records


def bootstrap_effects(data: Dataset, pipeline_cfg: PipelineConfig, x_list,
                      boot_cfg: BootstrapConfig = BootstrapConfig()) -> list:
    """Confidence intervals for every effect at every ``x`` in ``x_list``.

    Replicate ``k`` resamples rows with a generator seeded by
    ``(boot_cfg.seed, k)``, so results do not depend on the worker count.
    """
    if data.n < 1:
        raise ValueError("empty dataset")
    x_list = [np.asarray(x, dtype=float) for x in x_list]
    point = effect_vector(estimate_effects(data, x_list, pipeline_cfg))
    reps = run_replicates(data, pipeline_cfg, x_list, boot_cfg)
    return summarize(point, reps, boot_cfg)


def ci_json(records: list) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2)


def forest_csv(records: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "point", "lo", "hi"])
    for r in records:
        w.writerow([r.name, repr(r.point), repr(r.lo), repr(r.hi)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# graph recovery
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    fdr: float
    tpr: float
    shd: int
    tp: int = 0
    fp: int = 0
    reversed: int = 0
    missing: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(est: Skeleton, truth: Skeleton) -> EvalReport:
    if est.layout != truth.layout:
        raise ValueError("estimate and truth have different layouts")
    E = np.asarray(est.E, dtype=bool)
    T = np.asarray(truth.E, dtype=bool)
    tp = int(np.sum(E & T))
    rev = int(np.sum(E & ~T & T.T))
    fp = int(np.sum(E & ~T & ~T.T))
    missing = int(np.sum(T & ~E & ~E.T))
    n_est, n_true = int(E.sum()), int(T.sum())
    return EvalReport(
        fdr=(fp + rev) / max(1, n_est),
        tpr=tp / max(1, n_true),
        shd=fp + missing + rev,
        tp=tp, fp=fp, reversed=rev, missing=missing,
    )


@dataclass
class ReplicationTable:
    scenario: str
    rows: list = field(default_factory=list)  # one dict per seed

    COLUMNS = ("fdr", "tpr", "shd", "hde_bias", "hie_bias", "hte_bias")

    def summary(self) -> dict:
        out = {}
        for col in self.COLUMNS:
            vals = np.array([r[col] for r in self.rows], dtype=float)
            if vals.size == 0:
                out[col] = {"mean": None, "sd": None}
            else:
                out[col] = {"mean": float(vals.mean()),
                            "sd": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
        return out

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "rows": self.rows, "summary": self.summary()}

    def format_row(self) -> str:
        summ = self.summary()
        cells = []
        for col in self.COLUMNS:
            m, s = summ[col]["mean"], summ[col]["sd"]
            cells.append("-" if m is None else f"{m:.2f}({s:.2f})")
        return f"{self.scenario} " + " ".join(cells)


def run_replication(scenario_id: str, seeds, pipeline_cfg: PipelineConfig = PipelineConfig(),
                    x=None, **overrides) -> ReplicationTable:
    """Simulate, estimate and score one preset over ``seeds``."""
    spec = preset(scenario_id, **overrides)
    table = ReplicationTable(scenario_id)
    x = np.ones(spec.p) if x is None else np.asarray(x, dtype=float)
    for seed in seeds:
        try:
            G, data = simulate(spec, seed=seed)
            res = estimate(data, pipeline_cfg)
            ev = evaluate(res.skeleton, G.support())
            truth = treatment_effects(Parameters.unpack(G), x)
            est = treatment_effects(res.params, x)
        except Exception as exc:
            raise RuntimeError(f"{scenario_id} seed {seed}: {exc}") from exc
        table.rows.append({
            "seed": int(seed), "threshold": res.threshold, **ev.to_dict(),
            "hde_bias": est.hde - truth.hde, "hie_bias": est.hie - truth.hie,
            "hte_bias": est.hte - truth.hte,
        })
    return table
