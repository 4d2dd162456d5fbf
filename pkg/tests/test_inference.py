import csv
import io
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hetcausal.graph import BlockLayout, Skeleton
from hetcausal.inference import (
    BootstrapConfig, CIRecord, bootstrap_effects, by_alpha, ci_json, evaluate, forest_csv, interval,
    run_replication, summarize,
)
from hetcausal.pipeline import PipelineConfig
from hetcausal.scenario import preset, simulate

FIXED = PipelineConfig(threshold=0.4)


def _skel(edges, p=1, s=2):
    L = BlockLayout(p, s)
    E = np.zeros((L.w, L.w), bool)
    for i, j in edges:
        E[i, j] = True
    return Skeleton(L, E)


def test_config_validation():
    for bad in (dict(K=1), dict(alpha=0.0), dict(alpha=1.0), dict(method="bca"), dict(parallel_degree=0)):
        with pytest.raises(ValueError):
            BootstrapConfig(**bad)


def test_degenerate_replicates_give_zero_width():
    reps = [{"e": 1.5}] * 50
    for method in ("percentile", "gaussian"):
        (rec,) = summarize({"e": 1.5}, reps, BootstrapConfig(K=50, method=method))
        assert rec.lo == rec.hi == 1.5


def test_percentile_of_standard_normal():
    z = np.random.default_rng(0).standard_normal(1000)
    lo, hi = interval(0.0, z, 0.05, "percentile")
    assert lo == pytest.approx(-1.96, abs=0.15) and hi == pytest.approx(1.96, abs=0.15)
    assert (lo, hi) == tuple(np.quantile(z, [0.025, 0.975]))


def test_gaussian_interval_is_symmetric():
    z = np.random.default_rng(1).standard_normal(200) + 3.0
    lo, hi = interval(2.5, z, 0.1, "gaussian")
    assert 2.5 - lo == pytest.approx(hi - 2.5)


def test_too_many_failures():
    reps = [{"e": 1.0}] * 8 + [None] * 2
    with pytest.raises(RuntimeError):
        summarize({"e": 1.0}, reps, BootstrapConfig(K=10))
    (rec,) = summarize({"e": 1.0}, [{"e": 1.0}] * 9 + [None], BootstrapConfig(K=10))
    assert rec.K == 9


def test_by_adjustment():
    assert by_alpha(0.05, 1) == 0.05
    assert by_alpha(0.05, 3) == pytest.approx(0.05 / (3 * (1 + 1 / 2 + 1 / 3)))


def test_bootstrap_reproducible_and_worker_independent():
    _, d = simulate(preset("S3", s=4, n=200), seed=2)
    x = [np.ones(2)]
    cfg = BootstrapConfig(K=6, seed=9)
    r1 = bootstrap_effects(d, FIXED, x, cfg)
    r2 = bootstrap_effects(d, FIXED, x, cfg)
    r3 = bootstrap_effects(d, FIXED, x, BootstrapConfig(K=6, seed=9, parallel_degree=2))
    assert r1 == r2 == r3
    names = [r.name for r in r1]
    assert names[:3] == ["hte@x0", "hde@x0", "hie@x0"] and "htm_M4@x0" in names
    for r in r1:
        assert r.lo <= r.hi


def test_bootstrap_k2_and_gaussian_symmetry():
    _, d = simulate(preset("S1", n=200), seed=1)
    recs = bootstrap_effects(d, FIXED, [np.ones(2)], BootstrapConfig(K=2, method="gaussian"))
    for r in recs:
        assert r.point - r.lo == pytest.approx(r.hi - r.point)


def test_ci_outputs():
    recs = [CIRecord("hde@x0", 1.0, 0.5, 1.5, "percentile", 10)]
    assert json.loads(ci_json(recs))[0]["lo"] == 0.5
    rows = list(csv.reader(io.StringIO(forest_csv(recs))))
    assert rows == [["name", "point", "lo", "hi"], ["hde@x0", "1.0", "0.5", "1.5"]]


def test_evaluate_cases():
    truth = _skel([(0, 1), (1, 3), (1, 4), (3, 5), (4, 5)])
    assert evaluate(truth, truth).to_dict() == {
        "fdr": 0.0, "tpr": 1.0, "shd": 0, "tp": 5, "fp": 0, "reversed": 0, "missing": 0}
    extra = _skel([(0, 1), (1, 3), (1, 4), (3, 5), (4, 5), (2, 5)])
    rep = evaluate(extra, truth)
    assert (rep.fdr, rep.tpr, rep.shd) == (pytest.approx(1 / 6), 1.0, 1)
    rev = evaluate(_skel([(0, 1), (3, 1), (1, 4), (3, 5), (4, 5)]), truth)
    assert (rev.reversed, rev.shd, rev.tpr) == (1, 1, 0.8)
    miss = evaluate(_skel([(0, 1)]), truth)
    assert miss.missing == 4 and miss.shd == 4
    with pytest.raises(ValueError):
        evaluate(_skel([], p=2), truth)


def test_extra_edge_increases_shd_by_one(rng):
    truth = _skel([(0, 1), (1, 3), (3, 5)])
    base = evaluate(truth, truth).shd
    free = [(i, j) for i in range(6) for j in range(6) if i != j and not truth.E[i, j] and not truth.E[j, i]]
    for i, j in free[:10]:
        E = truth.E.copy()
        E[i, j] = True
        assert evaluate(Skeleton(truth.layout, E), truth).shd == base + 1


def test_run_replication():
    assert run_replication("S1", [], FIXED).rows == []
    table = run_replication("S1", [1, 2], FIXED)
    summ = table.summary()
    assert summ["shd"]["mean"] == 0.0 and summ["tpr"]["mean"] == 1.0
    assert abs(summ["hde_bias"]["mean"]) < 0.1
    assert table.format_row().startswith("S1 ")
    with pytest.raises(KeyError):
        run_replication("S9", [1], FIXED)
