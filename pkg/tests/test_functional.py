import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from hetcausal.debias import LassoConfig, refit
from hetcausal.effects import mediator_effects, treatment_effects
from hetcausal.functional import (
    LinkFunction, FunctionalParams, fit_functional, functional_mediator_effects, functional_report,
    functional_sample, functional_treatment_effects, links_to_json, outcome_mean, parse_links,
)
from hetcausal.graph import BlockLayout, CyclicMediators, Parameters, Skeleton
from hetcausal.scenario import Dataset, preset, simulate

from conftest import random_params

SHIPPED = [LinkFunction("identity"), LinkFunction("polynomial", degree=2), LinkFunction("polynomial", degree=3),
           LinkFunction("sine"), LinkFunction("tanh"),
           LinkFunction("table", knots=(-3.0, -1.0, 0.5, 3.0), values=(1.0, 0.0, 2.0, -1.0))]


@pytest.mark.parametrize("link", SHIPPED, ids=lambda l: f"{l.kind}{l.degree}")
@given(u=st.floats(-2.5, 2.5))
def test_derivative_matches_central_difference(link, u):
    if link.kind == "table" and np.min(np.abs(u - np.array(link.knots))) < 1e-3:
        return  # kink
    h = 1e-6
    fd = (link(u + h) - link(u - h)) / (2 * h)
    assert link.derivative(u) == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_link_validation_and_json():
    with pytest.raises(ValueError):
        LinkFunction("spline")
    with pytest.raises(ValueError):
        LinkFunction("polynomial", degree=0)
    with pytest.raises(ValueError):
        LinkFunction("table", knots=(1.0, 0.0), values=(0.0, 1.0))
    spec = [{"block": "Y.a", "kind": "polynomial", "degree": 2}, {"block": "M.a", "kind": "sine"}]
    links = parse_links(spec)
    assert links["Y.a"] == LinkFunction("polynomial", degree=2)
    assert parse_links(json.loads(json.dumps(links_to_json(links)))) == links
    with pytest.raises(ValueError):
        parse_links([{"block": "Q.z", "kind": "sine"}])


@given(st.integers(0, 2**32 - 1))
def test_identity_links_reduce_to_linear(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng)
    fp = FunctionalParams(P)
    x, a = rng.standard_normal(P.p), float(rng.standard_normal())
    te, lin = functional_treatment_effects(fp, x, a), treatment_effects(P, x)
    for key in ("hde", "hie", "hte"):
        assert getattr(te, key) == pytest.approx(getattr(lin, key), abs=1e-10)
    for f, l in zip(functional_mediator_effects(fp, x, a), mediator_effects(P, x)):
        for key in ("delta", "hdm", "him", "htm"):
            assert getattr(f, key) == pytest.approx(getattr(l, key), abs=1e-10)


def _nonlinear(P):
    return FunctionalParams(P, {
        "M.a": LinkFunction("polynomial", degree=3), "M.xa": LinkFunction("tanh"),
        "Y.a": LinkFunction("sine"), "Y.xa": LinkFunction("polynomial", degree=2), "Y.m": LinkFunction("sine"),
    })


@given(st.integers(0, 2**32 - 1))
def test_chain_rule_identities(seed):
    rng = np.random.default_rng(seed)
    fp = _nonlinear(random_params(rng))
    x, a = rng.standard_normal(fp.p), float(rng.uniform(-1.5, 1.5))
    te = functional_treatment_effects(fp, x, a)
    me = functional_mediator_effects(fp, x, a)
    assert te.hte == te.hde + te.hie
    assert abs(sum(m.hdm for m in me) - te.hie) <= 1e-8
    for m in me:
        assert m.him == pytest.approx(m.htm - m.hdm, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_analytic_vs_finite_difference_effects(seed):
    rng = np.random.default_rng(seed)
    fp = _nonlinear(random_params(rng))
    x, a = rng.standard_normal(fp.p), float(rng.uniform(-1.5, 1.5))
    an = functional_treatment_effects(fp, x, a)
    fd = functional_treatment_effects(fp, x, a, use_fd=True)
    h = 1e-5
    direct_fd = (outcome_mean(fp, x, a + h) - outcome_mean(fp, x, a - h)) / (2 * h)
    for key in ("hde", "hie", "hte"):
        assert getattr(fd, key) == pytest.approx(getattr(an, key), rel=1e-5, abs=1e-5)
    assert direct_fd == pytest.approx(an.hte, rel=1e-5, abs=1e-5)


def test_quadratic_treatment_direct_effect_matches_simulation():
    P = Parameters(delta_x=[0.0], B_x=np.zeros((1, 0)), beta_a=np.zeros(0), B_xa=np.zeros((1, 0)),
                   B_m=np.zeros((0, 0)), gamma_x=[0.0], gamma_a=1.0, gamma_xa=[0.0], gamma_m=np.zeros(0))
    fp = FunctionalParams(P, {"Y.a": LinkFunction("polynomial", degree=2)})
    for a in (-1.0, 0.0, 0.7, 2.0):
        assert functional_treatment_effects(fp, [0.3], a).hde == pytest.approx(2 * a)
        h, n = 0.5, 100_000
        hi = functional_sample(fp, n, np.random.default_rng(1), x=[0.3], a=a + h)[:, -1]
        lo = functional_sample(fp, n, np.random.default_rng(1), x=[0.3], a=a - h)[:, -1]
        diff = (hi - lo) / (2 * h)
        assert abs(diff.mean() - 2 * a) <= 3 * diff.std() / np.sqrt(n) + 1e-9


def test_zero_gamma_m_and_parallel(rng):
    P = random_params(rng, p=2, s=4)
    te = functional_treatment_effects(_nonlinear(P.replace(gamma_m=np.zeros(4))), [0.1, 0.2], 0.5)
    assert te.hie == 0.0
    for m in functional_mediator_effects(_nonlinear(P.replace(B_m=np.zeros((4, 4)))), [0.1, 0.2], 0.5):
        assert m.him == pytest.approx(0.0, abs=1e-14)


def test_non_separable_outcome_link_rejected(rng):
    P = random_params(rng, p=1, s=2)
    fp = FunctionalParams(P, {"Y.m": LinkFunction("custom", fn=np.sin, dfn=np.cos, separable=False)})
    with pytest.raises(ValueError):
        functional_mediator_effects(fp, [0.0], 0.0)


def test_cyclic_block_raises(rng):
    P = random_params(rng, p=1, s=2).replace(B_m=np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(CyclicMediators):
        functional_treatment_effects(FunctionalParams(P), [0.0], 0.0)


def test_identity_fit_matches_refit():
    G, d = simulate(preset("S3"), seed=6)
    fp = fit_functional(d, G.support())
    exact = refit(d, G.support(), LassoConfig(lambda_frac=0.0, max_iter=100_000, tol=1e-13))
    assert_allclose(fp.params.pack().B, exact.B, atol=1e-6)


def test_sine_fit_recovers_coefficient():
    rng = np.random.default_rng(0)
    L, n = BlockLayout(1, 0), 5000
    X, A = rng.standard_normal(n), 2 * rng.standard_normal(n)
    D = np.column_stack([X, A, X * A, 2 * np.sin(A) + rng.standard_normal(n)])
    E = np.zeros((L.w, L.w), bool)
    E[L.A, L.Y] = True
    fp = fit_functional(Dataset(L, D), Skeleton(L, E), {"Y.a": LinkFunction("sine")})
    assert fp.params.gamma_a == pytest.approx(2.0, abs=0.05)


def test_empty_skeleton_and_rank_deficiency():
    G, d = simulate(preset("S2"), seed=1)
    L = d.layout
    fp = fit_functional(d, Skeleton(L, np.zeros((L.w, L.w))))
    assert not np.any(fp.params.pack().B)
    V = d.values.copy()
    V[:, L.M.start + 1] = V[:, L.M.start]  # duplicate mediator column
    E = np.zeros((L.w, L.w), bool)
    E[L.M.start, L.Y] = E[L.M.start + 1, L.Y] = True
    with pytest.raises(ValueError, match="Y"):
        fit_functional(Dataset(L, V), Skeleton(L, E))


def test_functional_fit_on_nonlinear_data_recovers_effects():
    rng = np.random.default_rng(4)
    P = random_params(rng, p=1, s=2, low=-1, high=1).replace(B_m=np.zeros((2, 2)))
    links = {"Y.a": LinkFunction("polynomial", degree=2), "M.a": LinkFunction("sine")}
    truth = FunctionalParams(P, links)
    D = functional_sample(truth, 20_000, rng)
    L = BlockLayout(1, 2)
    fp = fit_functional(Dataset(L, D), P.pack().support(), links)
    for a in (-0.5, 0.5):
        est, ref = functional_treatment_effects(fp, [0.5], a), functional_treatment_effects(truth, [0.5], a)
        assert est.hte == pytest.approx(ref.hte, abs=0.1)


def test_report_has_treatment_level(rng):
    rep = functional_report(_nonlinear(random_params(rng, p=2, s=2)), [0.0, 1.0], 0.25).to_dict()
    assert rep["a"] == 0.25 and len(rep["mediators"]) == 2
