import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from hetcausal.effects import (
    effect_report, hie_path_sum, mc_do_oracle, mc_mediator_effects, mc_treatment_effects,
    mediator_effects, treatment_effects, xm_effects, xm_mediator_effects,
)
from hetcausal.graph import CyclicMediators, Parameters

from conftest import random_params


def _figure_shape(w1, w2, w3, w4):
    # A -> M1 -> Y and A -> M1 -> M2 -> Y
    return Parameters(delta_x=[0.0], B_x=[[0.0, 0.0]], beta_a=[w1, 0.0], B_xa=[[0.0, 0.0]],
                      B_m=[[0.0, w3], [0.0, 0.0]], gamma_x=[0.0], gamma_a=0.0, gamma_xa=[0.0],
                      gamma_m=[w2, w4])


@given(st.integers(0, 2**32 - 1))
def test_decomposition_identities(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng)
    x = rng.standard_normal(P.p)
    te = treatment_effects(P, x)
    me = mediator_effects(P, x)
    assert te.hte == te.hde + te.hie
    assert abs(sum(m.hdm for m in me) - te.hie) <= 1e-12
    for m in me:
        assert m.him == m.htm - m.hdm


@given(st.integers(0, 2**32 - 1))
def test_hie_equals_path_sum(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng, s=int(rng.integers(1, 7)))
    x = rng.standard_normal(P.p)
    assert hie_path_sum(P, x) == pytest.approx(treatment_effects(P, x).hie, abs=1e-10)


def test_path_sum_cases():
    w = (0.7, -1.3, 0.4, 2.0)
    assert hie_path_sum(_figure_shape(*w), [0.0]) == pytest.approx(w[0] * w[1] + w[0] * w[2] * w[3])
    assert hie_path_sum(_figure_shape(0.0, 1.0, 1.0, 1.0), [0.0]) == 0.0


def test_unit_chain_mediator_effects():
    me = mediator_effects(_figure_shape(1.0, 1.0, 1.0, 1.0), [0.0])
    assert [m.delta for m in me] == [1.0, 1.0]
    assert [m.hdm for m in me] == [1.0, 1.0]
    assert [m.htm for m in me] == [2.0, 1.0]
    assert [m.him for m in me] == [1.0, 0.0]


def test_no_interactions_means_homogeneous(rng):
    P = random_params(rng, p=3, s=5, interactions=False)
    ref = treatment_effects(P, np.zeros(3))
    other = treatment_effects(P, np.full(3, 5.0))
    assert (ref.hde, ref.hie, ref.hte) == (other.hde, other.hie, other.hte)


def test_zero_gamma_m_kills_indirect(rng):
    P = random_params(rng, p=2, s=4).replace(gamma_m=np.zeros(4))
    te = treatment_effects(P, rng.standard_normal(2))
    assert te.hie == 0.0 and te.hte == te.hde


def test_parallel_mediators_have_no_indirect_mediation(rng):
    P = random_params(rng, p=2, s=4).replace(B_m=np.zeros((4, 4)))
    for m in mediator_effects(P, rng.standard_normal(2)):
        assert m.him == pytest.approx(0.0, abs=1e-15)


def test_cyclic_mediators_raise(rng):
    P = random_params(rng, p=1, s=2)
    P = P.replace(B_m=np.array([[0.0, 0.5], [0.5, 0.0]]))
    with pytest.raises(CyclicMediators, match="cyclic mediators"):
        treatment_effects(P, [0.0])


def test_no_mediators(rng):
    P = random_params(rng, p=2, s=0)
    assert mediator_effects(P, [0.0, 1.0]) == []
    assert treatment_effects(P, [0.0, 1.0]).hie == 0.0


def test_x_length_checked(rng):
    with pytest.raises(ValueError):
        treatment_effects(random_params(rng, p=2), [1.0])


def test_xm_reduction_and_toy():
    rng = np.random.default_rng(3)
    P = random_params(rng, p=2, s=4, xm=True)
    x = rng.standard_normal(2)
    zero = P.replace(Gamma_xm=np.zeros((2, 4)))
    a, b = xm_effects(zero, x), treatment_effects(zero, x)
    assert (a.hde, a.hie, a.hte) == (b.hde, b.hie, b.hte)
    toy = Parameters(delta_x=[0.0], B_x=[[0.0]], beta_a=[1.0], B_xa=[[0.0]], B_m=[[0.0]], gamma_x=[0.0],
                     gamma_a=0.0, gamma_xa=[0.0], gamma_m=[1.0], Gamma_xm=[[2.0]])
    assert xm_effects(toy, [1.0]).hie == 3.0
    at0 = xm_effects(P, np.zeros(2)).hie
    assert at0 == pytest.approx(P.gamma_m @ np.linalg.solve(np.eye(4) - P.B_m.T, P.beta_a), abs=1e-12)
    with pytest.raises(ValueError):
        xm_effects(P.replace(Gamma_xm=None), x)
    me = xm_mediator_effects(P, x)
    assert sum(m.hdm for m in me) == pytest.approx(xm_effects(P, x).hie, abs=1e-12)


def test_report_json_schema(rng):
    P = random_params(rng, p=2, s=3)
    rep = effect_report(P, [1.0, 0.5], {"graph": "test"}).to_dict()
    json.dumps(rep)
    assert set(rep) >= {"x", "hte", "hde", "hie", "mediators"}
    assert [m["i"] for m in rep["mediators"]] == [1, 2, 3]
    assert set(rep["mediators"][0]) == {"i", "delta", "hdm", "him", "htm"}


# --- Monte-Carlo oracle ----------------------------------------------------

def test_oracle_mediator_free_mean():
    P = Parameters(delta_x=[0.5], B_x=np.zeros((1, 0)), beta_a=np.zeros(0), B_xa=np.zeros((1, 0)),
                   B_m=np.zeros((0, 0)), gamma_x=[0.8], gamma_a=-1.2, gamma_xa=[0.6], gamma_m=np.zeros(0))
    x, a = 1.5, 0.7
    res = mc_do_oracle(P.pack(), [x], a=a, n_mc=200_000, rng=np.random.default_rng(0))
    expected = 0.8 * x - 1.2 * a + 0.6 * x * a
    assert abs(res.mean_y - expected) < 3 * res.se_y


def test_oracle_all_mediators_fixed_ignores_beta_a(rng):
    P = random_params(rng, p=1, s=3)
    fixed = {i: 0.5 for i in range(3)}
    noise = np.random.default_rng(1).standard_normal((5000, P.layout.w))
    r1 = mc_do_oracle(P.pack(), [0.2], a=1.0, mediators=fixed, noise=noise)
    r2 = mc_do_oracle(P.replace(beta_a=P.beta_a + 3.0).pack(), [0.2], a=1.0, mediators=fixed, noise=noise)
    assert r1.mean_y == r2.mean_y


def test_hte_matches_oracle_within_3se():
    rng = np.random.default_rng(11)
    P = random_params(rng, p=2, s=4)
    x = rng.standard_normal(2)
    mc = mc_treatment_effects(P.pack(), x, a=0.3, n_mc=200_000, rng=rng)
    te = treatment_effects(P, x)
    for key in ("hte", "hde", "hie"):
        assert abs(mc[key].value - getattr(te, key)) < 3 * mc[key].se


def test_mediator_effects_match_definition_oracle():
    rng = np.random.default_rng(5)
    P = random_params(rng, p=1, s=3)
    x = np.array([0.8])
    mc = mc_mediator_effects(P.pack(), x, a=0.0, n_mc=100_000, rng=rng)
    for m, o in zip(mediator_effects(P, x), mc):
        assert abs(o["delta"].value - m.delta) < 4 * o["delta"].se
        # the bracketed contrasts are exact per draw, so only delta carries noise
        for key in ("hdm", "him", "htm"):
            assert o[key] == pytest.approx(getattr(m, key) / m.delta * o["delta"].value, abs=1e-9)


def test_xm_oracle_toy():
    toy = Parameters(delta_x=[0.0], B_x=[[0.0]], beta_a=[1.0], B_xa=[[0.0]], B_m=[[0.0]], gamma_x=[0.0],
                     gamma_a=0.0, gamma_xa=[0.0], gamma_m=[1.0], Gamma_xm=[[2.0]])
    mc = mc_treatment_effects(toy.pack(), [1.0], n_mc=200_000, rng=np.random.default_rng(2),
                              Gamma_xm=toy.Gamma_xm)
    assert abs(mc["hie"].value - 3.0) < 3 * mc["hie"].se
