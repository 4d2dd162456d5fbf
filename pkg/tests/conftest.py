import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hetcausal.graph import Parameters

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_params(rng, p=None, s=None, low=-1.0, high=1.0, xm=False, interactions=True):
    """Random coefficient blocks with an acyclic (upper-triangular after permutation) mediator block."""
    p = int(rng.integers(1, 4)) if p is None else p
    s = int(rng.integers(1, 7)) if s is None else s
    u = lambda *shape: rng.uniform(low, high, shape)
    perm = rng.permutation(s)
    B_m = np.triu(u(s, s), 1) * (rng.random((s, s)) < 0.6)
    B_m = B_m[np.ix_(np.argsort(perm), np.argsort(perm))]
    return Parameters(
        delta_x=u(p), B_x=u(p, s), beta_a=u(s),
        B_xa=u(p, s) if interactions else np.zeros((p, s)),
        B_m=B_m, gamma_x=u(p), gamma_a=float(u(1)[0]),
        gamma_xa=u(p) if interactions else np.zeros(p),
        gamma_m=u(s), Gamma_xm=u(p, s) if xm else None,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
