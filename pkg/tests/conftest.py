import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fedot.instance import Instance
from fedot.network import Bounds, TypeDistribution, complete_network
from fedot.utility import UtilityModel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, max_types=2, max_sources=2, family="linear", lower=False):
    """Small feasible instance with random coefficients and bounds."""
    nt = int(rng.integers(1, max_types + 1))
    ns = int(rng.integers(1, max_sources + 1))
    net = complete_network(nt, ns)
    a = rng.uniform(0.1, 3.0, (nt, ns))
    b = rng.uniform(0.1, 3.0, (nt, ns))
    util = UtilityModel.linear(net, a, b) if family == "linear" else UtilityModel.logarithmic(net, a, b)
    prob = rng.dirichlet(np.full(nt, 3.0))
    N = float(rng.integers(5, 50))
    p_hi = rng.uniform(0.5, 3.0, nt)
    q_hi = rng.uniform(1.0, 30.0, ns)
    if lower:
        # lower bounds small enough to keep the set nonempty
        p_lo = p_hi * rng.uniform(0.0, 0.2, nt)
        counts = prob * N
        need = float(counts @ p_lo)
        p_lo *= min(1.0, 0.5 * q_hi.sum() / need) if need > 0 else 1.0
        q_lo = np.zeros(ns)
        bounds = Bounds(p_lo, p_hi, q_lo, q_hi)
    else:
        bounds = Bounds.upper(p_hi, q_hi)
    return Instance(net, util, bounds, TypeDistribution(prob, N))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
