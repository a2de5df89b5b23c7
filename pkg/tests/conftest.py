import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.optimize import brentq, minimize_scalar

from mimopower.network import ScenarioConfig, generate_scenario
from mimopower.pilots import make_pilots

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

DESK = dict(num_cells=3, users_per_cell=4, antennas=16)


def desk_scenario(seed=0, **kw):
    return generate_scenario(ScenarioConfig(**{**DESK, "seed": seed, **kw}))


def desk_setup(seed=0, kind="nonorthogonal", length=8, **kw):
    scen = desk_scenario(seed, **kw)
    return scen, make_pilots(kind, length, scen, seed=seed)


def argmin_1d(f, lo, hi):
    """Bounded scalar minimization to (near) machine precision."""
    r = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-14 * max(1.0, hi)})
    # the bounded search never evaluates the endpoints exactly
    cands = [(f(lo), lo), (f(hi), hi), (f(r.x), r.x)]
    return min(cands)[1]


def argmin_smooth_1d(f, lo, hi, h=1e-3):
    """Minimizer of a smooth unimodal ``f`` on ``[lo, hi]`` from its first-order condition.

    The derivative is a central difference, which is exact up to rounding for
    quadratics, so the root is located to near machine precision.
    """
    d = lambda x: (f(x + h) - f(x - h)) / (2 * h)
    if d(lo) >= 0:
        return lo
    if d(hi) <= 0:
        return hi
    return brentq(d, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report -----------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
