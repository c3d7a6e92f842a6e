import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from nrdisp.core import EffectiveParams, mhz
from nrdisp.presets import get_preset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def device_a():
    return get_preset("device-a")


@pytest.fixture
def device_b():
    return get_preset("device-b")


@pytest.fixture
def reciprocal():
    return get_preset("reciprocal")


def rates(lo=0.05, hi=2.0):
    return st.floats(lo, hi).map(mhz)


@st.composite
def physical_params(draw, min_gamma=0.05, identifiable=False):
    """Physical effective parameters, rates drawn in MHz.

    ``identifiable`` keeps theta and eta away from zero: at theta = eta = 0 the
    two dissipators merge and Gamma cannot be separated from kappa.
    """
    if identifiable:
        theta = draw(st.floats(0.1, 3.0)) * draw(st.sampled_from([-1, 1]))
        eta = draw(st.floats(0.05, 1.0)) * draw(st.sampled_from([-1, 1]))
    else:
        theta = draw(st.floats(-math.pi, math.pi))
        eta = draw(st.floats(-1.0, 1.0))
    return EffectiveParams(
        delta_c=mhz(draw(st.floats(-1.0, 1.0))),
        lam=mhz(draw(st.floats(-1.0, 1.0))),
        kappa=draw(rates(0.05, 1.5)),
        gamma_nr=draw(rates(min_gamma, 1.5)),
        theta=theta,
        eta=eta,
    )


def random_params(rng: np.random.Generator) -> EffectiveParams:
    """Parameter sets bounded away from zero in every component (for relative-error checks)."""
    sign = lambda: rng.choice([-1.0, 1.0])
    return EffectiveParams(
        delta_c=mhz(sign() * rng.uniform(0.1, 1.0)),
        lam=mhz(sign() * rng.uniform(0.1, 1.0)),
        kappa=mhz(rng.uniform(0.2, 1.5)),
        gamma_nr=mhz(rng.uniform(0.2, 1.5)),
        theta=sign() * rng.uniform(0.2, 2.9),
        eta=sign() * rng.uniform(0.1, 0.8),
    )
