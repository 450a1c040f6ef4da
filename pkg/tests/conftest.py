import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fraclap.domain import BubbleParams, UniformGrid, make_bubble

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def bubble_formula(x, m=0.4, eps=0.5, delta=0.25):
    """Closed-form cut-off bubble in 1D, independent of the package implementation."""
    r = np.abs(np.asarray(x, dtype=float))
    t = np.clip((r - delta) / delta, 0.0, 1.0)
    cut = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    return np.where(r < 2 * delta, cut * (eps**2 + r * r) ** ((2 * m - 1) / 2), 0.0)


def bump_formula(x, radius=0.6):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < radius
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - (x[inside] / radius) ** 2))
    return out


@pytest.fixture(scope="session")
def grid1024():
    return UniformGrid.cube(1, 1.0, 1024)


@pytest.fixture(scope="session")
def bubble1024(grid1024):
    return make_bubble(BubbleParams(1, 0.4, 0.5, 0.25), grid1024)
