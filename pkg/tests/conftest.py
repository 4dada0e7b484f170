import math

import numpy as np
import pytest

from tmbumps.greenfn import DomainSpec, GreenEvaluator


@pytest.fixture(scope="session")
def unit_disk():
    return GreenEvaluator(DomainSpec.disk(1.0))


@pytest.fixture(scope="session")
def sampled_circle():
    th = 2 * math.pi * np.arange(64) / 64
    return GreenEvaluator(DomainSpec.smooth_boundary(np.column_stack([np.cos(th), np.sin(th)])))


@pytest.fixture(scope="session")
def unit_branch():
    from tmbumps.radial import trace_branch

    return trace_branch([4, 5, 6, 7, 8])


@pytest.fixture(scope="session")
def bubbles():
    from tmbumps.bubble import BubbleParams, integrate_bubble

    return {g: integrate_bubble(BubbleParams(g), g * g + 10.0) for g in (4, 6, 8)}


def disk_points(n, rmax, rng):
    r = rmax * np.sqrt(rng.random(n))
    a = 2 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])
