import numpy as np
import pytest

from ecg2d.activation import compute_activation
from ecg2d.bidomain import run_bidomain
from ecg2d.config import parse_config
from ecg2d.experiments import fit_cubic_from_run


@pytest.fixture(scope="session")
def default_run():
    """The acceptance-scale reference run (about 3.3k vertices, 500 steps)."""
    cfg = parse_config("")
    return run_bidomain(cfg.bidomain_config())


@pytest.fixture(scope="session")
def default_act(default_run):
    hv = default_run.ops.heart_vertices
    return compute_activation(default_run.times, default_run.v[:, hv])


@pytest.fixture(scope="session")
def default_cubic(default_run):
    return fit_cubic_from_run(default_run)


SMALL_CONFIG = """
[mesh]
rings = 10
sectors = 48
torso_rings = 7

[time]
dt = 0.1
t_end = 16

[stimulus]
radius = 2.5
amplitude = 0.15
t0 = 4.0

[solver]
tol = 1e-13
"""


@pytest.fixture(scope="session")
def small_run():
    """A fast partial-propagation run for plumbing-level tests."""
    cfg = parse_config(SMALL_CONFIG)
    return run_bidomain(cfg.bidomain_config())


@pytest.fixture(scope="session")
def small_act(small_run):
    hv = small_run.ops.heart_vertices
    return compute_activation(small_run.times, small_run.v[:, hv])
