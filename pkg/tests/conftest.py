"""
Shared fixtures for the optneq test suite.

Small, seeded instances only: a 2-D rotation toy problem, a 5-player and a
10-player Cournot game, and the mixing matrices of the star digraph and the
Petersen graph.
"""

import pathlib
import sys

import numpy as np
import pytest

# Add project root to path
SCRIPT_DIR = pathlib.Path(__file__).parent
PROJECT_ROOT = SCRIPT_DIR.parent
sys.path.insert(0, str(PROJECT_ROOT))

from optneq.graph import (  # noqa: E402
    TopologyKind,
    build_gossip_matrix,
    build_pull_matrix,
    build_push_matrix,
    build_topology,
)
from optneq.problem import GaussianDet, UniformStoch, build_cournot, build_skew_toy  # noqa: E402
from optneq.schedule import AlgorithmMode, ScheduleParams  # noqa: E402


@pytest.fixture
def toy():
    return build_skew_toy()


@pytest.fixture
def cournot5():
    params, inst = build_cournot(5, seed=3, b_spec=GaussianDet(mean=0.0, var=10.0))
    return params, inst


@pytest.fixture
def cournot10():
    params, inst = build_cournot(10, seed=1, b_spec=GaussianDet(mean=0.0, var=10.0))
    return params, inst


@pytest.fixture
def stochastic10():
    params, inst = build_cournot(10, seed=1, b_spec=UniformStoch(lo=1.0, hi=10.0))
    return params, inst


@pytest.fixture
def star_rc():
    t = build_topology(TopologyKind.STAR_DIGRAPH, m=10)
    return build_pull_matrix(t), build_push_matrix(t)


@pytest.fixture
def petersen_w():
    return build_gossip_matrix(build_topology(TopologyKind.PETERSEN))


@pytest.fixture
def pp_schedule():
    return ScheduleParams(gamma_hat=1.0, lambda_coef=1.0, big_gamma=10.0, a=0.5, b=0.3,
                          mode=AlgorithmMode.PUSH_PULL)


@pytest.fixture
def dsgt_schedule():
    return ScheduleParams(gamma_hat=1.0, lambda_coef=1.0, big_gamma=10.0, a=0.55, b=0.3,
                          mode=AlgorithmMode.DSGT)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
