import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lassophase import CovarianceSpec, MCConfig, SignalPrior, build

# one profile for the whole suite: numba warmup and MC evals blow any
# per-example deadline, and derandomization keeps reruns comparable
settings.register_profile(
    "suite",
    deadline=None,
    max_examples=30,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def ident_spec():
    return CovarianceSpec(family="identity")


@pytest.fixture(scope="session")
def ar_spec():
    return CovarianceSpec(family="ar1", rho=0.5)


@pytest.fixture(scope="session")
def ar_model_8(ar_spec):
    return build(ar_spec.with_dim(8))


@pytest.fixture(scope="session")
def prior_015():
    return SignalPrior(0.15)


@pytest.fixture(scope="session")
def mc_small():
    # two p values keep the extrapolation path exercised without the cost of
    # the acceptance-grade grid
    return MCConfig(p_grid=(100, 200), replicates=60, base_seed=0)


@pytest.fixture(scope="session")
def mc_default():
    return MCConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
