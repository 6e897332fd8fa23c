import numpy as np
import pytest

from core.density_kit import GridSpec
from models.signal_model import SpikeSlabPrior
from results_store import ResultStore
from utils.helpers import derive_rng


@pytest.fixture
def posterior_prior():
    """q=0.05, sigma_x=5: the parameter set of the posterior density plots"""
    return SpikeSlabPrior(0.05, 5.0)


@pytest.fixture
def sparse_prior():
    return SpikeSlabPrior(0.02, 10.0)


@pytest.fixture
def grid():
    return GridSpec.for_prior(5.0)


@pytest.fixture
def fine_grid():
    return GridSpec.for_prior(5.0, 16384)


@pytest.fixture
def rng():
    return derive_rng(1234)


@pytest.fixture
def store(tmp_path):
    return ResultStore(str(tmp_path))


def assert_normalized(density, tol=1e-6):
    assert abs(density.total_mass - 1.0) <= tol
    assert np.all(density.slab_values >= 0)
