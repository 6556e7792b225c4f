"""Shared fixtures for the transport and quantization tests."""

import numpy as np
import pytest

from src.calculators.entropy_models import EntropyModel
from src.data.setups import comparison_domain, model_comparison_setup
from src.measures.models import Domain, uniform_density

MODEL_NAMES = ("w2", "ghk", "wfr", "qr")
UNBALANCED_NAMES = ("ghk", "wfr", "qr")


@pytest.fixture
def unit_square():
    return Domain.square(1.0)


@pytest.fixture
def unit_uniform(unit_square):
    """Lebesgue measure on the unit square, 64 x 64 cells."""
    return uniform_density(unit_square, 64, 64, 1.0)


@pytest.fixture
def comparison_grid():
    """Lebesgue measure on [0, 5]^2 at 128 x 128."""
    return uniform_density(comparison_domain(), 128, 128, 1.0)


@pytest.fixture
def comparison_nu():
    return model_comparison_setup(comparison_domain())


@pytest.fixture(params=MODEL_NAMES)
def model(request):
    return EntropyModel.parse(request.param)


@pytest.fixture(params=UNBALANCED_NAMES)
def unbalanced_model(request):
    return EntropyModel.parse(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
