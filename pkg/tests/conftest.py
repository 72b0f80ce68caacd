import numpy as np
import pytest

from collective_fpf.harness import default_finite_model, section5_model


@pytest.fixture
def lg_model():
    return section5_model()


@pytest.fixture
def finite_model():
    return default_finite_model()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
