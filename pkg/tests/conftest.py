import numpy as np
import pytest

from parisian_levy import LevyModel, Scenario, reference_models
from parisian_levy.levy_model import JumpComponent


@pytest.fixture(scope="session")
def models():
    return reference_models()


@pytest.fixture(scope="session")
def brownian(models):
    return models["brownian"]


@pytest.fixture(scope="session")
def cl(models):
    return models["cramer_lundberg"]


@pytest.fixture(scope="session")
def jd(models):
    return models["jump_diffusion"]


@pytest.fixture(scope="session")
def drifting_down():
    """Compound Poisson model with negative mean, so Phi_0 > 0."""
    return LevyModel.with_drift(0.5, jumps=[JumpComponent.exponential(1.0, 1.0)])


@pytest.fixture
def base():
    return Scenario(q=0.05, r=1.0, a=-1.0, b=2.0, x=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
