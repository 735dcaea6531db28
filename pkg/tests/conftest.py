import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trialoffer.market import ProductCatalog, VisibilityProfile

settings.register_profile(
    "repo", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def example():
    """The three-product instance used throughout the worked examples."""
    cat = ProductCatalog((0.8, 0.5, 0.1), (0.01, 0.1, 0.9))
    vis = VisibilityProfile((0.7, 0.2, 0.01))
    return cat, vis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
