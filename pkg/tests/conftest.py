import numpy as np
import pytest

from app.services.dataio import make_synthetic
from app.utils.models import SyntheticSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    return SyntheticSpec(d=16, k=10, p=8, q=4, images_per_class=30, K_annotated=5, noise_std=0.05, seed=1)


@pytest.fixture
def synthetic(small_spec):
    """(Dataset, unseen TestSet, W_true) for the default desk-scale problem."""
    return make_synthetic(small_spec)


@pytest.fixture
def tiny_synthetic():
    spec = SyntheticSpec(d=6, k=4, p=3, q=2, images_per_class=8, K_annotated=2, noise_std=0.05, seed=7)
    return make_synthetic(spec)
