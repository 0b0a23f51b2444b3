import warnings

import numpy as np
import pytest
from hypothesis import settings

from hmmfrontier.model import DegenerateWarning, DensityGrid, ModelParams

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_density(rng: np.random.Generator, D: int, floor: float = 0.05) -> DensityGrid:
    v = rng.random(2**D) + floor
    return DensityGrid(v / v.mean())


def random_theta(rng: np.random.Generator, D: int = 4) -> ModelParams:
    p, q = rng.uniform(0.05, 0.95, size=2)
    return ModelParams(float(p), float(q), random_density(rng, D), random_density(rng, D))


@pytest.fixture
def no_degenerate_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        yield
