import numpy as np
import pytest

from talnet.data import default_schema, generate_synthetic


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def tiny_dataset(schema):
    # 4 identities x 2 sequences x 10 frames, clean
    return generate_synthetic(4, 2, 10, schema, noise=0.0, occlusion_prob=0.0, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
