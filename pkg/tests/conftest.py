from pathlib import Path

import numpy as np
import pytest

from basinlab import load_canonical_dataset
from basinlab.fixtures import fixture_theta0


@pytest.fixture(scope="session")
def canonical():
    return load_canonical_dataset()


@pytest.fixture(scope="session")
def theta0_plane():
    return fixture_theta0()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def datadir():
    return Path(__file__).parent / "data"


def random_theta(rng, scale=1.0):
    return rng.standard_normal(4) * scale
