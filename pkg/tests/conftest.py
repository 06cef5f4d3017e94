import pathlib

import numpy as np
import pytest

from dynident.chain import load_urdf

ASSETS = pathlib.Path(__file__).resolve().parent.parent / "assets"


@pytest.fixture(scope="session")
def planar2():
    return load_urdf(ASSETS / "planar2.urdf")


@pytest.fixture(scope="session")
def arm7():
    return load_urdf(ASSETS / "arm7.urdf")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
