from pathlib import Path

import numpy as np
import pytest

from molxtal.molecule import Molecule, from_xyz, standardize

DATA = Path(__file__).parent / "data"

# a small asymmetric molecule: no proper or improper self-symmetry, so the
# pose recovered from a built cell is unique
ASYMMETRIC_Z = [6, 7, 8, 1, 1]
ASYMMETRIC_XYZ = [[0, 0, 0], [1.4, 0.1, 0], [-0.3, 1.3, 0.2], [-0.5, -0.9, 0.4], [1.9, -0.8, -0.5]]


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def benzene():
    return standardize(from_xyz(DATA / "benzene.xyz"))[0]


@pytest.fixture(scope="session")
def asym():
    return standardize(Molecule(ASYMMETRIC_Z, ASYMMETRIC_XYZ))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
