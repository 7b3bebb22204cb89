import numpy as np
import pytest

from tweezerlab.atoms import AtomSpecies, LaserSet
from tweezerlab.double_well import ScatteringLengths, TrapConfig
from tweezerlab.grids import Grid1D
from tweezerlab.spectral import RelaxationOptions


@pytest.fixture(scope="session")
def sr() -> AtomSpecies:
    return AtomSpecies.builtin("Sr")


@pytest.fixture(scope="session")
def yb() -> AtomSpecies:
    return AtomSpecies.builtin("Yb")


@pytest.fixture(scope="session")
def sr_lasers(sr) -> LaserSet:
    return LaserSet.resonant(sr, irradiance_w_cm2=1e9, lambda1_nm=688.7)


@pytest.fixture(scope="session")
def trap() -> TrapConfig:
    return TrapConfig()


@pytest.fixture(scope="session")
def weak_scattering() -> ScatteringLengths:
    return ScatteringLengths(a00=0.1, a01=0.12, a11=0.1)


@pytest.fixture(scope="session")
def grid_2d_small() -> Grid1D:
    """64-point grid sized for separations up to d = 4 sigma."""
    return Grid1D.centered(64, 12.0)


@pytest.fixture(scope="session")
def relax_2d() -> RelaxationOptions:
    return RelaxationOptions(boundary_tol=1e-4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260826)
