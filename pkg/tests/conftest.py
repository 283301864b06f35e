import numpy as np
import pytest

from qbattery.davies import build_model
from qbattery.msclass import analytic_two_qutrit
from qbattery.qsys import SystemSpec

OMEGA, ALPHA, J, GAMMA = 10.0, 0.2, 1.0, 0.1


@pytest.fixture(scope="session")
def spec2q():
    return SystemSpec.uniform(2, 3, OMEGA, ALPHA, J)


@pytest.fixture(scope="session")
def model2q(spec2q):
    return build_model(spec2q, GAMMA)


@pytest.fixture(scope="session")
def ref2q():
    return analytic_two_qutrit(OMEGA, ALPHA, J)


def index_of(model, psi):
    """Eigenstate index with the largest overlap with ``psi``."""
    return int(np.argmax(np.abs(model.eigen.vectors.conj().T @ psi) ** 2))


def random_density(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)
