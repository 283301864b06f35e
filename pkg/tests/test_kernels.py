import numpy as np
import pytest

from qbattery import _kernels
from qbattery.dynamics import DriveEnvelope, SimulationConfig, evolve
from qbattery.qsys import SystemSpec

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")


def test_step_matrix_equals_stage_evaluation():
    rng = np.random.default_rng(2)
    dim = 3
    l0 = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    ld = np.zeros((9, 9), dtype=complex)
    v = rng.normal(size=9) + 0j
    v = (v.reshape(3, 3) + v.reshape(3, 3).conj().T).reshape(-1)
    amps = np.zeros((5, 3))
    staged = _kernels.rk4_driven_numpy(l0, ld, amps, v, 0.01, dim)
    poly = _kernels.propagate_numpy(_kernels.rk4_step_matrix(l0, 0.01), v, 5, dim)
    np.testing.assert_allclose(staged, poly, atol=1e-13)


@pytest.mark.parametrize("fn", ["rk4_driven", "propagate"])
def test_numba_matches_numpy(fn):
    rng = np.random.default_rng(4)
    l0 = 0.1 * (rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16)))
    ld = 0.1 * (rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16)))
    v = np.ascontiguousarray(rng.normal(size=16) + 1j * rng.normal(size=16))
    if fn == "rk4_driven":
        amps = np.ascontiguousarray(rng.uniform(size=(20, 3)))
        args = (l0, ld, amps, v, 0.01, 4)
    else:
        args = (np.ascontiguousarray(_kernels.rk4_step_matrix(l0, 0.01)), v, 20, 4)
    a = getattr(_kernels, f"{fn}_numpy")(*args)
    b = getattr(_kernels, f"{fn}_numba")(*args)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_evolve_backends_agree():
    cfg = dict(system=SystemSpec.uniform(), drive=DriveEnvelope(1.0, None, 0.5), t_final=2.0)
    a = evolve(SimulationConfig(**cfg, use_numba=False))
    b = evolve(SimulationConfig(**cfg, use_numba=True))
    np.testing.assert_allclose(a.energy, b.energy, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(a.final_rho, b.final_rho, atol=1e-12)
