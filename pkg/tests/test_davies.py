import numpy as np
import pytest

from qbattery.davies import (RateFunction, build_model, dissipator, flux_matrix, jump_operators,
                             spectral_decompose)
from qbattery.qsys import SystemSpec, collective_lowering, excitation_number, system_hamiltonian

from .conftest import index_of, random_density


def test_two_qutrit_levels_nondegenerate(model2q, ref2q):
    es = model2q.eigen
    assert len(es.levels) == 9 and all(lev.multiplicity == 1 for lev in es.levels)
    analytic = sorted([0.0, 9.0, 11.0, 19.8, ref2q.energies["E+"], ref2q.energies["E-"]])
    for e in analytic:
        assert np.min(np.abs(es.energies - e)) < 1e-10


def test_eigensystem_invariants(model2q):
    es = model2q.eigen
    v = es.vectors
    np.testing.assert_allclose(v.conj().T @ v, np.eye(9), atol=1e-10)
    np.testing.assert_allclose(es.reconstruct(), model2q.hamiltonian, atol=1e-10)
    total = sum(es.projector(i) for i in range(len(es.levels)))
    np.testing.assert_allclose(total, np.eye(9), atol=1e-10)
    n_exp = np.real(np.einsum("ik,ij,jk->k", v.conj(), model2q.number, v))
    np.testing.assert_allclose(n_exp, es.manifold, atol=1e-8)
    assert np.all(np.diff(es.energies) >= 0)


def test_phase_convention(model2q):
    v = model2q.eigen.vectors
    for k in range(9):
        pivot = np.argmax(np.abs(v[:, k]))
        assert abs(v[pivot, k].imag) < 1e-14 and v[pivot, k].real > 0


def test_identity_single_level():
    es = spectral_decompose(np.eye(4))
    assert len(es.levels) == 1 and es.levels[0].multiplicity == 4


def test_harmonic_uncoupled_degeneracy():
    spec = SystemSpec.uniform(alpha=0.0, coupling_j=0.0)
    es = spectral_decompose(system_hamiltonian(spec), 1e-8, excitation_number(spec))
    lev = [lev for lev in es.levels if abs(lev.energy - 20) < 1e-9]
    assert lev[0].multiplicity == 3


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        spectral_decompose(np.array([[0, 1], [0, 0]], dtype=complex))


def test_jump_frequencies(model2q):
    freqs = [j.bohr_frequency for j in model2q.jumps]
    energies = model2q.eigen.energies
    diffs = {round(a - b, 8) for a in energies for b in energies if a - b > 1e-9}
    assert all(round(f, 8) in diffs for f in freqs)
    for f in (11.0, 10.8):
        assert min(abs(np.array(freqs) - f)) < 1e-10
    assert freqs == sorted(freqs)


def test_jump_invariants(model2q):
    h = model2q.hamiltonian
    for j in model2q.jumps:
        a = j.matrix
        assert np.abs(h @ a - a @ h + j.bohr_frequency * a).max() < 1e-8
        ada = a.conj().T @ a
        assert np.abs(h @ ada - ada @ h).max() < 1e-8


def test_dark_state_never_connected(model2q, ref2q):
    for j in model2q.jumps:
        assert abs(np.vdot(ref2q.states["00"], j.matrix @ ref2q.states["D1"])) < 1e-12


def test_completeness(model2q):
    es = model2q.eigen
    low = model2q.lowering
    n_lev = len(es.levels)
    total = sum(es.projector(a) @ low @ es.projector(b) for a in range(n_lev) for b in range(n_lev))
    np.testing.assert_allclose(total, low, atol=1e-10)
    np.testing.assert_allclose(sum(j.matrix for j in model2q.jumps), low, atol=1e-10)


def test_zero_lowering_gives_no_jumps(model2q):
    assert jump_operators(model2q.eigen, np.zeros((9, 9))) == []


def test_dissipator_fixed_points(model2q, ref2q):
    for name in ("00", "D1"):
        psi = ref2q.states[name]
        assert np.abs(dissipator(np.outer(psi, psi.conj()), model2q.jumps, 0.1)).max() < 1e-12


def test_dissipator_bright_rate(model2q, ref2q):
    b1 = ref2q.states["B1"]
    out = dissipator(np.outer(b1, b1.conj()), model2q.jumps, 0.1)
    # oracle: gamma * |<00|L|B1>|^2 evaluated directly
    direct = 0.1 * abs(np.vdot(ref2q.states["00"], model2q.lowering @ b1)) ** 2
    assert out[0, 0].real == pytest.approx(direct, abs=1e-12)
    assert direct == pytest.approx(0.2, abs=1e-12)


def test_dissipator_properties(model2q):
    rng = np.random.default_rng(7)
    for _ in range(100):
        rho = random_density(9, rng)
        out = dissipator(rho, model2q.jumps, 0.1)
        assert abs(np.trace(out)) < 1e-10
        assert np.abs(out - out.conj().T).max() < 1e-12


def test_dissipator_dimension_mismatch(model2q):
    with pytest.raises(ValueError):
        dissipator(np.eye(4) / 4, model2q.jumps, 0.1)


def test_flux_matrix(model2q, ref2q):
    flux = flux_matrix(model2q.eigen, model2q.jumps, 0.1)
    d1, a2, b1 = (index_of(model2q, ref2q.states[k]) for k in ("D1", "A2", "B1"))
    assert np.abs(flux[d1]).max() < 1e-20
    assert flux[a2, d1] == pytest.approx(0.2, abs=1e-12)
    assert flux[a2].sum() - flux[a2, d1] < 1e-12
    assert flux[b1].sum() == pytest.approx(0.2, abs=1e-12)
    assert np.abs(np.triu(flux)).max() < 1e-20


def test_rate_function():
    assert RateFunction(0.3)(5.0) == 0.3
    assert RateFunction(0.1, lambda w: w)(2.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        RateFunction(-1)


def test_merged_frequencies_harmonic():
    # alpha = 0: B1->00, A2->D1 and E+->B1 all sit at Omega = 11
    model = build_model(SystemSpec.uniform(alpha=0.0))
    shared = [j for j in model.jumps if abs(j.bohr_frequency - 11) < 1e-9]
    assert len(shared) == 1 and len(shared[0].transitions) == 3
