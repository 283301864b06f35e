import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

from qbattery.davies import build_model, dissipator
from qbattery.msclass import (StateClass, analytic_two_qutrit, analyze_blocks, build_block, classify,
                              classify_model, decay_paths_end_dark, effective_decay_rate, ms_decompose,
                              spectator_eigenstate_deviation, stored_energy_of_state)
from qbattery.qsys import QuditSpec, SystemSpec

from .conftest import GAMMA, index_of

R2 = np.sqrt(2)


def m21_in_dressed_basis(model, ref):
    s = ref.states
    upper = np.stack([s["A2"], s["S2"], s["11"]], axis=1)
    lower = np.stack([s["D1"], s["B1"]], axis=1)
    return build_block(model.eigen, model.jumps, 2, 1, upper, lower)


def test_m21_in_dressed_basis(model2q, ref2q):
    block = m21_in_dressed_basis(model2q, ref2q)
    np.testing.assert_allclose(block.matrix, [[R2, 0, 0], [0, R2, R2]], atol=1e-10)


def test_n1_to_n0_block(model2q, ref2q):
    s = ref2q.states
    block = build_block(model2q.eigen, model2q.jumps, 1, 0,
                        np.stack([s["D1"], s["B1"]], axis=1), s["00"][:, None])
    np.testing.assert_allclose(block.matrix, [[0, R2]], atol=1e-12)


def test_block_rejects_same_manifold(model2q):
    with pytest.raises(ValueError):
        build_block(model2q.eigen, model2q.jumps, 1, 1)


def test_ms_decompose_m21(model2q, ref2q):
    dec = ms_decompose(m21_in_dressed_basis(model2q, ref2q))
    np.testing.assert_allclose(dec.sigma, [2, R2], atol=1e-10)
    null = dec.null_vectors
    assert null.shape == (3, 1)
    expected = np.array([0, 1, -1]) / R2
    assert abs(abs(np.vdot(expected, null[:, 0])) - 1) < 1e-10
    # in product basis: (|20> - sqrt2 |11> + |02>) / 2
    s = ref2q.states
    full = np.stack([s["A2"], s["S2"], s["11"]], axis=1) @ null[:, 0]
    assert abs(abs(np.vdot(s["spectator"], full)) - 1) < 1e-10


def test_ms_decompose_trivial_cases():
    dec = ms_decompose(np.zeros((2, 3)))
    assert np.all(dec.sigma == 0) and dec.null_vectors.shape == (3, 3)
    dec = ms_decompose(np.array([[R2]]))
    assert dec.sigma[0] == pytest.approx(R2) and dec.null_vectors.shape == (1, 0)


def test_ms_decompose_random_blocks():
    rng = np.random.default_rng(3)
    for _ in range(50):
        nb, na = rng.integers(1, 6, size=2)
        m = rng.normal(size=(nb, na)) + 1j * rng.normal(size=(nb, na))
        dec = ms_decompose(m)
        assert np.abs(dec.reconstruct() - m).max() < 1e-10
        np.testing.assert_allclose(dec.u.conj().T @ dec.u, np.eye(nb), atol=1e-10)
        np.testing.assert_allclose(dec.vh @ dec.vh.conj().T, np.eye(na), atol=1e-10)
        assert np.all(np.diff(dec.sigma) <= 0)
        for col in dec.null_vectors.T:
            assert np.linalg.norm(m @ col) < 1e-9


def test_spectators_annihilated(model2q):
    for rep in analyze_blocks(model2q):
        for sp in rep.spectators:
            assert sp.block_residual < 1e-9
            lower = rep.block.lower_basis
            total = sum(j.matrix for j in model2q.jumps)
            assert np.linalg.norm(lower.conj().T @ total @ sp.vector) < 1e-8
            assert abs(np.linalg.norm(sp.vector) - 1) < 1e-12


def test_n2_spectator_overlap_matches_robustness(model2q):
    rep = [r for r in analyze_blocks(model2q) if r.block.upper_n == 2][0]
    dev = spectator_eigenstate_deviation(10, 0.2, 1.0)
    assert rep.spectators[0].max_eigenstate_overlap == pytest.approx(dev.overlap, abs=1e-10)


def test_two_qutrit_classification(model2q, ref2q):
    infos, graph = classify_model(model2q)
    cls = {name: infos[index_of(model2q, ref2q.states[name])].cls
           for name in ("00", "D1", "A2", "B1", "E+", "E-")}
    assert cls == {"00": StateClass.GROUND, "D1": StateClass.DARK, "A2": StateClass.FUNNEL,
                   "B1": StateClass.BRIGHT, "E+": StateClass.BRIGHT, "E-": StateClass.BRIGHT}
    for s in infos:
        if s.cls == StateClass.DARK:
            assert s.gamma_f < 1e-10
        if s.cls == StateClass.FUNNEL:
            assert all(infos[m].cls in (StateClass.DARK, StateClass.FUNNEL)
                       for m, b in s.targets if b >= 1e-6)
            assert decay_paths_end_dark(graph, s.index)
    for k, m, rate in graph.edges:
        assert infos[k].energy > infos[m].energy and rate >= 1e-10


def test_uncoupled_harmonic_all_bright():
    infos, _ = classify_model(build_model(SystemSpec.uniform(alpha=0.0, coupling_j=0.0)))
    assert [s.cls for s in infos].count(StateClass.GROUND) == 1
    assert all(s.cls == StateClass.BRIGHT for s in infos if s.cls != StateClass.GROUND)


def test_qubit_pair_taxonomy():
    model = build_model(SystemSpec.uniform(d=2))
    infos, _ = classify_model(model)
    r = 1 / R2
    dark = np.array([0, -r, r, 0])
    bright = np.array([0, r, r, 0])
    assert infos[index_of(model, dark)].cls == StateClass.DARK
    assert infos[index_of(model, bright)].cls == StateClass.BRIGHT
    assert [s.cls.value for s in infos] == ["ground", "dark", "bright", "bright"]


@pytest.mark.parametrize("d", [2, 3, 5])
def test_single_site_all_bright(d):
    infos, _ = classify_model(build_model(SystemSpec.uniform(1, d)))
    assert all(s.cls == StateClass.BRIGHT for s in infos[1:])


def test_cyclic_flux_rejected(model2q):
    flux = model2q.flux()
    flux[0, 5] = 1.0
    with pytest.raises(RuntimeError):
        classify(model2q.eigen, flux)


def test_permutation_invariance(model2q):
    es, flux = model2q.eigen, model2q.flux()
    infos, _ = classify(es, flux)
    perm = np.random.default_rng(0).permutation(9)
    es_p = dataclasses.replace(es, energies=es.energies[perm], vectors=es.vectors[:, perm],
                               manifold=es.manifold[perm])
    infos_p, _ = classify(es_p, flux[np.ix_(perm, perm)])
    assert [s.cls for s in infos_p] == [infos[k].cls for k in perm]


def test_decay_rates_and_energies(model2q, ref2q):
    flux = model2q.flux()
    es = model2q.eigen
    d1, a2, b1, g = (index_of(model2q, ref2q.states[k]) for k in ("D1", "A2", "B1", "00"))
    assert effective_decay_rate(a2, flux) == pytest.approx(2 * GAMMA, abs=1e-10)
    assert effective_decay_rate(d1, flux) == pytest.approx(0, abs=1e-15)
    assert effective_decay_rate(b1, flux) == pytest.approx(2 * GAMMA, abs=1e-10)
    assert stored_energy_of_state(a2, es) == pytest.approx(19.8, abs=1e-10)
    assert stored_energy_of_state(d1, es) == pytest.approx(9.0, abs=1e-10)
    assert stored_energy_of_state(g, es) == 0


def _liouvillian(model):
    # oracle: apply the matrix-form dissipator to each basis matrix
    dim = model.dim
    cols = []
    for k in range(dim * dim):
        e = np.zeros(dim * dim, dtype=complex)
        e[k] = 1
        cols.append(dissipator(e.reshape(dim, dim), model.jumps, model.rate).reshape(-1))
    return np.array(cols).T


def oracle_classes(model, gamma):
    dim = model.dim
    prop = expm(_liouvillian(model) * (20 / gamma))
    v = model.eigen.vectors
    ground = int(np.argmin(model.eigen.energies))
    out = []
    finals = []
    for k in range(dim):
        rho = np.outer(v[:, k], v[:, k].conj()).reshape(-1)
        final = (prop @ rho).reshape(dim, dim)
        finals.append(np.real(np.einsum("ik,ij,jk->k", v.conj(), final, v)))
    for k in range(dim):
        pops = finals[k]
        if k == ground:
            out.append("ground")
        elif pops[k] > 1 - 1e-9:
            out.append("dark")
        elif pops[ground] > 1e-12:
            out.append("bright")
        else:
            out.append("funnel")
    # funnel support must sit on states that are themselves dark in the oracle
    for k in range(dim):
        if out[k] == "funnel":
            dark = [m for m in range(dim) if out[m] == "dark"]
            assert finals[k][dark].sum() > 1 - 1e-6
    return out


def random_systems():
    rng = np.random.default_rng(11)
    specs = []
    for i in range(8):
        d = 2 if i % 2 else 3
        omega = rng.uniform(6, 14)
        alpha = rng.uniform(0.05, 1.0)
        j = rng.uniform(0.3, 1.5)
        if i % 4 in (2, 3):
            sites = (QuditSpec(d, omega, alpha), QuditSpec(d, omega * 1.1, alpha))
        else:
            sites = (QuditSpec(d, omega, alpha),) * 2
        specs.append(SystemSpec(sites, j))
    return specs


@pytest.mark.parametrize("spec", random_systems())
def test_classification_matches_dissipative_oracle(spec):
    model = build_model(spec, GAMMA)
    infos, _ = classify_model(model)
    assert [s.cls.value for s in infos] == oracle_classes(model, GAMMA)


def test_analytic_reference(ref2q, model2q):
    assert ref2q.theta == pytest.approx(0.5 * np.arctan(20), abs=1e-14)
    assert ref2q.theta == pytest.approx(0.76039, abs=5e-5)
    s = ref2q.states
    assert abs(np.vdot(s["E+"], s["E-"])) < 1e-14
    h = model2q.hamiltonian
    for name in ("00", "D1", "B1", "A2", "E+", "E-"):
        np.testing.assert_allclose(h @ s[name], ref2q.energies[name] * s[name], atol=1e-10)


def test_analytic_harmonic_limit():
    ref = analytic_two_qutrit(10, 0.0, 1.0)
    assert ref.energies["E+"] == pytest.approx(22) and ref.energies["E-"] == pytest.approx(18)


def test_spectator_deviation_values():
    dev = spectator_eigenstate_deviation(10, 0.2, 1.0)
    # oracle: numerical roots of sqrt2 J x^2 - alpha x - 2 sqrt2 J
    roots = np.roots([R2, -0.2, -2 * R2])
    assert dev.x_exact == pytest.approx(roots.min(), abs=1e-12)
    assert dev.x_exact == pytest.approx(-1.34527, abs=1e-5)
    assert dev.x_approx == pytest.approx(-1.34350, abs=1e-5)
    harmonic = spectator_eigenstate_deviation(10, 0.0, 1.0)
    assert harmonic.x_exact == pytest.approx(-R2, abs=1e-15) and harmonic.overlap == 1.0


def test_spectator_deviation_second_order():
    gaps = [abs(d.x_exact - d.x_approx) for d in
            (spectator_eigenstate_deviation(10, r, 1.0) for r in (0.2, 0.1, 0.05))]
    assert gaps[0] / gaps[1] >= 3.5 and gaps[1] / gaps[2] >= 3.5


def test_spectator_overlap_monotone():
    ratios = np.logspace(-1, 2, 200)
    ov = [spectator_eigenstate_deviation(10, 1.0, r).overlap for r in ratios]
    assert np.all(np.diff(ov) >= -1e-15)


def test_spectator_no_coupling_flagged():
    dev = spectator_eigenstate_deviation(10, 0.2, 0.0)
    assert dev.degenerate and dev.x_exact == 0 and np.isnan(dev.x_approx)
