"""Spectral decomposition of H_S and zero-temperature Davies jump operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .qsys import SystemSpec, assert_hermitian, collective_lowering, excitation_number, system_hamiltonian

DEFAULT_GAMMA = 0.1
REL_DEGENERACY_TOL = 1e-9


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real and positive.

    Ties (equal magnitudes to 1e-10) resolve to the lowest basis index.
    """
    out = vecs.copy()
    for k in range(out.shape[1]):
        mags = np.abs(out[:, k])
        pivot = int(np.flatnonzero(mags >= mags.max() - 1e-10)[0])
        out[:, k] *= np.exp(-1j * np.angle(out[pivot, k]))
    return out


def _cluster(values: np.ndarray, tol: float) -> list[list[int]]:
    """Group indices of an ascending array into runs with consecutive gaps below ``tol``."""
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and v - values[groups[-1][-1]] < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass(frozen=True)
class Level:
    energy: float
    indices: tuple[int, ...]

    @property
    def multiplicity(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs sorted by energy, grouped into degenerate levels.

    ``vectors[:, k]`` is the k-th eigenvector and ``manifold[k]`` its excitation
    number (``-1`` when no number operator was supplied).
    """

    energies: np.ndarray
    vectors: np.ndarray
    levels: tuple[Level, ...]
    manifold: np.ndarray
    degeneracy_tol: float
    level_of: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def projector(self, level: int) -> np.ndarray:
        v = self.vectors[:, list(self.levels[level].indices)]
        return v @ v.conj().T

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.energies) @ self.vectors.conj().T

    def in_manifold(self, n: int) -> list[int]:
        return [k for k in range(self.dim) if self.manifold[k] == n]


def spectral_decompose(h: np.ndarray, degeneracy_tol: float | None = None,
                       number_op: np.ndarray | None = None) -> EigenSystem:
    """Diagonalize a Hermitian matrix and cluster its spectrum into levels.

    With ``number_op`` (diagonal, integer spectrum, commuting with ``h``) each
    excitation manifold is diagonalized separately so every eigenvector carries
    a definite excitation number even inside accidental degeneracies.
    """
    h = np.asarray(h, dtype=complex)
    assert_hermitian(h)
    dim = h.shape[0]
    if number_op is None:
        evals, evecs = np.linalg.eigh(h)
        labels = np.full(dim, -1, dtype=int)
    else:
        n_diag = np.real(np.diag(number_op))
        if np.max(np.abs(number_op - np.diag(np.diag(number_op)))) > 1e-12:
            raise ValueError("number operator must be diagonal in the working basis")
        n_int = np.rint(n_diag).astype(int)
        evals = np.empty(dim)
        evecs = np.zeros((dim, dim), dtype=complex)
        labels = np.empty(dim, dtype=int)
        col = 0
        for n in np.unique(n_int):
            idx = np.flatnonzero(n_int == n)
            block = h[np.ix_(idx, idx)]
            leak = np.delete(h[:, idx], idx, axis=0)
            if leak.size and np.max(np.abs(leak)) > 1e-12:
                raise ValueError("Hamiltonian does not conserve the excitation number")
            w, v = np.linalg.eigh(block)
            sl = slice(col, col + len(idx))
            evals[sl] = w
            evecs[idx, sl] = v
            labels[sl] = n
            col += len(idx)
        # stable sort keeps manifold order among exact ties
        order = np.argsort(evals, kind="stable")
        evals, evecs, labels = evals[order], evecs[:, order], labels[order]

    if degeneracy_tol is None:
        degeneracy_tol = REL_DEGENERACY_TOL * max(1.0, float(np.max(np.abs(evals))))
    evecs = _fix_phase(evecs)
    groups = _cluster(evals, degeneracy_tol)
    levels = tuple(Level(float(np.mean(evals[g])), tuple(g)) for g in groups)
    level_of = np.empty(dim, dtype=int)
    for li, lev in enumerate(levels):
        level_of[list(lev.indices)] = li
    return EigenSystem(evals, evecs, levels, labels, float(degeneracy_tol), level_of)


@dataclass(frozen=True)
class JumpOperator:
    bohr_frequency: float
    matrix: np.ndarray
    # (upper level, lower level) pairs merged into this channel
    transitions: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class RateFunction:
    """Emission rate per Bohr frequency. Only the flat profile is used here."""

    gamma: float = DEFAULT_GAMMA
    profile: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")

    def __call__(self, omega: float) -> float:
        if self.profile is None:
            return self.gamma
        return self.gamma * self.profile(omega)


def _level_pair_frequencies(es: EigenSystem) -> list[tuple[float, int, int]]:
    out = []
    for hi, up in enumerate(es.levels):
        for lo, down in enumerate(es.levels):
            if up.energy - down.energy > es.degeneracy_tol:
                out.append((up.energy - down.energy, hi, lo))
    out.sort()
    return out


def jump_operators(es: EigenSystem, lowering: np.ndarray, zero_tol: float = 1e-12) -> list[JumpOperator]:
    """Split ``lowering`` into Bohr-frequency components sum_{e'-e=W} P_e L P_e'.

    Frequencies closer than the eigensystem's degeneracy tolerance share one
    operator. Output is sorted by ascending frequency.
    """
    v = es.vectors
    l_eig = v.conj().T @ np.asarray(lowering, dtype=complex) @ v
    pairs = _level_pair_frequencies(es)
    freqs = np.array([p[0] for p in pairs])
    jumps = []
    for group in _cluster(freqs, es.degeneracy_tol):
        mask = np.zeros(l_eig.shape, dtype=bool)
        transitions = []
        for gi in group:
            _, hi, lo = pairs[gi]
            rows = list(es.levels[lo].indices)
            cols = list(es.levels[hi].indices)
            mask[np.ix_(rows, cols)] = True
            if np.max(np.abs(l_eig[np.ix_(rows, cols)])) >= zero_tol:
                transitions.append((hi, lo))
        block = np.where(mask, l_eig, 0.0)
        if np.max(np.abs(block)) < zero_tol:
            continue
        matrix = v @ block @ v.conj().T
        jumps.append(JumpOperator(float(np.mean(freqs[group])), matrix, tuple(transitions)))
    return jumps


def close_frequency_pairs(jumps: Sequence[JumpOperator], tol: float, factor: float = 100.0
                          ) -> list[tuple[float, float]]:
    """Distinct emitted frequencies that lie within ``factor * tol`` of each other."""
    freqs = sorted(j.bohr_frequency for j in jumps)
    return [(a, b) for a, b in zip(freqs, freqs[1:]) if b - a < factor * tol]


def _as_rate(gamma) -> RateFunction:
    return gamma if isinstance(gamma, RateFunction) else RateFunction(float(gamma))


def dissipator(rho: np.ndarray, jumps: Sequence[JumpOperator], gamma=DEFAULT_GAMMA) -> np.ndarray:
    rate = _as_rate(gamma)
    rho = np.asarray(rho)
    out = np.zeros_like(rho, dtype=complex)
    for jump in jumps:
        a = jump.matrix
        if a.shape != rho.shape:
            raise ValueError(f"dimension mismatch: rho {rho.shape} vs jump {a.shape}")
        ada = a.conj().T @ a
        out += rate(jump.bohr_frequency) * (a @ rho @ a.conj().T - 0.5 * (ada @ rho + rho @ ada))
    return out


def flux_matrix(es: EigenSystem, jumps: Sequence[JumpOperator], gamma=DEFAULT_GAMMA) -> np.ndarray:
    """Rates flux[k, m] from eigenstate k into eigenstate m."""
    rate = _as_rate(gamma)
    v = es.vectors
    flux = np.zeros((es.dim, es.dim))
    for jump in jumps:
        amp = v.conj().T @ jump.matrix @ v  # amp[m, k] = <phi_m|A|phi_k>
        flux += rate(jump.bohr_frequency) * np.abs(amp.T) ** 2
    return flux


@dataclass(frozen=True)
class DaviesModel:
    """Everything derived from a SystemSpec that the open dynamics needs."""

    spec: SystemSpec
    hamiltonian: np.ndarray
    lowering: np.ndarray
    number: np.ndarray
    eigen: EigenSystem
    jumps: tuple[JumpOperator, ...]
    rate: RateFunction

    @property
    def dim(self) -> int:
        return self.spec.dim

    def flux(self) -> np.ndarray:
        return flux_matrix(self.eigen, self.jumps, self.rate)

    def state(self, k: int) -> np.ndarray:
        return self.eigen.vectors[:, k].copy()


def default_degeneracy_tol(spec: SystemSpec) -> float:
    return REL_DEGENERACY_TOL * min(s.omega for s in spec.sites)


def build_model(spec: SystemSpec, gamma=DEFAULT_GAMMA, degeneracy_tol: float | None = None,
                zero_tol: float = 1e-12) -> DaviesModel:
    h = system_hamiltonian(spec)
    n_op = excitation_number(spec)
    low = collective_lowering(spec)
    tol = default_degeneracy_tol(spec) if degeneracy_tol is None else degeneracy_tol
    es = spectral_decompose(h, tol, number_op=n_op)
    jumps = tuple(jump_operators(es, low, zero_tol))
    return DaviesModel(spec, h, low, n_op, es, jumps, _as_rate(gamma))
