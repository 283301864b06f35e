"""Dissipative-block SVD analysis and the dark/funnel/bright taxonomy of eigenstates."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .davies import DaviesModel, EigenSystem, JumpOperator

DEFAULT_SIGMA_REL = 1e-8
DEFAULT_RATE_TOL = 1e-10
DEFAULT_BRANCH_TOL = 1e-6


class StateClass(str, enum.Enum):
    GROUND = "ground"
    DARK = "dark"
    FUNNEL = "funnel"
    BRIGHT = "bright"


@dataclass(frozen=True)
class DissipativeBlock:
    """Matrix of summed jump amplitudes M[i, j] = <lower_i| A |upper_j>."""

    upper_n: int
    lower_n: int
    upper_basis: np.ndarray  # columns are full-space vectors
    lower_basis: np.ndarray
    matrix: np.ndarray
    upper_indices: tuple[int, ...] = ()
    lower_indices: tuple[int, ...] = ()


def build_block(es: EigenSystem, jumps: Sequence[JumpOperator], upper_n: int, lower_n: int,
                upper_basis: np.ndarray | None = None,
                lower_basis: np.ndarray | None = None) -> DissipativeBlock:
    """Assemble the block between two excitation manifolds.

    By default both manifolds are spanned by their H_S eigenvectors in energy
    order; explicit bases (columns, full space) may be passed instead.
    """
    if upper_n <= lower_n:
        raise ValueError(f"upper manifold N={upper_n} must lie above lower manifold N={lower_n}")
    up_idx = tuple(es.in_manifold(upper_n))
    lo_idx = tuple(es.in_manifold(lower_n))
    if not up_idx or not lo_idx:
        raise ValueError(f"manifolds N={upper_n} / N={lower_n} must both be nonempty")
    ub = es.vectors[:, list(up_idx)] if upper_basis is None else np.asarray(upper_basis, dtype=complex)
    lb = es.vectors[:, list(lo_idx)] if lower_basis is None else np.asarray(lower_basis, dtype=complex)
    total = sum((j.matrix for j in jumps), np.zeros((es.dim, es.dim), dtype=complex))
    m = lb.conj().T @ total @ ub
    return DissipativeBlock(upper_n, lower_n, ub, lb, m,
                            up_idx if upper_basis is None else (),
                            lo_idx if lower_basis is None else ())


@dataclass(frozen=True)
class MSDecomposition:
    u: np.ndarray
    sigma: np.ndarray
    vh: np.ndarray
    threshold: float

    @property
    def v(self) -> np.ndarray:
        return self.vh.conj().T

    @property
    def null_vectors(self) -> np.ndarray:
        """Right singular vectors (columns, block coordinates) with sigma below threshold."""
        n_cols = self.vh.shape[0]
        sig = np.zeros(n_cols)
        sig[: len(self.sigma)] = self.sigma
        return self.v[:, sig < self.threshold]

    def reconstruct(self) -> np.ndarray:
        s = np.zeros((self.u.shape[1], self.vh.shape[0]))
        np.fill_diagonal(s, self.sigma)
        return self.u @ s @ self.vh


def ms_decompose(block: DissipativeBlock | np.ndarray, sigma_rel: float = DEFAULT_SIGMA_REL,
                 ) -> MSDecomposition:
    """Full SVD M = U S V^dag with a fixed sign convention.

    Each right singular vector has its largest component real positive; the
    matching left vector is rotated with it so the product is unchanged.
    """
    m = block.matrix if isinstance(block, DissipativeBlock) else np.asarray(block, dtype=complex)
    u, s, vh = np.linalg.svd(m, full_matrices=True)
    v = vh.conj().T
    for k in range(v.shape[1]):
        mags = np.abs(v[:, k])
        pivot = int(np.flatnonzero(mags >= mags.max() - 1e-10)[0])
        ph = np.exp(-1j * np.angle(v[pivot, k]))
        v[:, k] *= ph
        if k < len(s):
            u[:, k] *= ph
    s_max = s.max() if s.size else 0.0
    threshold = max(sigma_rel * s_max, 1e-300) if s_max > 0 else np.inf
    return MSDecomposition(u, s, v.conj().T, float(threshold))


@dataclass(frozen=True)
class SpectatorState:
    upper_n: int
    vector: np.ndarray  # full-space, unit norm
    block_residual: float
    max_eigenstate_overlap: float
    nearest_eigenstate: int


def spectator_states(es: EigenSystem, block: DissipativeBlock, dec: MSDecomposition
                     ) -> list[SpectatorState]:
    out = []
    for col in dec.null_vectors.T:
        full = block.upper_basis @ col
        full = full / np.linalg.norm(full)
        overlaps = np.abs(es.vectors.conj().T @ full) ** 2
        k = int(np.argmax(overlaps))
        out.append(SpectatorState(block.upper_n, full, float(np.linalg.norm(block.matrix @ col)),
                                  float(overlaps[k]), k))
    return out


@dataclass
class BlockReport:
    block: DissipativeBlock
    decomposition: MSDecomposition
    spectators: list[SpectatorState]


def analyze_blocks(model: DaviesModel, sigma_rel: float = DEFAULT_SIGMA_REL) -> list[BlockReport]:
    """MS decomposition for every adjacent (N, N-1) manifold pair with nonzero coupling."""
    es = model.eigen
    ns = sorted(set(int(n) for n in es.manifold))
    reports = []
    for n in ns:
        if n - 1 not in ns:
            continue
        block = build_block(es, model.jumps, n, n - 1)
        if np.max(np.abs(block.matrix)) == 0.0:
            continue
        dec = ms_decompose(block, sigma_rel)
        reports.append(BlockReport(block, dec, spectator_states(es, block, dec)))
    return reports


@dataclass(frozen=True)
class StateInfo:
    index: int
    energy: float
    manifold: int
    cls: StateClass
    gamma_f: float
    e_f: float
    targets: tuple[tuple[int, float], ...]  # (index, branching ratio), descending


@dataclass
class DecayGraph:
    nodes: dict[int, StateInfo]
    edges: list[tuple[int, int, float]] = field(default_factory=list)

    def successors(self, k: int) -> list[int]:
        return [m for (src, m, _) in self.edges if src == k]

    def topological_order(self) -> list[int]:
        """Nodes from highest to lowest energy; edges only point forward in this order."""
        return sorted(self.nodes, key=lambda k: (-self.nodes[k].energy, k))


def effective_decay_rate(state_index: int, flux: np.ndarray) -> float:
    return float(np.sum(flux[state_index]))


def stored_energy_of_state(state_index: int, es: EigenSystem) -> float:
    return float(es.energies[state_index] - np.min(es.energies))


def classify(es: EigenSystem, flux: np.ndarray, rate_tol: float = DEFAULT_RATE_TOL,
             branch_tol: float = DEFAULT_BRANCH_TOL) -> tuple[list[StateInfo], DecayGraph]:
    energies = np.asarray(es.energies)
    dim = len(energies)
    if flux.shape != (dim, dim):
        raise ValueError(f"flux matrix shape {flux.shape} does not match {dim} states")
    srcs, dsts = np.nonzero(flux >= rate_tol)
    for k, m in zip(srcs, dsts):
        if energies[k] - energies[m] <= es.degeneracy_tol:
            raise RuntimeError(f"flux graph is not energy-lowering: edge {k}->{m}")

    e_gs = float(energies.min())
    outflux = flux.sum(axis=1)
    classes: dict[int, StateClass] = {}
    infos: dict[int, StateInfo] = {}
    for k in sorted(range(dim), key=lambda i: (energies[i], i)):
        total = float(outflux[k])
        targets = []
        if total >= rate_tol:
            ratios = flux[k] / total
            targets = sorted(((int(m), float(ratios[m])) for m in np.flatnonzero(flux[k] >= rate_tol)),
                             key=lambda t: (-t[1], t[0]))
        if energies[k] - e_gs < es.degeneracy_tol:
            cls = StateClass.GROUND
        elif total < rate_tol:
            cls = StateClass.DARK
        else:
            major = [m for m, b in targets if b >= branch_tol]
            protected = all(classes[m] in (StateClass.DARK, StateClass.FUNNEL) for m in major)
            cls = StateClass.FUNNEL if protected else StateClass.BRIGHT
        classes[k] = cls
        infos[k] = StateInfo(k, float(energies[k]), int(es.manifold[k]), cls, total,
                             float(energies[k] - e_gs), tuple(targets))
    edges = sorted((int(k), int(m), float(flux[k, m])) for k, m in zip(srcs, dsts))
    ordered = [infos[k] for k in range(dim)]
    return ordered, DecayGraph(infos, edges)


def terminal_distribution(graph: DecayGraph, start: int) -> dict[int, float]:
    """Probability of ending in each non-decaying node when starting from ``start``."""
    order = graph.topological_order()
    prob = {k: 0.0 for k in order}
    prob[start] = 1.0
    terminal: dict[int, float] = {}
    for k in order:
        p = prob[k]
        if p == 0.0:
            continue
        info = graph.nodes[k]
        if not info.targets:
            terminal[k] = terminal.get(k, 0.0) + p
            continue
        for m, b in info.targets:
            prob[m] += p * b
    return terminal


def decay_paths_end_dark(graph: DecayGraph, start: int) -> bool:
    """True when every path from ``start`` ends on a dark node."""
    stack, seen = [start], set()
    while stack:
        k = stack.pop()
        if k in seen:
            continue
        seen.add(k)
        succ = graph.successors(k)
        if not succ:
            if graph.nodes[k].cls != StateClass.DARK:
                return False
        stack.extend(succ)
    return True


def classify_model(model: DaviesModel, rate_tol: float = DEFAULT_RATE_TOL,
                   branch_tol: float = DEFAULT_BRANCH_TOL) -> tuple[list[StateInfo], DecayGraph]:
    return classify(model.eigen, model.flux(), rate_tol, branch_tol)


def pick_state(infos: Sequence[StateInfo], cls: StateClass) -> int:
    """Representative of a class: lowest excitation manifold first, then lowest energy."""
    cands = [s for s in infos if s.cls == cls]
    if not cands:
        raise LookupError(f"no {cls.value} state in this system")
    return min(cands, key=lambda s: (s.manifold, s.energy, s.index)).index


@dataclass(frozen=True)
class TwoQutritReference:
    omega: float
    alpha: float
    coupling_j: float
    theta: float
    states: dict[str, np.ndarray]
    energies: dict[str, float]


def analytic_two_qutrit(omega: float, alpha: float, coupling_j: float) -> TwoQutritReference:
    """Closed-form two-qutrit states in the product basis |n_A n_B> (index 3 n_A + n_B).

    The dressed pair uses tan(2 theta) = 4J/alpha with
    E+ = sin(theta) S2 + cos(theta) |11> and E- = cos(theta) S2 - sin(theta) |11>,
    which keeps the two orthogonal for every theta.
    """
    def ket(*pairs):
        v = np.zeros(9, dtype=complex)
        for (na, nb), c in pairs:
            v[3 * na + nb] += c
        return v

    r = 1 / np.sqrt(2)
    theta = 0.5 * np.arctan2(4 * coupling_j, alpha)
    s2 = ket(((2, 0), r), ((0, 2), r))
    n11 = ket(((1, 1), 1.0))
    states = {
        "00": ket(((0, 0), 1.0)),
        "D1": ket(((1, 0), r), ((0, 1), -r)),
        "B1": ket(((1, 0), r), ((0, 1), r)),
        "A2": ket(((2, 0), r), ((0, 2), -r)),
        "S2": s2,
        "11": n11,
        "E+": np.sin(theta) * s2 + np.cos(theta) * n11,
        "E-": np.cos(theta) * s2 - np.sin(theta) * n11,
        "spectator": ket(((2, 0), 0.5), ((1, 1), -np.sqrt(2) / 2), ((0, 2), 0.5)),
    }
    root = 0.5 * np.sqrt(alpha ** 2 + 16 * coupling_j ** 2)
    energies = {
        "00": 0.0,
        "D1": omega - coupling_j,
        "B1": omega + coupling_j,
        "A2": 2 * omega - alpha,
        "E+": 2 * omega - alpha / 2 + root,
        "E-": 2 * omega - alpha / 2 - root,
    }
    return TwoQutritReference(omega, alpha, coupling_j, float(theta), states, energies)


@dataclass(frozen=True)
class SpectatorDeviation:
    x_exact: float
    x_approx: float
    overlap: float
    alpha_over_j: float
    degenerate: bool = False


def spectator_eigenstate_deviation(omega: float, alpha: float, coupling_j: float) -> SpectatorDeviation:
    """Compare the block spectator (1, -sqrt2, 1)/2 with the true symmetric N=2 eigenstate.

    The eigenstate is (1, x, 1) in {|20>, |11>, |02>} with x the negative root of
    sqrt2 J x^2 - alpha x - 2 sqrt2 J = 0. ``omega`` drops out; it is accepted
    for signature symmetry with the other analytic helpers.
    """
    spectator = np.array([1.0, -np.sqrt(2), 1.0]) / 2
    if coupling_j == 0:
        # no exchange: the symmetric eigenstate is S2 itself
        x = 0.0
        psi = np.array([1.0, x, 1.0]) / np.sqrt(2 + x * x)
        return SpectatorDeviation(x, float("nan"), float(np.dot(spectator, psi) ** 2),
                                  float("inf"), degenerate=True)
    s2 = np.sqrt(2)
    x = (alpha - np.sqrt(alpha ** 2 + 16 * coupling_j ** 2)) / (2 * s2 * coupling_j)
    x_approx = -s2 + (s2 / 4) * (alpha / coupling_j)
    psi = np.array([1.0, x, 1.0]) / np.sqrt(2 + x * x)
    overlap = min(float(np.dot(spectator, psi) ** 2), 1.0)
    return SpectatorDeviation(float(x), float(x_approx), overlap, alpha / coupling_j)
