"""Hilbert spaces, ladder operators and Hamiltonian terms for coupled anharmonic qudits.

Site 0 is always the leftmost Kronecker factor, so for two qutrits the
product state |n_A n_B> sits at index ``3 * n_A + n_B``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12


class InvalidSpecError(ValueError):
    """Raised for physically or structurally invalid system parameters."""


@dataclass(frozen=True)
class QuditSpec:
    d: int = 3
    omega: float = 10.0
    alpha: float = 0.2

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise InvalidSpecError(f"level count d must be an integer >= 2, got {self.d}")
        if not self.omega > 0:
            raise InvalidSpecError(f"omega must be positive, got {self.omega}")
        if self.alpha < 0:
            raise InvalidSpecError(f"alpha must be non-negative, got {self.alpha}")
        if not self.alpha < self.omega:
            raise InvalidSpecError(f"alpha ({self.alpha}) must be smaller than omega ({self.omega})")


@dataclass(frozen=True)
class SystemSpec:
    """A nearest-neighbour chain of qudits with uniform exchange coupling."""

    sites: tuple[QuditSpec, ...] = field(default_factory=lambda: (QuditSpec(), QuditSpec()))
    coupling_j: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if len(self.sites) < 1:
            raise InvalidSpecError("a system needs at least one site")
        if self.coupling_j < 0:
            raise InvalidSpecError(f"coupling J must be non-negative, got {self.coupling_j}")

    @classmethod
    def uniform(cls, n_sites: int = 2, d: int = 3, omega: float = 10.0,
                alpha: float = 0.2, coupling_j: float = 1.0) -> "SystemSpec":
        return cls(tuple(QuditSpec(d, omega, alpha) for _ in range(n_sites)), coupling_j)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.d for s in self.sites)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def rwa_ratio(self) -> float:
        """J over the smallest local transition frequency; the RWA needs this small."""
        gap = min(min(s.omega, s.omega - s.alpha) for s in self.sites)
        return self.coupling_j / gap

    def to_dict(self) -> dict:
        return {"sites": [asdict(s) for s in self.sites], "coupling_j": self.coupling_j}

    @classmethod
    def from_dict(cls, data: dict) -> "SystemSpec":
        unknown = set(data) - {"sites", "coupling_j"}
        if unknown:
            raise InvalidSpecError(f"unknown system keys: {sorted(unknown)}")
        sites = tuple(QuditSpec(**s) for s in data["sites"])
        return cls(sites, float(data.get("coupling_j", 1.0)))

    @classmethod
    def from_file(cls, path: str | Path) -> "SystemSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def assert_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"operator must be square, got shape {op.shape}")
    dev = np.max(np.abs(op - op.conj().T)) if op.size else 0.0
    if dev >= tol:
        raise ValueError(f"operator is not Hermitian (max deviation {dev:.3e})")


def lowering_op(d: int) -> np.ndarray:
    """Truncated bosonic lowering operator sum_n sqrt(n) |n-1><n|."""
    if int(d) != d or d < 2:
        raise InvalidSpecError(f"level count d must be an integer >= 2, got {d}")
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def local_energies(spec: QuditSpec) -> np.ndarray:
    n = np.arange(spec.d, dtype=float)
    return n * spec.omega - 0.5 * spec.alpha * n * (n - 1)


def embed(op: np.ndarray, site: int, spec: SystemSpec) -> np.ndarray:
    dims = spec.dims
    if not 0 <= site < len(dims):
        raise IndexError(f"site {site} out of range for {len(dims)} sites")
    if op.shape != (dims[site], dims[site]):
        raise InvalidSpecError(
            f"operator shape {op.shape} does not match site {site} dimension {dims[site]}")
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[site] = np.asarray(op, dtype=complex)
    return reduce(np.kron, factors)


def product_state(levels: Sequence[int], spec: SystemSpec) -> np.ndarray:
    """Basis ket |n_0 n_1 ...> as a dense vector."""
    if len(levels) != spec.n_sites:
        raise InvalidSpecError("one level index per site is required")
    idx = int(np.ravel_multi_index(tuple(levels), spec.dims))
    psi = np.zeros(spec.dim, dtype=complex)
    psi[idx] = 1.0
    return psi


def site_lowering_ops(spec: SystemSpec) -> list[np.ndarray]:
    return [embed(lowering_op(s.d), j, spec) for j, s in enumerate(spec.sites)]


def system_hamiltonian(spec: SystemSpec) -> np.ndarray:
    dim = spec.dim
    h = np.zeros((dim, dim), dtype=complex)
    for j, s in enumerate(spec.sites):
        h += embed(np.diag(local_energies(s)).astype(complex), j, spec)
    a = site_lowering_ops(spec)
    for j in range(spec.n_sites - 1):
        hop = a[j].conj().T @ a[j + 1]
        h += spec.coupling_j * (hop + hop.conj().T)
    return h


def collective_lowering(spec: SystemSpec) -> np.ndarray:
    return sum(site_lowering_ops(spec))


def excitation_number(spec: SystemSpec) -> np.ndarray:
    dim = spec.dim
    n_op = np.zeros((dim, dim), dtype=complex)
    for j, s in enumerate(spec.sites):
        n_op += embed(np.diag(np.arange(s.d, dtype=float)).astype(complex), j, spec)
    return n_op


def antisymmetric_phases(n_sites: int) -> tuple[float, ...]:
    """Alternating (0, pi, 0, pi, ...) phases; the two-site case is the out-of-phase drive."""
    return tuple(np.pi * (j % 2) for j in range(n_sites))


def drive_operator(spec: SystemSpec, phases: Sequence[float]) -> np.ndarray:
    """Unit-amplitude drive i sum_j e^{i phi_j} a_j^dag + h.c."""
    if len(phases) != spec.n_sites:
        raise InvalidSpecError(f"expected {spec.n_sites} drive phases, got {len(phases)}")
    raising = sum(np.exp(1j * phi) * a.conj().T for phi, a in zip(phases, site_lowering_ops(spec)))
    op = 1j * raising
    return op + op.conj().T


def drive_hamiltonian(spec: SystemSpec, amplitude: float, phases: Sequence[float],
                      t: float = 0.0) -> np.ndarray:
    """Drive term at time ``t`` for a (possibly time-dependent) amplitude.

    ``amplitude`` may be a float or a callable of time.
    """
    amp = amplitude(t) if callable(amplitude) else amplitude
    return amp * drive_operator(spec, phases)
