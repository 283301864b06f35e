"""Driven Davies master-equation integration and trajectory observables."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .davies import DEFAULT_GAMMA, DaviesModel, JumpOperator, RateFunction, build_model, dissipator
from .msclass import StateClass, classify_model, pick_state
from .qsys import SystemSpec, antisymmetric_phases, drive_operator

log = logging.getLogger(__name__)

TRACE_TOL = 1e-6
POSITIVITY_TOL = 1e-6
CSV_SCHEMA = "qbattery-trajectory v1"


class NumericalInstabilityError(RuntimeError):
    def __init__(self, time: float, reason: str):
        super().__init__(f"integration became unstable at t={time:.6g}: {reason}; "
                         "try a smaller dt")
        self.time = time
        self.reason = reason


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DriveEnvelope:
    """Real drive amplitude Omega_R(t) and the per-site phases it multiplies.

    ``shape="ramp"`` rises and falls with half-cosine edges of ``ramp_time``;
    ``shape="hard"`` switches abruptly at 0 and at ``cutoff_time``.
    """

    amplitude: float = 0.5
    phases: tuple[float, ...] | None = None
    cutoff_time: float = 3.0
    shape: str = "ramp"
    ramp_time: float = 0.02

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigError(f"drive amplitude must be >= 0, got {self.amplitude}")
        if self.cutoff_time < 0:
            raise ConfigError(f"cutoff time must be >= 0, got {self.cutoff_time}")
        if self.shape not in ("ramp", "hard"):
            raise ConfigError(f"unknown envelope shape {self.shape!r}")
        if self.ramp_time < 0:
            raise ConfigError("ramp time must be >= 0")
        if self.phases is not None:
            object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))

    def site_phases(self, n_sites: int) -> tuple[float, ...]:
        return antisymmetric_phases(n_sites) if self.phases is None else self.phases

    @property
    def effective_ramp(self) -> float:
        return min(self.ramp_time, 0.5 * self.cutoff_time)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        on = (t >= 0) & (t < self.cutoff_time)
        if self.shape == "hard" or self.effective_ramp == 0:
            return np.where(on, self.amplitude, 0.0)
        tr = self.effective_ramp
        rise = 0.5 * (1 - np.cos(np.pi * np.clip(t / tr, 0, 1)))
        fall = 0.5 * (1 - np.cos(np.pi * np.clip((self.cutoff_time - t) / tr, 0, 1)))
        return np.where(on, self.amplitude * np.minimum(rise, fall), 0.0)

    def samples(self, h: float, n_steps: int, t0: float = 0.0) -> np.ndarray:
        """Envelope at (t, t + h/2, t + h) for every step; hard edges use the step midpoint."""
        ts = t0 + h * np.arange(n_steps)
        if self.shape == "hard":
            mid = self(ts + 0.5 * h)
            return np.repeat(mid[:, None], 3, axis=1)
        return np.stack([self(ts), self(ts + 0.5 * h), self(ts + h)], axis=1)

    def max_slope(self) -> float:
        if self.shape == "hard" or self.effective_ramp == 0:
            return np.inf if self.amplitude > 0 else 0.0
        return self.amplitude * np.pi / (2 * self.effective_ramp)


@dataclass
class SimulationConfig:
    system: SystemSpec = field(default_factory=SystemSpec)
    gamma: float = DEFAULT_GAMMA
    drive: DriveEnvelope = field(default_factory=DriveEnvelope)
    t_final: float = 50.0
    dt: float = 1e-3
    record_stride: int = 100
    initial_state: str = "ground"
    custom_state: Sequence[complex] | None = None
    target: str = "dark"
    tau_b: float | None = None
    use_numba: bool | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_final <= 0:
            raise ConfigError(f"t_final must be positive, got {self.t_final}")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        limit = 0.05 / max(max(s.omega for s in self.system.sites), self.drive.amplitude,
                           self.gamma * self.system.dim)
        if self.dt > limit:
            raise ConfigError(f"dt={self.dt} exceeds the stability limit {limit:.3g}")


@dataclass
class Trajectory:
    times: np.ndarray
    energy: np.ndarray
    fidelity: np.ndarray
    populations: np.ndarray
    trace_err: np.ndarray
    min_eig: np.ndarray
    final_rho: np.ndarray
    drive_off: float

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        n_pop = self.populations.shape[1]
        with path.open("w", newline="") as fh:
            fh.write(f"# {CSV_SCHEMA}\n")
            w = csv.writer(fh)
            w.writerow(["t", "dE", "fidelity", *[f"P_state_{k}" for k in range(n_pop)],
                        "trace_err", "min_eig"])
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t)), repr(float(self.energy[i])), repr(float(self.fidelity[i])),
                            *[repr(float(p)) for p in self.populations[i]],
                            repr(float(self.trace_err[i])), repr(float(self.min_eig[i]))])
        return path


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        first = fh.readline().strip()
        if first != f"# {CSV_SCHEMA}":
            raise ValueError(f"unexpected trajectory schema line {first!r}")
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    """-i[h, .] acting on row-major vec(rho)."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_superop(jumps: Sequence[JumpOperator], rate: RateFunction, dim: int) -> np.ndarray:
    eye = np.eye(dim)
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for j in jumps:
        a = j.matrix
        k = a.conj().T @ a
        out += rate(j.bohr_frequency) * (np.kron(a, a.conj()) - 0.5 * np.kron(k, eye)
                                         - 0.5 * np.kron(eye, k.T))
    return out


@dataclass(frozen=True)
class Generators:
    """Fixed pieces of the master equation: H_S, unit drive and Davies jumps."""

    model: DaviesModel
    drive_op: np.ndarray
    envelope: DriveEnvelope

    @classmethod
    def from_model(cls, model: DaviesModel, envelope: DriveEnvelope) -> "Generators":
        phases = envelope.site_phases(model.spec.n_sites)
        return cls(model, drive_operator(model.spec, phases), envelope)

    def superops(self, dissipative: bool = True) -> tuple[np.ndarray, np.ndarray]:
        dim = self.model.dim
        l0 = hamiltonian_superop(self.model.hamiltonian)
        if dissipative:
            l0 = l0 + dissipator_superop(self.model.jumps, self.model.rate, dim)
        return l0, hamiltonian_superop(self.drive_op)


def rhs(rho: np.ndarray, t: float, gens: Generators) -> np.ndarray:
    """Right-hand side of the master equation in matrix form."""
    h = gens.model.hamiltonian + float(gens.envelope(t)) * gens.drive_op
    return -1j * (h @ rho - rho @ h) + dissipator(rho, gens.model.jumps, gens.model.rate)


def stored_energy(rho: np.ndarray, h_s: np.ndarray, e_gs: float = 0.0) -> float:
    val = np.trace(h_s @ rho)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"Tr[H rho] has imaginary part {val.imag:.3e}")
    return float(val.real) - e_gs


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    return float(np.real(np.vdot(target, rho @ target)))


def pure(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def named_state(model: DaviesModel, name: str, custom: Sequence[complex] | None = None) -> np.ndarray:
    """Resolve ground/dark/funnel/bright/custom to a normalized state vector."""
    if name == "custom":
        if custom is None:
            raise ConfigError("custom state requested but no vector given")
        vec = np.asarray(custom, dtype=complex)
        if vec.shape != (model.dim,):
            raise ConfigError(f"custom state needs {model.dim} amplitudes, got {vec.shape}")
        return vec / np.linalg.norm(vec)
    if name == "ground":
        return model.state(int(np.argmin(model.eigen.energies)))
    try:
        cls = StateClass(name)
    except ValueError:
        raise ConfigError(f"unknown state name {name!r}") from None
    infos, _ = classify_model(model)
    return model.state(pick_state(infos, cls))


def _const_runs(amps: np.ndarray) -> list[tuple[int, int, float | None]]:
    """Split steps into maximal runs; constant runs carry their amplitude."""
    const = (amps[:, 0] == amps[:, 1]) & (amps[:, 1] == amps[:, 2])
    runs = []
    start = 0
    n = len(amps)
    for i in range(1, n + 1):
        if i == n or const[i] != const[start] or (const[i] and amps[i, 0] != amps[start, 0]):
            runs.append((start, i, float(amps[start, 0]) if const[start] else None))
            start = i
    return runs


class Propagator:
    """Step a vectorized density matrix with fixed-step RK4.

    Constant-amplitude stretches use the exact RK4 step polynomial, which is
    algebraically the same update as evaluating the four stages.
    """

    def __init__(self, l0: np.ndarray, ld: np.ndarray, dt: float, dim: int,
                 use_numba: bool | None = None):
        self.l0 = np.ascontiguousarray(l0)
        self.ld = np.ascontiguousarray(ld)
        self.dt = dt
        self.dim = dim
        self._driven, self._propagate = _kernels.kernels(use_numba)
        self._steps: dict[float, np.ndarray] = {}

    def step_matrix(self, amp: float) -> np.ndarray:
        if amp not in self._steps:
            self._steps[amp] = np.ascontiguousarray(
                _kernels.rk4_step_matrix(self.l0 + amp * self.ld, self.dt))
        return self._steps[amp]

    def advance(self, vec: np.ndarray, amps: np.ndarray) -> np.ndarray:
        for s0, s1, amp in _const_runs(amps):
            if amp is None:
                vec = self._driven(self.l0, self.ld, np.ascontiguousarray(amps[s0:s1]), vec,
                                   self.dt, self.dim)
            else:
                vec = self._propagate(self.step_matrix(amp), vec, s1 - s0, self.dim)
        return vec


def evolve(config: SimulationConfig, model: DaviesModel | None = None,
           dissipative: bool = True) -> Trajectory:
    if model is None:
        model = build_model(config.system, config.gamma)
    dim = model.dim
    gens = Generators.from_model(model, config.drive)
    l0, ld = gens.superops(dissipative)
    prop = Propagator(l0, ld, config.dt, dim, config.use_numba)

    psi0 = named_state(model, config.initial_state, config.custom_state)
    target = named_state(model, config.target, config.custom_state)
    n_steps = int(round(config.t_final / config.dt))
    amps = config.drive.samples(config.dt, n_steps)
    marks = list(range(0, n_steps, config.record_stride)) + [n_steps]

    h_s = model.hamiltonian
    e_gs = float(np.min(model.eigen.energies))
    vecs = model.eigen.vectors
    rows = []
    vec = pure(psi0).reshape(-1)
    for i, step in enumerate(marks):
        if i > 0:
            vec = prop.advance(vec, amps[marks[i - 1]:step])
        t = step * config.dt
        rho = vec.reshape(dim, dim)
        tr_err = abs(np.trace(rho) - 1.0)
        lam = float(np.linalg.eigvalsh(rho).min())
        if tr_err > TRACE_TOL:
            raise NumericalInstabilityError(t, f"trace error {tr_err:.3e}")
        if lam < -POSITIVITY_TOL:
            raise NumericalInstabilityError(t, f"negative eigenvalue {lam:.3e}")
        pops = np.real(np.einsum("ik,ij,jk->k", vecs.conj(), rho, vecs))
        rows.append((t, stored_energy(rho, h_s, e_gs), fidelity(rho, target), pops, tr_err, lam))

    return Trajectory(
        times=np.array([r[0] for r in rows]),
        energy=np.array([r[1] for r in rows]),
        fidelity=np.array([r[2] for r in rows]),
        populations=np.array([r[3] for r in rows]),
        trace_err=np.array([r[4] for r in rows]),
        min_eig=np.array([r[5] for r in rows]),
        final_rho=vec.reshape(dim, dim).copy(),
        drive_off=config.drive.cutoff_time if config.drive.amplitude > 0 else 0.0,
    )


def validate_drive(config: SimulationConfig) -> list[str]:
    """Warnings for the RWA and slow-drive assumptions; never raises."""
    warnings = []
    ratio = config.system.rwa_ratio
    if ratio > 0.1:
        warnings.append(f"RWA: J/min(omega, omega-alpha) = {ratio:.3f} exceeds 0.1")
    drive = config.drive
    if drive.amplitude > 0:
        if config.tau_b is None:
            log.info("bath correlation time not given; adiabaticity check skipped")
        else:
            if drive.amplitude * config.tau_b > 0.1:
                warnings.append(f"drive: Omega_R * tau_B = {drive.amplitude * config.tau_b:.3g} "
                                "exceeds 0.1")
            if drive.max_slope() * config.tau_b ** 2 > 0.1:
                warnings.append("drive: |dOmega_R/dt| * tau_B^2 exceeds 0.1")
        if config.gamma > 0:
            t_mod = 0.0 if drive.shape == "hard" else drive.effective_ramp
            if t_mod < 10.0 / config.gamma:
                warnings.append(f"drive: modulation timescale {t_mod:.3g} is shorter than "
                                f"10/gamma = {10.0 / config.gamma:.3g}")
    return warnings
