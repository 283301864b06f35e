"""Funnel-state targeting: grid-search drive optimization and the end-to-end ranking recipe."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .davies import DEFAULT_GAMMA, DaviesModel, build_model
from .dynamics import (DriveEnvelope, Generators, Propagator, SimulationConfig, evolve, fidelity,
                       pure)
from .msclass import (DEFAULT_BRANCH_TOL, DEFAULT_RATE_TOL, DEFAULT_SIGMA_REL, StateClass,
                      analyze_blocks, classify, decay_paths_end_dark, terminal_distribution)
from .qsys import SystemSpec


@dataclass(frozen=True)
class ControlAnsatz:
    """Grids over the restricted single-envelope drive family.

    ``rel_phases`` is the phase step between neighbouring sites, so site j
    is driven with phase j * rel_phase.
    """

    amplitudes: tuple[float, ...]
    rel_phases: tuple[float, ...]
    cutoffs: tuple[float, ...]

    def __post_init__(self):
        for name in ("amplitudes", "rel_phases", "cutoffs"):
            vals = tuple(float(x) for x in getattr(self, name))
            if not vals or not np.all(np.isfinite(vals)):
                raise ValueError(f"{name} grid must be nonempty and finite")
            object.__setattr__(self, name, vals)
        if min(self.amplitudes) < 0 or min(self.cutoffs) <= 0:
            raise ValueError("amplitudes must be >= 0 and cutoffs > 0")

    @classmethod
    def default(cls, coupling_j: float = 1.0) -> "ControlAnsatz":
        return cls(tuple(coupling_j * np.round(np.arange(1, 11) * 0.1, 10)),
                   tuple(np.arange(16) * np.pi / 8),
                   tuple(np.round(np.arange(1, 31) * 0.2, 10)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.amplitudes), len(self.rel_phases), len(self.cutoffs)


def site_phases(rel_phase: float, n_sites: int, offset: float = 0.0) -> tuple[float, ...]:
    return tuple(offset + j * rel_phase for j in range(n_sites))


def _as_model(system, gamma) -> DaviesModel:
    return system if isinstance(system, DaviesModel) else build_model(system, gamma)


def fidelity_vs_cutoff(model: DaviesModel, target: np.ndarray, amplitude: float,
                       phases: Sequence[float], cutoffs: Sequence[float], dt: float = 1e-3,
                       shape: str = "ramp", ramp_time: float | None = None,
                       dissipative: bool = True, use_numba: bool | None = None) -> np.ndarray:
    """Fidelity with ``target`` at the end of pulses of each duration, from the ground state.

    Pulses sharing a prefix of envelope samples share that stretch of the integration.
    """
    if ramp_time is None:
        ramp_time = 0.2 / min(s.omega for s in model.spec.sites)
    dim = model.dim
    probe = DriveEnvelope(amplitude, tuple(phases), 1.0, shape, ramp_time)
    l0, ld = Generators.from_model(model, probe).superops(dissipative)
    prop = Propagator(l0, ld, dt, dim, use_numba)

    order = np.argsort(cutoffs, kind="stable")
    n_max = int(round(max(cutoffs) / dt))
    endless = DriveEnvelope(amplitude, tuple(phases), 2 * n_max * dt + 1.0, shape, ramp_time)
    shared = endless.samples(dt, n_max)

    out = np.empty(len(cutoffs))
    ground = pure(model.state(int(np.argmin(model.eigen.energies)))).reshape(-1)
    vec, pos = ground, 0
    for i in order:
        n_t = int(round(cutoffs[i] / dt))
        amps = DriveEnvelope(amplitude, tuple(phases), n_t * dt, shape, ramp_time).samples(dt, n_t)
        diff = np.flatnonzero(np.any(amps != shared[:n_t], axis=1))
        split = int(diff[0]) if diff.size else n_t
        if split < pos:
            vec, pos = ground, 0
        vec = prop.advance(vec, shared[pos:split])
        pos = split
        final = prop.advance(vec, amps[split:])
        out[i] = fidelity(final.reshape(dim, dim), target)
    return out


@dataclass
class DriveOptimum:
    amplitude: float
    rel_phase: float
    cutoff: float
    fidelity: float
    landscape: np.ndarray  # (amplitude, rel_phase, cutoff)
    ansatz: ControlAnsatz

    def rows(self) -> list[tuple[float, float, float, float]]:
        a = self.ansatz
        return [(amp, ph, cut, float(self.landscape[i, j, k]))
                for i, amp in enumerate(a.amplitudes)
                for j, ph in enumerate(a.rel_phases)
                for k, cut in enumerate(a.cutoffs)]

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("amplitude,phase,cutoff,fidelity\n")
            for r in self.rows():
                fh.write(",".join(repr(float(x)) for x in r) + "\n")

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "rel_phase": self.rel_phase,
                "cutoff": self.cutoff, "fidelity": self.fidelity}


def optimize_drive(system, target: np.ndarray, ansatz: ControlAnsatz | None = None,
                   gamma: float = DEFAULT_GAMMA, dt: float = 1e-3, shape: str = "ramp",
                   ramp_time: float | None = None, dissipative: bool = True,
                   use_numba: bool | None = None) -> DriveOptimum:
    """Exhaustive grid search of the fidelity with ``target`` after charging from the ground state.

    Ties keep the first point in (amplitude, phase, cutoff) grid order.
    """
    model = _as_model(system, gamma)
    target = np.asarray(target, dtype=complex)
    if abs(np.linalg.norm(target) - 1) > 1e-10:
        raise ValueError("target state must be normalized")
    if ansatz is None:
        ansatz = ControlAnsatz.default(model.spec.coupling_j)
    land = np.empty(ansatz.shape)
    for i, amp in enumerate(ansatz.amplitudes):
        for j, rel in enumerate(ansatz.rel_phases):
            land[i, j] = fidelity_vs_cutoff(model, target, amp, site_phases(rel, model.spec.n_sites),
                                            ansatz.cutoffs, dt, shape, ramp_time, dissipative,
                                            use_numba)
    flat = int(np.argmax(land))  # argmax returns the first maximum in C order
    i, j, k = np.unravel_index(flat, land.shape)
    return DriveOptimum(ansatz.amplitudes[i], ansatz.rel_phases[j], ansatz.cutoffs[k],
                        float(land[i, j, k]), land, ansatz)


def _complex_pairs(vec: np.ndarray) -> list[list[float]]:
    return [[float(np.real(c)), float(np.imag(c))] for c in vec]


@dataclass
class TargetReport:
    system: SystemSpec
    gamma: float
    tolerances: dict
    states: list[dict]
    blocks: list[dict]
    ranking: list[dict]
    dark_states: list[dict]
    optimum: dict | None = None
    landscape: DriveOptimum | None = field(default=None, repr=False)

    @property
    def top(self) -> dict | None:
        if self.ranking:
            return self.ranking[0]
        return self.dark_states[0] if self.dark_states else None

    def to_dict(self) -> dict:
        return {"system": self.system.to_dict(), "gamma": self.gamma,
                "tolerances": self.tolerances, "states": self.states, "blocks": self.blocks,
                "ranking": self.ranking, "dark_states": self.dark_states,
                "optimum": self.optimum}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def classification_payload(model: DaviesModel, rate_tol: float = DEFAULT_RATE_TOL,
                           branch_tol: float = DEFAULT_BRANCH_TOL,
                           sigma_rel: float = DEFAULT_SIGMA_REL):
    """States and MS blocks in their serialized form, plus the decay graph."""
    infos, graph = classify(model.eigen, model.flux(), rate_tol, branch_tol)
    states = [{"index": s.index, "energy": s.energy, "N": s.manifold, "class": s.cls.value,
               "gamma_f": s.gamma_f, "e_f": s.e_f,
               "targets": [{"index": m, "branching": b} for m, b in s.targets]}
              for s in infos]
    blocks = []
    for rep in analyze_blocks(model, sigma_rel):
        blocks.append({
            "N_upper": rep.block.upper_n,
            "sigma": [float(x) for x in rep.decomposition.sigma],
            "spectators": [_complex_pairs(sp.vector) for sp in rep.spectators],
            "max_overlap": [sp.max_eigenstate_overlap for sp in rep.spectators],
        })
    return infos, graph, states, blocks


def scalable_pipeline(system: SystemSpec, gamma: float = DEFAULT_GAMMA,
                      ansatz: ControlAnsatz | None = None, optimize: bool = True,
                      rate_tol: float = DEFAULT_RATE_TOL, branch_tol: float = DEFAULT_BRANCH_TOL,
                      sigma_rel: float = DEFAULT_SIGMA_REL, dt: float = 1e-3,
                      use_numba: bool | None = None) -> TargetReport:
    """Diagonalize, build jumps, decompose blocks, classify, rank funnels, optimize the top one.

    Funnels are ranked by stored energy (descending), ties by decay rate
    (ascending). Without funnels the dark states become the fallback targets.
    """
    model = build_model(system, gamma)
    infos, graph, states, blocks = classification_payload(model, rate_tol, branch_tol, sigma_rel)

    def candidate(s):
        term = terminal_distribution(graph, s.index)
        return {"index": s.index, "class": s.cls.value, "e_f": s.e_f, "gamma_f": s.gamma_f,
                "N": s.manifold,
                "terminal_dark_support": [{"index": k, "weight": w} for k, w in sorted(term.items())
                                          if graph.nodes[k].cls == StateClass.DARK]}

    funnels = sorted((s for s in infos if s.cls == StateClass.FUNNEL),
                     key=lambda s: (-round(s.e_f, 9), round(s.gamma_f, 12), s.index))
    darks = sorted((s for s in infos if s.cls == StateClass.DARK),
                   key=lambda s: (-round(s.e_f, 9), s.index))
    ranking = [candidate(s) for s in funnels]
    for s, c in zip(funnels, ranking):
        c["paths_end_dark"] = decay_paths_end_dark(graph, s.index)
    dark_list = [candidate(s) for s in darks]

    report = TargetReport(system, float(gamma),
                          {"rate_tol": rate_tol, "branch_tol": branch_tol, "sigma_rel": sigma_rel,
                           "degeneracy_tol": model.eigen.degeneracy_tol},
                          states, blocks, ranking, dark_list)
    top = report.top
    if optimize and top is not None:
        opt = optimize_drive(model, model.state(top["index"]), ansatz, gamma, dt, use_numba=use_numba)
        top["recommended"] = opt.to_dict()
        top["achieved_fidelity"] = opt.fidelity
        report.optimum = {"target_index": top["index"], **opt.to_dict()}
        report.landscape = opt
    return report


def storage_figure_of_merit(report: TargetReport, horizon: float,
                            states: Sequence[int] | None = None, dt: float = 1e-3,
                            use_numba: bool | None = None) -> list[dict]:
    """Energy left after free decay for ``horizon`` from each pure candidate.

    Defaults to the ranked funnels followed by the dark states.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    model = build_model(report.system, report.gamma)
    if states is None:
        states = [c["index"] for c in report.ranking + report.dark_states]
    by_index = {s["index"]: s for s in report.states}
    _, graph = classify(model.eigen, model.flux(), report.tolerances["rate_tol"],
                        report.tolerances["branch_tol"])
    out = []
    for k in states:
        cfg = SimulationConfig(system=report.system, gamma=report.gamma,
                               drive=DriveEnvelope(amplitude=0.0), t_final=horizon, dt=dt,
                               record_stride=max(1, int(round(horizon / dt))),
                               initial_state="custom", custom_state=model.state(k),
                               target="custom", use_numba=use_numba)
        traj = evolve(cfg, model)
        entry = {"index": k, "class": by_index[k]["class"], "e_initial": by_index[k]["e_f"],
                 "retained": float(traj.energy[-1])}
        if by_index[k]["class"] == StateClass.FUNNEL.value:
            term = terminal_distribution(graph, k)
            entry["terminal_dark_energy"] = float(sum(w * by_index[m]["e_f"] for m, w in term.items()))
        out.append(entry)
    return out
