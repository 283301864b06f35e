"""Command-line experiment runner: classify, evolve, compare, robustness, decay, optimize.

Exit codes: 0 success, 2 configuration error, 3 numerical-instability abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .charge import ControlAnsatz, classification_payload, scalable_pipeline
from .davies import build_model, close_frequency_pairs
from .dynamics import (ConfigError, DriveEnvelope, NumericalInstabilityError, SimulationConfig,
                       evolve, validate_drive)
from .msclass import spectator_eigenstate_deviation
from .qsys import InvalidSpecError, QuditSpec, SystemSpec

log = logging.getLogger("qbattery")

EXPERIMENTS = ("classify", "evolve", "robustness", "compare", "decay", "optimize")
ALPHA_SWEEP = (0.0, 0.2, 1.0, 2.0)


@dataclasses.dataclass
class ExperimentConfig:
    experiment: str = "classify"
    omega: float = 10.0
    alpha: float = 0.2
    J: float = 1.0
    gamma: float = 0.1
    d: int = 3
    sites: int = 2
    drive_amp: float = 0.5
    drive_phase: float = float(np.pi)
    cutoff: float = 3.0
    envelope: str = "ramp"
    t_final: float = 500.0
    dt: float = 1e-3
    record_stride: int = 100
    tau_b: float | None = None
    sweep_alpha: bool = False
    robustness_alpha: float = 1.0
    out: str = "out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        typed = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            val = data[f.name]
            if f.name in ("d", "sites", "record_stride"):
                val = int(val)
            elif f.name == "sweep_alpha":
                val = val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes")
            elif f.name in ("experiment", "out", "envelope"):
                val = str(val)
            elif f.name == "tau_b":
                val = None if val in (None, "", "none") else float(val)
            else:
                val = float(val)
            typed[f.name] = val
        return cls(**typed)

    def system(self, d: int | None = None, alpha: float | None = None) -> SystemSpec:
        return SystemSpec.uniform(self.sites, self.d if d is None else d, self.omega,
                                  self.alpha if alpha is None else alpha, self.J)

    def drive(self, amplitude: float | None = None) -> DriveEnvelope:
        phases = tuple(j * self.drive_phase for j in range(self.sites))
        return DriveEnvelope(self.drive_amp if amplitude is None else amplitude, phases,
                             self.cutoff, self.envelope, 0.2 / self.omega)

    def simulation(self, **overrides) -> SimulationConfig:
        system = overrides.pop("system", None) or self.system()
        kw = dict(system=system, gamma=self.gamma, drive=self.drive(), t_final=self.t_final,
                  dt=self.dt, record_stride=self.record_stride, tau_b=self.tau_b)
        kw.update(overrides)
        return SimulationConfig(**kw)

    def key(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config_file(path: str | Path) -> dict:
    """JSON object, or ``key = value`` lines with ``#`` comments."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _out_dir(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


PLOT_TEMPLATE = '''"""Plot {title}. Generated by qbattery; edit freely."""
import sys
import matplotlib.pyplot as plt
import pandas as pd

files = {files!r}
fig, ax = plt.subplots()
for label, path in files.items():
    df = pd.read_csv(path, comment="#")
    ax.plot(df["{x}"], df["{y}"], label=label)
ax.set_xlabel("{x}")
ax.set_ylabel("{y}")
{extra}ax.legend()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "{name}.png", dpi=150)
'''


def write_plot_script(out: Path, name: str, files: dict, x: str, y: str, title: str,
                      logy: bool = False) -> Path:
    path = out / f"plot_{name}.py"
    extra = 'ax.set_yscale("log")\n' if logy else ""
    path.write_text(PLOT_TEMPLATE.format(title=title, files={k: str(v) for k, v in files.items()},
                                         x=x, y=y, extra=extra, name=name))
    return path


def _emit_warnings(msgs):
    for m in msgs:
        log.warning(m)


def degeneracy_warnings(model) -> list[str]:
    msgs = []
    degenerate = [lev for lev in model.eigen.levels if lev.multiplicity > 1]
    if degenerate:
        msgs.append("degenerate levels at energies "
                    + ", ".join(f"{lev.energy:.6g} (x{lev.multiplicity})" for lev in degenerate)
                    + "; eigenstate classification depends on the chosen basis")
    shared = [j for j in model.jumps if len(j.transitions) > 1]
    if shared:
        msgs.append("Bohr frequencies shared by several transitions: "
                    + ", ".join(f"{j.bohr_frequency:.6g}" for j in shared))
    close = close_frequency_pairs(model.jumps, model.eigen.degeneracy_tol)
    if close:
        msgs.append(f"near-coincident Bohr frequencies {close}; secular approximation fragile")
    return msgs


def cmd_classify(cfg: ExperimentConfig) -> dict:
    model = build_model(cfg.system(), cfg.gamma)
    _emit_warnings(degeneracy_warnings(model))
    _, _, states, blocks = classification_payload(model)
    payload = {"system": model.spec.to_dict(), "gamma": cfg.gamma, "states": states,
               "blocks": blocks}
    out = _out_dir(cfg) / f"classify_{cfg.key()}.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"{'idx':>3} {'N':>2} {'energy':>10} {'class':>7} {'Gamma_F':>10} {'E_F':>10}  targets")
    for s in states:
        tg = ", ".join(f"{t['index']}({t['branching']:.3f})" for t in s["targets"])
        print(f"{s['index']:>3} {s['N']:>2} {s['energy']:>10.4f} {s['class']:>7} "
              f"{s['gamma_f']:>10.4g} {s['e_f']:>10.4f}  {tg}")
    print(f"wrote {out}")
    return payload


def cmd_evolve(cfg: ExperimentConfig) -> dict[float, Path]:
    out = _out_dir(cfg)
    alphas = ALPHA_SWEEP if cfg.sweep_alpha else (cfg.alpha,)
    files = {}
    for a in alphas:
        sim = cfg.simulation(system=cfg.system(alpha=a))
        _emit_warnings(validate_drive(sim))
        traj = evolve(sim)
        path = traj.write_csv(out / f"evolve_a{a:g}_{cfg.key()}.csv")
        files[a] = path
        print(f"alpha={a:g}: dE(t_final)={traj.energy[-1]:.6g} "
              f"dark fidelity={traj.fidelity[-1]:.6g} -> {path}")
    write_plot_script(out, "evolve_energy", {f"alpha={a:g}": p for a, p in files.items()},
                      "t", "dE", "stored energy", logy=True)
    write_plot_script(out, "evolve_fidelity", {f"alpha={a:g}": p for a, p in files.items()},
                      "t", "fidelity", "dark-state fidelity")
    return files


def cmd_compare(cfg: ExperimentConfig) -> dict:
    out = _out_dir(cfg)
    runs = {(2, 0.0): None, (2, 0.2): None, (3, 0.0): None, (3, 0.2): None, (3, 1.0): None}
    final = {}
    files = {}
    for d, a in runs:
        traj = evolve(cfg.simulation(system=cfg.system(d=d, alpha=a)))
        label = f"{'qubit' if d == 2 else 'qutrit'}_a{a:g}"
        files[label] = traj.write_csv(out / f"compare_{label}_{cfg.key()}.csv")
        final[label] = float(traj.energy[-1])
    ratio = final["qutrit_a0.2"] / final["qubit_a0.2"] if final["qubit_a0.2"] > 0 else float("inf")
    summary = {"final_energy": final, "qutrit_over_qubit_alpha0.2": ratio}
    (out / f"compare_{cfg.key()}.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    write_plot_script(out, "compare_energy", files, "t", "dE", "qubit vs qutrit", logy=True)
    for k, v in final.items():
        print(f"{k}: dE(t_final)={v:.6g}")
    print(f"qutrit/qubit steady-state ratio (alpha=0.2): {ratio:.4f}")
    return summary


def robustness_rows(alpha: float = 1.0, ratios=None) -> list[dict]:
    if ratios is None:
        ratios = np.logspace(-2, 2, 81)
    rows = []
    for r in ratios:
        dev = spectator_eigenstate_deviation(10.0, alpha, r * alpha)
        rows.append({"J_over_alpha": float(r), "overlap": dev.overlap, "x_exact": dev.x_exact,
                     "x_approx": dev.x_approx, "abs_dev": abs(dev.x_exact - dev.x_approx),
                     "alpha_small_vs_2": alpha / 2})
    return rows


def cmd_robustness(cfg: ExperimentConfig) -> Path:
    out = _out_dir(cfg)
    path = out / f"robustness_{cfg.key()}.csv"
    rows = robustness_rows(cfg.robustness_alpha)
    with path.open("w") as fh:
        fh.write("J_over_alpha,overlap,x_exact,x_approx,abs_dev\n")
        for r in rows:
            fh.write(f"{r['J_over_alpha']!r},{r['overlap']!r},{r['x_exact']!r},"
                     f"{r['x_approx']!r},{r['abs_dev']!r}\n")
    write_plot_script(out, "robustness", {"overlap": path}, "J_over_alpha", "overlap",
                      "spectator robustness")
    print(f"overlap at J/alpha={rows[0]['J_over_alpha']:.3g}: {rows[0]['overlap']:.6f}; "
          f"at {rows[-1]['J_over_alpha']:.3g}: {rows[-1]['overlap']:.8f}")
    print(f"alpha/2 = {cfg.robustness_alpha / 2:.3g} (approximate-dark heuristic alpha << 2)")
    print(f"wrote {path}")
    return path


def decay_trajectories(cfg: ExperimentConfig, use_numba=None) -> dict:
    """Free decay from one representative state per excited class."""
    model = build_model(cfg.system(), cfg.gamma)
    out = {}
    for name in ("dark", "funnel", "bright"):
        sim = cfg.simulation(system=model.spec, drive=DriveEnvelope(amplitude=0.0),
                             initial_state=name, target=name, use_numba=use_numba)
        out[name] = evolve(sim, model)
    return out


def cmd_decay(cfg: ExperimentConfig) -> dict[str, Path]:
    out = _out_dir(cfg)
    files = {}
    scale = 2 * cfg.gamma
    for name, traj in decay_trajectories(cfg).items():
        path = traj.write_csv(out / f"decay_{name}_{cfg.key()}.csv")
        files[name] = path
        print(f"{name}: dE(0)={traj.energy[0]:.6g} dE(end)={traj.energy[-1]:.6g} "
              f"(end at Gamma t = {traj.times[-1] * scale:.3g})")
    write_plot_script(out, "decay", files, "t", "dE", "decay from MS states")
    return files


def cmd_optimize(cfg: ExperimentConfig) -> dict:
    out = _out_dir(cfg)
    report = scalable_pipeline(cfg.system(), cfg.gamma, ControlAnsatz.default(cfg.J), dt=cfg.dt)
    jpath = out / f"optimize_{cfg.key()}.json"
    jpath.write_text(report.to_json())
    if report.landscape is not None:
        report.landscape.write_csv(out / f"landscape_{cfg.key()}.csv")
    if report.ranking:
        for c in report.ranking:
            print(f"funnel {c['index']}: E_F={c['e_f']:.6g} Gamma_F={c['gamma_f']:.6g}")
    else:
        print("no funnel states; dark fallback targets: "
              + ", ".join(str(c["index"]) for c in report.dark_states))
    if report.optimum:
        print(f"optimum: {report.optimum}")
    print(f"wrote {jpath}")
    return report.to_dict()


COMMANDS = {"classify": cmd_classify, "evolve": cmd_evolve, "robustness": cmd_robustness,
            "compare": cmd_compare, "decay": cmd_decay, "optimize": cmd_optimize}

FLAG_MAP = {"omega": "omega", "alpha": "alpha", "J": "J", "gamma": "gamma", "d": "d",
            "sites": "sites", "drive_amp": "drive_amp", "drive_phase": "drive_phase",
            "cutoff": "cutoff", "t_final": "t_final", "dt": "dt", "out": "out",
            "tau_b": "tau_b", "envelope": "envelope"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbattery", description=__doc__.splitlines()[0])
    p.add_argument("experiment", nargs="?", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON or key=value file")
    p.add_argument("--omega", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--J", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--sites", type=int)
    p.add_argument("--drive-amp", dest="drive_amp", type=float)
    p.add_argument("--drive-phase", dest="drive_phase", type=float,
                   help="relative phase between neighbouring sites (default pi)")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--envelope", choices=("ramp", "hard"))
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--tau-b", dest="tau_b", type=float)
    p.add_argument("--out")
    p.add_argument("--sweep-alpha", action="store_true")
    p.add_argument("--show-config", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else {}
    for flag, key in FLAG_MAP.items():
        val = getattr(args, flag)
        if val is not None:
            data[key] = val
    if args.sweep_alpha:
        data["sweep_alpha"] = True
    if args.experiment:
        data["experiment"] = args.experiment
    return ExperimentConfig.from_mapping(data)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.show_config:
            print(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True))
            return 0
        COMMANDS[cfg.experiment](cfg)
    except (ConfigError, InvalidSpecError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalInstabilityError as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
