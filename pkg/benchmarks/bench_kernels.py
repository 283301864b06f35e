"""Compare the numba and numpy RK4 backends on driven and free propagation.

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from qbattery import _kernels
from qbattery.davies import build_model
from qbattery.dynamics import DriveEnvelope, Generators, pure
from qbattery.qsys import SystemSpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    h = 1e-3
    print(f"{'system':<14}{'kernel':<10}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'max diff':>11}")
    for label, spec in (("2 qubits", SystemSpec.uniform(2, 2)),
                        ("2 qutrits", SystemSpec.uniform(2, 3)),
                        ("3 qutrits", SystemSpec.uniform(3, 3))):
        model = build_model(spec)
        env = DriveEnvelope(0.5, None, 1e9, "hard")
        l0, ld = Generators.from_model(model, env).superops()
        l0, ld = np.ascontiguousarray(l0), np.ascontiguousarray(ld)
        dim = model.dim
        vec = np.ascontiguousarray(pure(model.state(0)).reshape(-1))
        steps = args.steps if dim < 20 else args.steps // 10
        amps = np.ascontiguousarray(env.samples(h, steps))
        step = np.ascontiguousarray(_kernels.rk4_step_matrix(l0 + 0.5 * ld, h))
        cases = {
            "driven": lambda k: getattr(_kernels, f"rk4_driven_{k}")(l0, ld, amps, vec, h, dim),
            "stepmat": lambda k: getattr(_kernels, f"propagate_{k}")(step, vec, steps, dim),
        }
        for name, call in cases.items():
            call("numba")  # compile outside the timing
            t_np, a = best_of(lambda: call("numpy"), args.repeat)
            t_nb, b = best_of(lambda: call("numba"), args.repeat)
            print(f"{label:<14}{name:<10}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>9.2f}"
                  f"{np.abs(a - b).max():>11.1e}")


if __name__ == "__main__":
    main()
