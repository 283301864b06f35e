"""RK4 inner loops on the row-major vectorized density matrix.

Each kernel exists as plain numpy source and, when numba is importable and
``QBATTERY_NO_NUMBA`` is unset, as an ``@njit`` compilation of that same source.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("QBATTERY_NO_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _FLAG in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None


def _rk4_driven(l0, ld, amps, vec, h, dim):
    """Integrate d(vec)/dt = (l0 + f(t) ld) vec for len(amps) steps.

    ``amps[s] = (f(t_s), f(t_s + h/2), f(t_s + h))``.
    """
    v = vec.copy()
    for s in range(amps.shape[0]):
        a0 = amps[s, 0]
        am = amps[s, 1]
        a1 = amps[s, 2]
        k1 = np.dot(l0, v) + a0 * np.dot(ld, v)
        y = v + (0.5 * h) * k1
        k2 = np.dot(l0, y) + am * np.dot(ld, y)
        y = v + (0.5 * h) * k2
        k3 = np.dot(l0, y) + am * np.dot(ld, y)
        y = v + h * k3
        k4 = np.dot(l0, y) + a1 * np.dot(ld, y)
        m = (v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).reshape((dim, dim))
        v = (0.5 * (m + m.conj().T)).reshape(dim * dim)
    return v


def _propagate(step, vec, nsteps, dim):
    """Apply a precomputed one-step RK4 propagator ``nsteps`` times."""
    v = vec.copy()
    for _ in range(nsteps):
        m = np.dot(step, v).reshape((dim, dim))
        v = (0.5 * (m + m.conj().T)).reshape(dim * dim)
    return v


rk4_driven_numpy = _rk4_driven
propagate_numpy = _propagate

if HAVE_NUMBA:
    rk4_driven_numba = numba.njit(cache=True)(_rk4_driven)
    propagate_numba = numba.njit(cache=True)(_propagate)
else:  # pragma: no cover
    rk4_driven_numba = propagate_numba = None

USE_NUMBA = HAVE_NUMBA and NUMBA_REQUESTED


def kernels(use_numba: bool | None = None):
    """Return ``(rk4_driven, propagate)`` for the requested backend."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and HAVE_NUMBA:
        return rk4_driven_numba, propagate_numba
    return rk4_driven_numpy, propagate_numpy


def rk4_step_matrix(gen: np.ndarray, h: float) -> np.ndarray:
    """One RK4 step of a constant linear generator as a matrix polynomial."""
    hg = h * gen
    eye = np.eye(gen.shape[0], dtype=complex)
    term = eye.copy()
    out = eye.copy()
    for k in range(1, 5):
        term = term @ hg / k
        out = out + term
    return out
