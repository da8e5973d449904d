"""Random linear flow, the conjugation between frames, and a mild integrator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError, RangeError
from .model import Model, Nonlinearity, semigroup_apply, transform_nonlinearity
from .noise import OUProcess, integral_z
from .semigroup import phi1

_Z_LIMIT = 700.0


def _guard(z):
    if np.any(np.abs(np.asarray(z)) > _Z_LIMIT):
        raise RangeError(f"|z| exceeds {_Z_LIMIT}")


def transform(u, z):
    """v = u exp(-z)."""
    _guard(z)
    return np.asarray(u, dtype=float) * np.exp(-np.asarray(z, dtype=float))[..., None]


def inverse_transform(v, z):
    """u = v exp(z)."""
    _guard(z)
    return np.asarray(v, dtype=float) * np.exp(np.asarray(z, dtype=float))[..., None]


def phi_flow(model: Model, ou: OUProcess, subspace: str, t: float, s: float, x):
    """phi(t, s) x = T(t - s) exp(int_s^t z) x on a spectral subspace."""
    if t < s and "s" in subspace:
        raise DomainError("stable flow only runs forward")
    return semigroup_apply(model, subspace, t - s, x) * math.exp(integral_z(ou, s, t))


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    frame: str = "v"

    def at(self, t: float) -> np.ndarray:
        j = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        return self.values[j]

    def write_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i}" for i in range(self.values.shape[1])] + ["frame"])
        for t, row in zip(self.times, self.values):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in row] + [self.frame])


def integrate_mild(model: Model, nl: Nonlinearity, ou: OUProcess, x0, t_end: float,
                   plan=None, max_norm: float = 1e12) -> Trajectory:
    """Exponential Euler for v' = (A + z) v + G(v) on [0, t_end].

    G is frozen over each step and the noise enters through the average of z
    on the step, so the scheme is exact when F = 0 and respects the cocycle
    property on grid-aligned times.
    """
    if t_end < 0:
        raise ConfigurationError("t_end must be non-negative")
    x0 = np.asarray(x0, dtype=float)
    if not model.in_X0(x0, tol=0.0):
        raise DomainError("initial state must lie in X0")
    times, z, Z = ou.window(0.0, t_end)
    _guard(z)
    dt = ou.dt
    a = model.eigenvalues
    n = len(times)
    modal = np.empty((n, model.n_modes))
    modal[0] = model.to_modal(x0)
    zbar = np.diff(Z) / dt
    rates = a[None, :] + zbar[:, None]
    decay = np.exp(rates * dt)
    weight = dt * phi1(rates * dt)
    state = x0
    for j in range(n - 1):
        g = model.to_modal(transform_nonlinearity(nl, z[j], state))
        modal[j + 1] = decay[j] * modal[j] + weight[j] * g
        state = model.from_modal(modal[j + 1])
        nrm = np.linalg.norm(state)
        if not nrm <= max_norm:
            raise DivergenceError(f"norm {nrm:.3g} exceeds {max_norm:.3g} at t={times[j + 1]}")
    return Trajectory(times.copy(), model.from_modal(modal), "v")


def integrate_original(model: Model, nl: Nonlinearity, ou: OUProcess, u0, t_end: float,
                       plan=None, max_norm: float = 1e12) -> Trajectory:
    """Solution in the original frame: integrate in the v-frame and conjugate back."""
    z0 = ou.z_at(0.0)
    v = integrate_mild(model, nl, ou, transform(u0, z0), t_end, plan, max_norm)
    _, z, _ = ou.window(0.0, t_end)
    return Trajectory(v.times, inverse_transform(v.values, z), "u")
