"""Two-sided Brownian paths, the Wiener shift and the stationary OU process."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigurationError, CoverageError
from .kernels import exp_filter

_ALIGN_RTOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [t_min, t_max] that contains 0 as a node."""

    t_min: float
    t_max: float
    dt: float
    n_neg: int = field(init=False, repr=False)
    n_pos: int = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive and finite, got {self.dt}")
        if self.t_min > 0 or self.t_max < 0:
            raise ConfigurationError(
                f"grid must contain 0: t_min={self.t_min}, t_max={self.t_max}")
        n_neg = _steps(-self.t_min, self.dt, "t_min")
        n_pos = _steps(self.t_max, self.dt, "t_max")
        object.__setattr__(self, "n_neg", n_neg)
        object.__setattr__(self, "n_pos", n_pos)

    @property
    def n_nodes(self) -> int:
        return self.n_neg + self.n_pos + 1

    @property
    def zero_index(self) -> int:
        return self.n_neg

    @property
    def times(self) -> np.ndarray:
        return np.arange(-self.n_neg, self.n_pos + 1) * self.dt

    def index(self, t: float) -> int:
        """Node index of ``t``; raises AlignmentError off the grid or window."""
        k = _steps_signed(t, self.dt)
        if k < -self.n_neg or k > self.n_pos:
            raise CoverageError(f"t={t} outside [{self.t_min}, {self.t_max}]")
        return k + self.n_neg

    def contains(self, t0: float, t1: float) -> bool:
        return t0 >= self.t_min - _ALIGN_RTOL * self.dt and t1 <= self.t_max + _ALIGN_RTOL * self.dt


def _steps(length: float, dt: float, name: str) -> int:
    k = round(length / dt)
    if abs(length - k * dt) > _ALIGN_RTOL * dt * max(1, k):
        raise ConfigurationError(f"{name}={length} is not an integer multiple of dt={dt}")
    return int(k)


def _steps_signed(t: float, dt: float) -> int:
    k = round(t / dt)
    if abs(t - k * dt) > _ALIGN_RTOL * dt * max(1, abs(k)):
        raise AlignmentError(f"t={t} is not on the grid with dt={dt}")
    return int(k)


@dataclass(frozen=True)
class BrownianPath:
    """Sampled two-sided Wiener trajectory.

    ``origin`` records the absolute time (in the coordinates of the original
    sample) that plays the role of 0 after repeated Wiener shifts.
    """

    grid: TimeGrid
    values: np.ndarray
    seed: int
    origin: float = 0.0

    def __post_init__(self):
        if self.values.shape != (self.grid.n_nodes,):
            raise ConfigurationError("values do not match grid")
        self.values.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index(t)])


def _walk(seed: int, side: int, n: int, dt: float) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[seed, side]))
    out = np.zeros(n + 1)
    if n:
        np.cumsum(math.sqrt(dt) * rng.standard_normal(n), out=out[1:])
    return out


def sample_brownian(grid: TimeGrid, seed: int) -> BrownianPath:
    """Sample a two-sided Brownian path on ``grid``.

    Each half line is an independent random walk started at 0. Increments come
    from a Philox stream keyed by (seed, side) and are consumed from node 0
    outward, so enlarging the window never changes existing values.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be a 64-bit unsigned integer")
    pos = _walk(seed, 0, grid.n_pos, grid.dt)
    neg = _walk(seed, 1, grid.n_neg, grid.dt)
    values = np.concatenate([neg[:0:-1], pos])
    return BrownianPath(grid, values, seed)


def wiener_shift(path: BrownianPath, t: float) -> BrownianPath:
    """Return theta_t(omega): s -> omega(s + t) - omega(t) on the shifted window."""
    g = path.grid
    k = g.index(t)
    shift = (k - g.zero_index) * g.dt
    grid = TimeGrid((-g.n_neg - (k - g.zero_index)) * g.dt,
                    (g.n_pos - (k - g.zero_index)) * g.dt, g.dt)
    values = path.values - path.values[k]
    return BrownianPath(grid, values, path.seed, path.origin + shift)


@dataclass(frozen=True)
class OUProcess:
    """Stationary Ornstein-Uhlenbeck values z(theta_t omega) on a grid.

    ``Z`` holds the running integral of z measured from t = 0.
    """

    mu: float
    grid: TimeGrid
    z_values: np.ndarray
    tail_cut: float
    Z: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        z = np.asarray(self.z_values, dtype=float)
        if z.shape != (self.grid.n_nodes,):
            raise ConfigurationError("z_values do not match grid")
        if not np.all(np.isfinite(z)):
            raise ConfigurationError("z_values must be finite")
        cum = np.zeros_like(z)
        np.cumsum(0.5 * self.grid.dt * (z[1:] + z[:-1]), out=cum[1:])
        cum -= cum[self.grid.zero_index]
        z.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "z_values", z)
        object.__setattr__(self, "Z", cum)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float = 0.0, mu: float = 1.0) -> "OUProcess":
        """Frozen noise z = value at every node."""
        return cls(mu, grid, np.full(grid.n_nodes, float(value)), 0.0)

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def z_at(self, t: float) -> float:
        return float(self.z_values[self.grid.index(t)])

    def window(self, t0: float, t1: float):
        """Times, z and Z on the nodes of [t0, t1]."""
        i0 = self.grid.index(t0)
        i1 = self.grid.index(t1)
        sl = slice(i0, i1 + 1)
        return self.grid.times[sl], self.z_values[sl], self.Z[sl]

    def shift(self, t: float) -> "OUProcess":
        """The process seen from fiber theta_t omega (node relabelling)."""
        g = self.grid
        k = g.index(t) - g.zero_index
        grid = TimeGrid((-g.n_neg - k) * g.dt, (g.n_pos - k) * g.dt, g.dt)
        return OUProcess(self.mu, grid, self.z_values, self.tail_cut)


def default_tail_cut(mu: float, dt: float) -> float:
    """Smallest grid-aligned cut with exp(-mu * cut) < 1e-12."""
    n = math.floor(12 * math.log(10) / (mu * dt)) + 1
    return n * dt


def ou_stationary(path: BrownianPath, mu: float = 1.0, tail_cut: float | None = None) -> OUProcess:
    """Stationary OU process driven by ``path``.

    Uses z(t) = omega(t) - mu * int_{-inf}^t exp(-mu (t - r)) omega(r) dr with
    the lower limit cut at ``tail_cut`` before the first output node. The
    output window is [path.t_min + tail_cut, path.t_max].
    """
    if not mu > 0:
        raise ConfigurationError(f"mu must be positive, got {mu}")
    dt = path.grid.dt
    if tail_cut is None:
        tail_cut = default_tail_cut(mu, dt)
    if math.exp(-mu * tail_cut) >= 1e-12:
        raise ConfigurationError("tail_cut too short: exp(-mu*tail_cut) must be < 1e-12")
    n_tail = _steps(tail_cut, dt, "tail_cut")
    if n_tail > path.grid.n_neg:
        raise CoverageError(
            f"path window starts at {path.grid.t_min}; need {-tail_cut} or earlier")
    w = path.values
    decay = math.exp(-mu * dt)
    c = 0.5 * mu * dt
    conv = exp_filter(np.array([decay]), np.array([c * decay]), np.array([c]), w[:, None])[:, 0]
    z = (w - conv)[n_tail:]
    grid = TimeGrid(path.grid.t_min + n_tail * dt, path.grid.t_max, dt)
    return OUProcess(mu, grid, z, n_tail * dt)


def integral_z(ou: OUProcess, s: float, t: float) -> float:
    """Signed trapezoid integral of z over [s, t]."""
    return float(ou.Z[ou.grid.index(t)] - ou.Z[ou.grid.index(s)])


def write_noise_csv(fh, path: BrownianPath, ou: OUProcess) -> None:
    """Write rows (t, omega, z) over the OU window with a header line."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "omega", "z"])
    i0 = path.grid.index(ou.grid.t_min)
    for j, (t, z) in enumerate(zip(ou.times, ou.z_values)):
        writer.writerow([repr(float(t)), repr(float(path.values[i0 + j])), repr(float(z))])
