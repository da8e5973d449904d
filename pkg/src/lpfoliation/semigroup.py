"""Integrated semigroup, Stieltjes convolution and the constant C_kappa.

Convolutions are evaluated per mode with the recursion in ``kernels``. The
default quadrature integrates the exponential kernel exactly against the
piecewise-linear interpolant of the (weighted) forcing, which stays accurate
for stiff stable modes where the plain trapezoid rule does not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError
from .kernels import exp_filter
from .model import Model, SpectralModel
from .noise import OUProcess

QUADRATURES = ("exponential", "trapezoid", "midpoint")


def phi1(x):
    """(e^x - 1) / x, equal to 1 at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, np.expm1(xs) / xs)


def phi2(x):
    """(e^x - 1 - x) / x^2, equal to 1/2 at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    series = 0.5 + x / 6 + x * x / 24 + x**3 / 120
    return np.where(small, series, (np.expm1(xs) - xs) / (xs * xs))


def step_weights(rates, dt: float, quadrature: str = "exponential"):
    """Coefficients (decay, w_prev, w_next) for one step of y' = a y + h."""
    a = np.asarray(rates, dtype=float)
    x = a * dt
    decay = np.exp(x)
    if quadrature == "exponential":
        p1, p2 = phi1(x), phi2(x)
        return decay, dt * (p1 - p2), dt * p2
    if quadrature == "trapezoid":
        return decay, 0.5 * dt * decay, np.full_like(a, 0.5 * dt)
    if quadrature == "midpoint":
        w = 0.5 * dt * np.exp(0.5 * x)
        return decay, w, w.copy()
    raise ConfigurationError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")


def filter_forward(rates, h, dt: float, quadrature: str = "exponential"):
    """y(t_j) = int_{t_0}^{t_j} exp(a (t_j - s)) h(s) ds for every node."""
    h = np.ascontiguousarray(h, dtype=float)
    if h.shape[1] == 0:
        return h.copy()
    d, wp, wn = step_weights(rates, dt, quadrature)
    return exp_filter(d, wp, wn, h)


def filter_backward(rates, h, dt: float, quadrature: str = "exponential"):
    """y(t_j) = int_{t_j}^{t_end} exp(a (t_j - s)) h(s) ds for every node."""
    h = np.asarray(h, dtype=float)
    if h.shape[1] == 0:
        return h.copy()
    rev = filter_forward(-np.asarray(rates, dtype=float), h[::-1], dt, quadrature)
    return rev[::-1]


def integrated_semigroup_apply(model: Model, t: float, x, lam: float | None = None, dt: float | None = None):
    """S(t) x.

    Without ``lam`` the per-mode closed form (e^{at} - 1)/a is used. With
    ``lam`` the defining expression
    lam int_0^t T(s) R(lam) x ds + (I - T(t)) R(lam) x
    is evaluated in modal coordinates, by exact integration or, if ``dt`` is
    given, by the trapezoid rule on that step.
    """
    if t < 0:
        raise DomainError("integrated semigroup needs t >= 0")
    a = model.eigenvalues
    c = model.to_modal(x)
    if lam is None:
        return model.from_modal(t * phi1(a * t) * c)
    if not lam > model.constants.theta_hy:
        raise DomainError(f"lambda={lam} must exceed theta={model.constants.theta_hy}")
    r = c / (lam - a)
    if dt is None:
        integral = t * phi1(a * t)
    else:
        n = max(1, int(round(t / dt)))
        s = np.linspace(0.0, t, n + 1)
        vals = np.exp(np.outer(s, a))
        integral = (t / n) * (vals.sum(axis=0) - 0.5 * (vals[0] + vals[-1]))
    return model.from_modal(lam * integral * r + (1.0 - np.exp(a * t)) * r)


@dataclass(frozen=True)
class ConvolutionPlan:
    lambda_ladder: tuple = (1e2, 1e3, 1e4)
    quadrature: str = "exponential"
    dt: float | None = None
    tol: float = 1e-6

    def __post_init__(self):
        lad = tuple(float(v) for v in self.lambda_ladder)
        if len(lad) < 2 or any(b <= a for a, b in zip(lad, lad[1:])):
            raise ConfigurationError("lambda ladder must be strictly increasing with at least two entries")
        object.__setattr__(self, "lambda_ladder", lad)
        if self.quadrature not in QUADRATURES:
            raise ConfigurationError(f"quadrature must be one of {QUADRATURES}")

    def validate(self, model: Model):
        if self.lambda_ladder[0] <= model.constants.theta_hy:
            raise ConfigurationError(
                f"ladder entries must exceed theta={model.constants.theta_hy}")


@dataclass
class ConvolutionResult:
    value: np.ndarray
    limit: np.ndarray
    lambdas: tuple
    values: list
    diffs: list
    extrapolated: np.ndarray

    def errors(self):
        """Distance of each ladder value from the exact lambda limit."""
        return [float(np.linalg.norm(v - self.limit)) for v in self.values]


def _forcing(model: Model, ou: OUProcess, f, t: float):
    times, z, Z = ou.window(0.0, t)
    if callable(f):
        vals = np.asarray(f(times), dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
    if vals.shape != (len(times), model.dim):
        raise ConfigurationError(
            f"forcing must have shape {(len(times), model.dim)}, got {vals.shape}")
    return times, Z, model.to_modal(vals)


def _modal_convolution(model, Z, g, dt, quadrature, mask):
    """Final value of int_0^t exp(a(t-s) + Z(t) - Z(s)) g(s) ds on masked modes."""
    idx = np.flatnonzero(mask)
    out = np.zeros(model.n_modes)
    if len(Z) < 2 or len(idx) == 0:
        return out
    h = np.exp(-Z)[:, None] * g[:, idx]
    y = filter_forward(model.eigenvalues[idx], h, dt, quadrature)
    out[idx] = math.exp(Z[-1]) * y[-1]
    return out


def _ladder(model, conv, plan, mask):
    a = model.eigenvalues
    values = []
    for lam in plan.lambda_ladder:
        values.append(model.from_modal(np.where(mask, lam / (lam - a), 0.0) * conv))
    limit = model.from_modal(np.where(mask, conv, 0.0))
    diffs = [float(np.linalg.norm(b - v)) for v, b in zip(values, values[1:])]
    scale = plan.tol * (1.0 + float(np.linalg.norm(values[-1])))
    for d0, d1 in zip(diffs, diffs[1:]):
        if d1 > scale and not d1 < d0:
            raise ConvergenceError(f"Yosida ladder not converging: differences {diffs}")
    l1, l2 = plan.lambda_ladder[-2:]
    extrap = (l2 * values[-1] - l1 * values[-2]) / (l2 - l1)
    value = limit if isinstance(model, SpectralModel) else values[-1]
    return ConvolutionResult(value, limit, plan.lambda_ladder, values, diffs, extrap)


def stieltjes_convolution(model: Model, ou: OUProcess, f, t: float, plan: ConvolutionPlan | None = None):
    """(S <> f)(t) with the random weight exp(int_s^t z), via the Yosida ladder.

    ``f`` is either a callable on an array of times or an array sampled on
    the noise grid nodes of [0, t].
    """
    plan = plan or ConvolutionPlan()
    plan.validate(model)
    _, Z, g = _forcing(model, ou, f, t)
    conv = _modal_convolution(model, Z, g, ou.dt, plan.quadrature, np.ones(model.n_modes, bool))
    return _ladder(model, conv, plan, np.ones(model.n_modes, bool))


def split_convolution(model: Model, ou: OUProcess, f, t: float, plan: ConvolutionPlan | None = None):
    """Center, unstable and stable parts of the convolution.

    The c and u parts are plain integrals against the flow on those modes; the
    stable part goes through the Yosida ladder.
    """
    plan = plan or ConvolutionPlan()
    plan.validate(model)
    _, Z, g = _forcing(model, ou, f, t)
    parts = []
    for sub in ("c", "u"):
        m = model.mask(sub)
        parts.append(model.from_modal(_modal_convolution(model, Z, g, ou.dt, plan.quadrature, m)))
    ms = model.mask("s")
    conv = _modal_convolution(model, Z, g, ou.dt, plan.quadrature, ms)
    parts.append(_ladder(model, conv, plan, ms).value)
    return tuple(parts)


def c_kappa(epsilon: float, tau_eps: float, theta_hy: float, kappa: float) -> float:
    """2 eps max(1, e^{-kappa tau}) / (1 - e^{(theta - kappa) tau})."""
    if not kappa > theta_hy:
        raise DomainError(f"kappa={kappa} must exceed theta={theta_hy}")
    if not (tau_eps > 0 and epsilon > 0):
        raise DomainError("epsilon and tau_eps must be positive")
    return 2.0 * epsilon * max(1.0, math.exp(-kappa * tau_eps)) / -math.expm1((theta_hy - kappa) * tau_eps)


@dataclass(frozen=True)
class ConvConstants:
    epsilon: float
    tau_eps: float
    kappa: float
    c_kappa: float

    def as_dict(self):
        return {"epsilon": self.epsilon, "tau_eps": self.tau_eps, "kappa": self.kappa, "c_kappa": self.c_kappa}


def scan_c_kappa(kappa: float, theta_hy: float, M: float, delta, taus=None) -> ConvConstants:
    """Minimize C_kappa over tau with epsilon = M delta(tau)."""
    if not kappa > theta_hy:
        raise DomainError(f"kappa={kappa} must exceed theta={theta_hy}")
    taus = np.logspace(-6, 1, 421) if taus is None else np.asarray(taus, dtype=float)
    eps = M * np.asarray([delta(t) for t in taus])
    ok = eps > 0
    taus, eps = taus[ok], eps[ok]
    vals = 2.0 * eps * np.maximum(1.0, np.exp(-kappa * taus)) / -np.expm1((theta_hy - kappa) * taus)
    j = int(np.argmin(vals))
    return ConvConstants(float(eps[j]), float(taus[j]), float(kappa), float(vals[j]))


@dataclass
class DeltaBound:
    """Empirical non-decreasing bound delta(t) on [0, tau0]."""

    times: np.ndarray
    values: np.ndarray
    raw: np.ndarray = field(repr=False)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def delta_bound_estimate(model: Model, tau0: float, probe_count: int = 16, dt: float = 1e-3,
                         seed: int = 0, quadrature: str = "exponential") -> DeltaBound:
    """Largest ratio ||(S <> f)(t)|| / sup ||f|| over probe forcings, z = 0.

    Probes are the constant coordinate vectors of X followed by random
    constant and random piecewise-constant unit forcings.
    """
    if not tau0 > 0:
        raise DomainError("tau0 must be positive")
    n = max(1, int(math.ceil(tau0 / dt)))
    times = np.arange(n + 1) * dt
    rng = np.random.default_rng(seed)
    probes = [np.broadcast_to(e, (n + 1, model.dim)) for e in np.eye(model.dim)]
    while len(probes) < probe_count:
        if len(probes) % 2:
            v = rng.standard_normal(model.dim)
            probes.append(np.broadcast_to(v / np.linalg.norm(v), (n + 1, model.dim)))
        else:
            v = rng.standard_normal((8, model.dim))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            probes.append(v[np.minimum((np.arange(n + 1) * 8) // (n + 1), 7)])
    a = model.eigenvalues
    best = np.zeros(n + 1)
    for p in probes[:max(probe_count, model.dim)]:
        g = model.to_modal(p)
        y = filter_forward(a, g, dt, quadrature)
        ratio = np.linalg.norm(model.from_modal(y), axis=1) / np.max(np.linalg.norm(p, axis=1))
        best = np.maximum(best, ratio)
    return DeltaBound(times, np.maximum.accumulate(best), best)
