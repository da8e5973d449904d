"""Lyapunov-Perron fixed points for manifolds, foliation leaves and their derivatives.

All operators work in modal coordinates on a truncated half line that shares
its grid with the noise. With Z(t) the integral of z from 0 to t, every
convolution is written as exp(Z(t)) times a plain exponential convolution of
exp(-Z) g, so the recursions in ``semigroup`` apply unchanged. The Yosida
limit on the stable part is taken analytically: modal coordinates already
include the lift of boundary data.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import (AdmissionError, CapabilityError, CertificationMismatchError, ConfigurationError,
                     ConvergenceError, DomainError, RangeError)
from .flow import Trajectory, integrate_mild
from .gap import (ConstantProvider, GapProblem, GapReport, RateParams, check_cs_foliation,
                  check_cs_smooth, check_cu_problem)
from .model import Model, Nonlinearity
from .noise import OUProcess
from .semigroup import ConvolutionPlan, filter_backward, filter_forward

_KEY_SCALE = 1e12
_Z_LIMIT = 700.0


@dataclass(frozen=True)
class LPConfig:
    rates: RateParams = field(default_factory=RateParams)
    T_horizon: float | None = None
    dt: float | None = None
    plan: ConvolutionPlan = field(default_factory=ConvolutionPlan)
    tol: float = 1e-10
    max_iter: int = 500
    C_fixed: float | None = None
    shift_mode: str = "as-written"
    center: float = 0.0
    slack: float = 0.05
    min_decay: float = 30.0

    def horizon(self, eta: float, dt: float) -> float:
        """Grid-aligned truncation length for weight exponent ``eta``."""
        if self.dt is not None and abs(self.dt - dt) > 1e-12 * dt:
            raise ConfigurationError(f"config dt={self.dt} differs from noise dt={dt}")
        if self.T_horizon is None:
            T = self.min_decay / abs(eta)
        else:
            T = float(self.T_horizon)
            if T * abs(eta) < self.min_decay * (1 - 1e-12):
                raise ConfigurationError(
                    f"T_horizon * |eta| = {T * abs(eta):.3g} must be at least {self.min_decay}")
        return math.ceil(T / dt - 1e-9) * dt

    def problem(self, model: Model, L: float) -> GapProblem:
        return GapProblem(model.constants, L, self.rates,
                          ConstantProvider(model.constants, self.C_fixed), self.shift_mode)


@dataclass
class WeightedPath:
    """Path on a half line with weighted sup norm max e^{-eta t - Z(t)} ||f(t)||."""

    half_line: str
    eta: float
    times: np.ndarray
    values: np.ndarray
    Z: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(-self.eta * self.times - self.Z)

    def norm(self, values=None) -> float:
        vals = self.values if values is None else values
        return float(np.max(self.weights * np.linalg.norm(vals, axis=-1)))

    def at_zero(self) -> np.ndarray:
        return self.values[-1] if self.half_line == "past" else self.values[0]


@dataclass
class PicardStats:
    iterations: int
    diffs: list
    ratios: list
    residual: float
    certified: float | None = None

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)

    def as_dict(self):
        return {"iterations": self.iterations, "max_ratio": self.max_ratio,
                "residual": self.residual, "certified": self.certified}


def _picard(op, start, norm, tol, max_iter, certified=None, slack=0.05, label="fixed point"):
    v = start
    diffs, ratios = [], []
    for it in range(1, max_iter + 1):
        new = op(v)
        d = norm(new - v)
        scale = 1.0 + norm(new)
        if diffs and diffs[-1] > 1e-11 * scale:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        v = new
        if not np.isfinite(d):
            raise ConvergenceError(f"{label}: iteration produced non-finite values")
        if d <= tol * scale:
            break
    else:
        raise ConvergenceError(f"{label}: no convergence in {max_iter} iterations (last change {diffs[-1]:.3g})")
    stats = PicardStats(it, diffs, ratios, norm(op(v) - v), certified)
    if certified is not None and stats.max_ratio > certified + slack:
        raise CertificationMismatchError(
            f"{label}: observed ratio {stats.max_ratio:.4f} exceeds certified {certified:.4f} + {slack}")
    return v, stats


def _modal_component(model: Model, x, subspace: str, name: str, rtol: float = 1e-9):
    """Modal coordinates of ``x``, which must lie in X0 and in the given subspace."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DomainError(f"{name} must have shape ({model.dim},)")
    if not model.in_X0(x, tol=rtol * (1 + np.linalg.norm(x))):
        raise DomainError(f"{name} must lie in X0")
    c = model.to_modal(x)
    mask = model.mask(subspace)
    stray = np.linalg.norm(np.where(mask, 0.0, c))
    if stray > rtol * (1 + np.linalg.norm(c)):
        raise DomainError(f"{name} has components outside X_{subspace} (size {stray:.3g})")
    return np.where(mask, c, 0.0)


def _guard(z):
    if np.any(np.abs(z) > _Z_LIMIT):
        raise RangeError(f"|z| exceeds {_Z_LIMIT}")


class _HalfLineOperator:
    """Shared machinery for the past (manifold) and future (leaf) operators."""

    def __init__(self, model: Model, nl: Nonlinearity, ou: OUProcess, T: float, eta: float,
                 half_line: str, quadrature: str):
        self.model, self.nl, self.ou = model, nl, ou
        self.eta = eta
        self.half_line = half_line
        self.quadrature = quadrature
        if half_line == "past":
            times, z, Z = ou.window(-T, 0.0)
            self.forward_sub, self.backward_sub, self.free_sub = "s", "cu", "cu"
        else:
            times, z, Z = ou.window(0.0, T)
            self.forward_sub, self.backward_sub, self.free_sub = "cs", "u", "cs"
        _guard(z)
        self.times, self.z, self.Z = times, z, Z
        self.dt = ou.dt
        self.ez = np.exp(z)[:, None]
        self.eZ = np.exp(Z)[:, None]
        self.emZ = np.exp(-Z)[:, None]
        self.a = model.eigenvalues
        self.i_fwd = model.indices(self.forward_sub)
        self.i_bwd = model.indices(self.backward_sub)
        free = model.mask(self.free_sub)
        self.eat = np.where(free[None, :], np.exp(np.outer(times, np.where(free, self.a, 0.0))), 0.0)
        self.weights = np.exp(-eta * times - Z)

    def path(self, modal) -> WeightedPath:
        return WeightedPath(self.half_line, self.eta, self.times, self.model.from_modal(modal), self.Z)

    def norm(self, modal) -> float:
        return float(np.max(self.weights * np.linalg.norm(self.model.from_modal(modal), axis=-1)))

    def integrate(self, g):
        """Convolution part for modal forcing g (already in the v-frame)."""
        h = self.emZ * g
        y = np.zeros_like(h)
        if len(self.i_fwd):
            y[:, self.i_fwd] = filter_forward(self.a[self.i_fwd], h[:, self.i_fwd], self.dt, self.quadrature)
        if len(self.i_bwd):
            y[:, self.i_bwd] = -filter_backward(self.a[self.i_bwd], h[:, self.i_bwd], self.dt, self.quadrature)
        return y

    def linear(self, c0):
        """Modal values of phi(t, 0) c0 on the free subspace."""
        return self.eZ * (self.eat * c0[None, :])

    def apply(self, c0, g):
        return self.eZ * (self.eat * c0[None, :] + self.integrate(g))


class PastOperator(_HalfLineOperator):
    def __init__(self, model, nl, ou, T, eta, quadrature="exponential"):
        super().__init__(model, nl, ou, T, eta, "past", quadrature)

    def forcing(self, modal):
        x = self.model.from_modal(modal)
        return self.model.to_modal(self.nl.F(self.ez * x) / self.ez)

    def __call__(self, xi_modal, modal):
        return self.apply(xi_modal, self.forcing(modal))


class FutureOperator(_HalfLineOperator):
    def __init__(self, model, nl, ou, T, eta, base: np.ndarray, quadrature="exponential"):
        super().__init__(model, nl, ou, T, eta, "future", quadrature)
        if base.shape != (len(self.times), model.dim):
            raise ConfigurationError("base trajectory does not cover the future horizon")
        self.base = base
        self.ebase = self.ez * base

    def forcing(self, modal):
        p = self.model.from_modal(modal)
        return self.model.to_modal(self.nl.difference(self.ebase, self.ez * p) / self.ez)

    def __call__(self, iota_modal, modal):
        return self.apply(iota_modal, self.forcing(modal))


def _require_admitted(report: GapReport):
    if not report.passed:
        raise AdmissionError(f"gap condition {report.name} fails: lhs={report.lhs:.4g} >= {report.threshold:.4g}")


def certify_cu(model: Model, nl: Nonlinearity, cfg: LPConfig) -> GapReport:
    report = check_cu_problem(cfg.problem(model, nl.L))
    _require_admitted(report)
    return report


def certify_cs(model: Model, nl: Nonlinearity, cfg: LPConfig) -> list:
    reports = check_cs_foliation(cfg.problem(model, nl.L))
    for r in reports:
        _require_admitted(r)
    return reports


@dataclass
class CUSolution:
    path: WeightedPath
    h: np.ndarray
    stats: PicardStats
    modal: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.path, self.h))


@dataclass
class LeafSolution:
    path: WeightedPath
    l: np.ndarray
    point: np.ndarray
    stats: PicardStats
    modal: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.path, self.l))


@dataclass
class LinearMap:
    """Derivative as a physical matrix together with the per-direction paths."""

    matrix: np.ndarray
    directions: np.ndarray
    paths: list
    stats: list

    def __call__(self, d):
        return self.matrix @ np.asarray(d, dtype=float)


def _assemble(model: Model, columns: dict, subspace: str) -> np.ndarray:
    P = model.to_modal(np.eye(model.dim)).T
    mat = np.zeros((model.dim, model.dim))
    for k, col in columns.items():
        mat += np.outer(col, P[k])
    return mat


class ManifoldGraph:
    """Evaluator of the center-unstable manifold graph at a fixed fiber."""

    def __init__(self, model: Model, nl: Nonlinearity, ou: OUProcess, cfg: LPConfig | None = None):
        self.model, self.nl, self.ou = model, nl, ou
        self.cfg = cfg or LPConfig()
        self.report = certify_cu(model, nl, self.cfg)
        self.T = self.cfg.horizon(self.cfg.rates.eta_cu, ou.dt)
        self.op = PastOperator(model, nl, ou, self.T, self.cfg.rates.eta_cu, self.cfg.plan.quadrature)
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def K_u(self) -> float:
        return self.report.constants["K_u"]

    @property
    def contraction(self) -> float:
        return self.report.lhs

    def _key(self, x):
        return tuple(int(round(v * _KEY_SCALE)) for v in np.asarray(x, dtype=float))

    def solve(self, xi) -> CUSolution:
        key = self._key(xi)
        sol = self._cache.get(key)
        if sol is None:
            sol = self._solve(xi)
            with self._lock:
                sol = self._cache.setdefault(key, sol)
        return sol

    def _solve(self, xi) -> CUSolution:
        c = _modal_component(self.model, xi, "cu", "xi")
        op = self.op
        start = op.linear(c)
        modal, stats = _picard(lambda v: op(c, v), start, op.norm, self.cfg.tol, self.cfg.max_iter,
                               self.contraction, self.cfg.slack, "manifold")
        s_mask = self.model.mask("s")
        h = self.model.from_modal(np.where(s_mask, modal[-1], 0.0))
        return CUSolution(op.path(modal), h, stats, modal)

    def h(self, xi) -> np.ndarray:
        return self.solve(xi).h

    def point(self, xi) -> np.ndarray:
        return np.asarray(xi, dtype=float) + self.h(xi)

    def h_original(self, xi) -> np.ndarray:
        """Graph in the original frame, evaluated at the fiber's own z(0)."""
        z0 = self.ou.z_at(0.0)
        return pullback_manifold(self.h(np.exp(-z0) * np.asarray(xi, dtype=float)), z0)

    def derivative(self, xi) -> LinearMap:
        """D_xi h as a matrix, from the linearized fixed point in every cu direction."""
        if self.nl.DF is None:
            raise CapabilityError("nonlinearity has no Jacobian")
        sol = self.solve(xi)
        op = self.op
        jac = self.nl.DF(op.ez * sol.path.values)
        model = self.model

        def forcing(w):
            return model.to_modal(np.einsum("nij,nj->ni", jac, model.from_modal(w)))

        cols, paths, stats = {}, [], []
        s_mask = model.mask("s")
        for k in model.indices("cu"):
            e = np.zeros(model.n_modes)
            e[k] = 1.0
            dv, st = _picard(lambda w: op.apply(e, forcing(w)), op.linear(e), op.norm, self.cfg.tol,
                             self.cfg.max_iter, self.contraction, self.cfg.slack, "manifold derivative")
            cols[k] = model.from_modal(np.where(s_mask, dv[-1], 0.0))
            paths.append(op.path(dv))
            stats.append(st)
        return LinearMap(_assemble(model, cols, "cu"), model.basis("cu"), paths, stats)


class FoliationLeaf:
    """Evaluator of the center-stable leaf through an anchor point."""

    def __init__(self, model: Model, nl: Nonlinearity, ou: OUProcess, anchor, cfg: LPConfig | None = None,
                 base: Trajectory | None = None):
        self.model, self.nl, self.ou = model, nl, ou
        self.cfg = cfg or LPConfig()
        self.reports = certify_cs(model, nl, self.cfg)
        self.anchor = np.asarray(anchor, dtype=float)
        if not model.in_X0(self.anchor, tol=1e-12 * (1 + np.linalg.norm(self.anchor))):
            raise DomainError("anchor must lie in X0")
        self.T = self.cfg.horizon(self.cfg.rates.eta_cs, ou.dt)
        if base is None:
            base = integrate_mild(model, nl, ou, self.anchor, self.T, max_norm=math.inf)
        self.base = base
        n = int(round(self.T / ou.dt)) + 1
        self.op = FutureOperator(model, nl, ou, self.T, self.cfg.rates.eta_cs, base.values[:n],
                                 self.cfg.plan.quadrature)
        c = model.to_modal(self.anchor)
        self.anchor_cs = model.from_modal(np.where(model.mask("cs"), c, 0.0))
        self.anchor_u = model.from_modal(np.where(model.mask("u"), c, 0.0))
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def K_s(self) -> float:
        return self.reports[0].constants["K_s"]

    @property
    def contraction(self) -> float:
        return self.reports[0].lhs

    def _key(self, x):
        return tuple(int(round(v * _KEY_SCALE)) for v in np.asarray(x, dtype=float))

    def solve(self, iota) -> LeafSolution:
        key = self._key(iota)
        sol = self._cache.get(key)
        if sol is None:
            sol = self._solve(iota)
            with self._lock:
                sol = self._cache.setdefault(key, sol)
        return sol

    def _solve(self, iota) -> LeafSolution:
        iota = np.asarray(iota, dtype=float)
        _modal_component(self.model, iota, "cs", "iota")
        c = _modal_component(self.model, iota - self.anchor_cs, "cs", "iota")
        op = self.op
        modal, stats = _picard(lambda p: op(c, p), op.linear(c), op.norm, self.cfg.tol, self.cfg.max_iter,
                               self.contraction, self.cfg.slack, "leaf")
        u_mask = self.model.mask("u")
        l_val = self.anchor_u + self.model.from_modal(np.where(u_mask, modal[0], 0.0))
        return LeafSolution(op.path(modal), l_val, iota + l_val, stats, modal)

    def l(self, iota) -> np.ndarray:
        return self.solve(iota).l

    def point(self, iota) -> np.ndarray:
        return self.solve(iota).point

    def l_original(self, iota) -> np.ndarray:
        """Leaf graph in the original frame at the fiber's own z(0)."""
        z0 = self.ou.z_at(0.0)
        return pullback_leaf(self.l(np.exp(-z0) * np.asarray(iota, dtype=float)), z0)

    def derivative(self, iota) -> LinearMap:
        """D_iota l as a matrix, from the linearized leaf fixed point."""
        if self.nl.DF is None:
            raise CapabilityError("nonlinearity has no Jacobian")
        sol = self.solve(iota)
        op = self.op
        jac = self.nl.DF(op.ez * (op.base + sol.path.values))
        model = self.model

        def forcing(w):
            return model.to_modal(np.einsum("nij,nj->ni", jac, model.from_modal(w)))

        cols, paths, stats = {}, [], []
        u_mask = model.mask("u")
        for k in model.indices("cs"):
            e = np.zeros(model.n_modes)
            e[k] = 1.0
            dp, st = _picard(lambda w: op.apply(e, forcing(w)), op.linear(e), op.norm, self.cfg.tol,
                             self.cfg.max_iter, self.contraction, self.cfg.slack, "leaf derivative")
            cols[k] = model.from_modal(np.where(u_mask, dp[0], 0.0))
            paths.append(op.path(dp))
            stats.append(st)
        return LinearMap(_assemble(model, cols, "cs"), model.basis("cs"), paths, stats)


def lp_operator_cu(model: Model, nl: Nonlinearity, ou: OUProcess, xi, v: WeightedPath,
                   cfg: LPConfig | None = None) -> WeightedPath:
    """One application of the manifold operator J on the grid of ``v``."""
    cfg = cfg or LPConfig()
    certify_cu(model, nl, cfg)
    T = -float(v.times[0])
    op = PastOperator(model, nl, ou, T, v.eta, cfg.plan.quadrature)
    c = _modal_component(model, xi, "cu", "xi")
    return op.path(op(c, model.to_modal(v.values)))


def lp_operator_cs(model: Model, nl: Nonlinearity, ou: OUProcess, iota, base: Trajectory,
                   psi: WeightedPath, cfg: LPConfig | None = None) -> WeightedPath:
    """One application of the leaf operator Z on the grid of ``psi``.

    ``iota`` is the shifted parameter (leaf coordinate minus the anchor's cs part).
    """
    cfg = cfg or LPConfig()
    certify_cs(model, nl, cfg)
    T = float(psi.times[-1])
    n = len(psi.times)
    op = FutureOperator(model, nl, ou, T, psi.eta, base.values[:n], cfg.plan.quadrature)
    c = _modal_component(model, iota, "cs", "iota")
    return op.path(op(c, model.to_modal(psi.values)))


def solve_cu(model: Model, nl: Nonlinearity, ou: OUProcess, xi, cfg: LPConfig | None = None) -> CUSolution:
    """Fixed point of J and the graph value h(xi) = Pi_s v(0)."""
    return ManifoldGraph(model, nl, ou, cfg).solve(xi)


def solve_leaf(model: Model, nl: Nonlinearity, ou: OUProcess, x_anchor, iota,
               cfg: LPConfig | None = None) -> LeafSolution:
    """Fixed point of Z and the leaf value l(iota) for the leaf through ``x_anchor``."""
    return FoliationLeaf(model, nl, ou, x_anchor, cfg).solve(iota)


def derivative_cu(model, nl, ou, xi, cfg: LPConfig | None = None) -> LinearMap:
    cfg = cfg or LPConfig()
    graph = ManifoldGraph(model, nl, ou, cfg)
    return graph.derivative(xi)


def derivative_leaf(model, nl, ou, anchor, iota, cfg: LPConfig | None = None) -> LinearMap:
    cfg = cfg or LPConfig()
    check = check_cs_smooth(cfg.problem(model, nl.L), 1)
    _require_admitted(check[0])
    return FoliationLeaf(model, nl, ou, anchor, cfg).derivative(iota)


@dataclass
class IntersectionResult:
    point: np.ndarray
    iota: np.ndarray
    xi: np.ndarray
    residual_leaf: float
    residual_manifold: float
    iterations: int
    diffs: list


def intersect(manifold: ManifoldGraph, leaf: FoliationLeaf, cfg: LPConfig | None = None,
              start=None) -> IntersectionResult:
    """Point common to the leaf and the manifold, with the center coordinate pinned.

    Iterates iota_s <- h(c + l(c + iota_s)) where c is fixed at ``cfg.center``
    (scalar or one value per center mode). ``start`` overrides the initial
    stable part, which defaults to that of the anchor.
    """
    cfg = cfg or manifold.cfg
    model = manifold.model
    if leaf.model is not model or leaf.ou is not manifold.ou:
        raise ConfigurationError("manifold and leaf must share model and noise")
    prod = manifold.K_u * leaf.K_s
    if not prod < 1:
        raise AdmissionError(f"K_u K_s = {prod:.4g} is not below 1")
    c_idx = model.indices("c")
    s_mask = model.mask("s")
    cvec = np.zeros(model.n_modes)
    cvec[c_idx] = np.broadcast_to(np.asarray(cfg.center, dtype=float), (len(c_idx),))
    cpart = model.from_modal(cvec)
    if start is None:
        s = model.from_modal(np.where(s_mask, model.to_modal(leaf.anchor), 0.0))
    else:
        s = model.from_modal(_modal_component(model, start, "s", "start"))
    diffs = []
    for it in range(1, cfg.max_iter + 1):
        iota = cpart + s
        xi = cpart + leaf.l(iota)
        s_new = manifold.h(xi)
        d = float(np.linalg.norm(s_new - s))
        diffs.append(d)
        s = s_new
        if d <= cfg.tol * (1 + np.linalg.norm(s)):
            break
    else:
        raise ConvergenceError(f"intersection: no convergence in {cfg.max_iter} iterations")
    iota = cpart + s
    xi = cpart + leaf.l(iota)
    point = iota + leaf.l(iota)
    r_leaf = float(np.linalg.norm(xi - cpart - leaf.l(iota)))
    r_man = float(np.linalg.norm(manifold.h(xi) - s))
    return IntersectionResult(point, iota, xi, r_leaf, r_man, it, diffs)


def pullback_manifold(h_value, z0: float):
    """Original-frame graph value e^{z0} h."""
    if abs(z0) > _Z_LIMIT:
        raise RangeError(f"|z0| exceeds {_Z_LIMIT}")
    return math.exp(z0) * np.asarray(h_value, dtype=float)


def pullback_leaf(l_value, z0: float):
    """Original-frame leaf value e^{z0} l."""
    if abs(z0) > _Z_LIMIT:
        raise RangeError(f"|z0| exceeds {_Z_LIMIT}")
    return math.exp(z0) * np.asarray(l_value, dtype=float)
