"""Quantitative checks of invariance, leaf convergence, derivatives and an independent oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_bvp

from .errors import ConfigurationError, OracleError
from .flow import integrate_mild
from .lyapunov_perron import FoliationLeaf, LPConfig, ManifoldGraph
from .model import Model, Nonlinearity, project
from .noise import OUProcess


@dataclass
class VerificationReport:
    name: str
    samples: int
    worst: float
    tolerance: float
    values: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)

    def as_dict(self):
        return {"name": self.name, "samples": self.samples, "worst": self.worst,
                "tolerance": self.tolerance, "pass": self.passed}


def check_invariance_manifold(manifold: ManifoldGraph, r: float, xi_samples, tol: float | None = None,
                              shifted: ManifoldGraph | None = None) -> VerificationReport:
    """Flow points of the graph for time r and compare with the graph at theta_r omega.

    The manifold at the shifted fiber is rebuilt from the node-shifted noise.
    """
    model, nl, ou = manifold.model, manifold.nl, manifold.ou
    tol = 10 * ou.dt if tol is None else tol
    if shifted is None:
        shifted = ManifoldGraph(model, nl, ou.shift(r), manifold.cfg)
    vals = []
    for xi in xi_samples:
        x = manifold.point(xi)
        v = integrate_mild(model, nl, ou, x, r).values[-1]
        res = project(model, "s", v) - shifted.h(project(model, "cu", v))
        vals.append(float(np.linalg.norm(res)))
    return VerificationReport("invariance_manifold", len(vals), max(vals, default=0.0), tol, vals)


def weighted_difference(model: Model, nl: Nonlinearity, ou: OUProcess, x1, x2, T: float, eta: float):
    """t -> e^{-eta t - Z(t)} ||v(t, x2) - v(t, x1)|| on [0, T]."""
    v1 = integrate_mild(model, nl, ou, x1, T)
    v2 = integrate_mild(model, nl, ou, x2, T)
    _, _, Z = ou.window(0.0, T)
    return v1.times, np.exp(-eta * v1.times - Z) * np.linalg.norm(v2.values - v1.values, axis=1)


def check_leaf_convergence(leaf: FoliationLeaf, pairs, T: float, tol_growth: float = 0.1) -> VerificationReport:
    """Weighted separation of trajectories started at leaf points stays below its initial value."""
    eta = leaf.cfg.rates.eta_cs
    vals = []
    for x1, x2 in pairs:
        _, w = weighted_difference(leaf.model, leaf.nl, leaf.ou, x1, x2, T, eta)
        vals.append(0.0 if w[0] == 0 and w.max() == 0 else float(w.max() / w[0]))
    return VerificationReport("leaf_convergence", len(vals), max(vals, default=0.0), 1.0 + tol_growth, vals)


def check_gradient(func, derivative, points, directions, fd_step: float = 1e-5, tol: float = 1e-4,
                   floor: float = 1e-8, name: str = "gradient") -> VerificationReport:
    """Central differences of ``func`` against ``derivative(x)`` (a matrix).

    Per point, the error is the Frobenius distance between the difference
    quotients along ``directions`` and the derivative applied to them,
    relative to the size of the latter (at least ``floor``).
    """
    vals = []
    dirs = np.asarray(directions, dtype=float)
    for x in points:
        x = np.asarray(x, dtype=float)
        exact = dirs @ derivative(x).T
        fd = np.array([(func(x + fd_step * d) - func(x - fd_step * d)) / (2 * fd_step) for d in dirs])
        den = max(float(np.linalg.norm(exact)), floor)
        vals.append(float(np.linalg.norm(fd - exact)) / den)
    return VerificationReport(name, len(vals), max(vals, default=0.0), tol, vals)


def check_manifold_gradient(manifold: ManifoldGraph, points, fd_step=1e-5, tol=1e-4) -> VerificationReport:
    return check_gradient(manifold.h, lambda x: manifold.derivative(x).matrix, points,
                          manifold.model.basis("cu"), fd_step, tol, name="gradient_manifold")


def check_leaf_gradient(leaf: FoliationLeaf, points, fd_step=1e-5, tol=1e-4) -> VerificationReport:
    return check_gradient(leaf.l, lambda x: leaf.derivative(x).matrix, points,
                          leaf.model.basis("cs"), fd_step, tol, name="gradient_leaf")


def bvp_oracle(model: Model, nl: Nonlinearity, ou: OUProcess, xi, T: float, nodes: int = 400,
               tol: float = 1e-10) -> np.ndarray:
    """Graph value from a collocation solve of the truncated boundary-value problem.

    Solves v' = (A + z(t)) v + G(t, v) on [-T, 0] in modal coordinates with
    the cu coordinates of v(0) equal to those of xi and the stable coordinates
    of v(-T) equal to 0.
    """
    if model.n_modes > 4:
        raise ConfigurationError("the oracle is meant for models with at most 4 modes")
    times, z, _ = ou.window(-T, 0.0)
    if np.ptp(z) > 0:
        raise ConfigurationError("the oracle needs deterministic or frozen noise (constant z)")
    a = model.eigenvalues
    cu = model.mask("cu")
    s = ~cu
    xi_m = model.to_modal(np.asarray(xi, dtype=float))

    def rhs(t, y):
        x = model.from_modal(y.T)
        ez = math.exp(z[0])
        g = model.to_modal(nl.F(ez * x) / ez).T
        return (a[:, None] + z[0]) * y + g

    def bc(ya, yb):
        return np.concatenate([ya[s], yb[cu] - xi_m[cu]])

    mesh = np.linspace(-T, 0.0, nodes)
    guess = np.where(cu[:, None], np.exp(np.outer(a, mesh)) * xi_m[:, None], 0.0)
    sol = solve_bvp(rhs, bc, mesh, guess, tol=tol, max_nodes=200000)
    if not sol.success:
        raise OracleError(f"collocation oracle failed: {sol.message}")
    y0 = sol.sol(0.0)
    return model.from_modal(np.where(s, y0, 0.0))


def oracle_bvp_compare(model: Model, nl: Nonlinearity, ou: OUProcess, xi_samples, cfg: LPConfig | None = None,
                       tol: float = 1e-4, manifold: ManifoldGraph | None = None) -> VerificationReport:
    """Largest gap between the fixed-point graph and the collocation oracle."""
    manifold = manifold or ManifoldGraph(model, nl, ou, cfg)
    vals = []
    for xi in xi_samples:
        h_lp = manifold.h(xi)
        h_or = bvp_oracle(model, nl, ou, xi, manifold.T)
        vals.append(float(np.linalg.norm(h_lp - h_or)))
    return VerificationReport("oracle_bvp", len(vals), max(vals, default=0.0), tol, vals)
