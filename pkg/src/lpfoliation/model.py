"""Linear operator backends with an exponential trichotomy, and nonlinearities.

Every backend works through a modal representation: ``to_modal`` maps a state
in X to eigen-coordinates (including the lift of boundary data, so that the
Yosida limit acts as the identity on modal coordinates) and ``from_modal``
maps back into X0. Norms are Euclidean in physical coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import (ConfigurationError, DomainError, NumericalError, RangeError,
                     SpectrumProximityError)

SUBSPACES = ("c", "u", "s", "cu", "cs")
_Z_LIMIT = 700.0


@dataclass(frozen=True)
class TrichotomyConstants:
    K: float
    alpha: float
    beta: float
    gamma: float
    theta_hy: float
    M_hy: float = 1.0

    def __post_init__(self):
        if not (self.alpha > self.gamma >= 0):
            raise ConfigurationError(f"need alpha > gamma >= 0, got alpha={self.alpha}, gamma={self.gamma}")
        if not self.beta > self.gamma:
            raise ConfigurationError(f"need beta > gamma, got beta={self.beta}, gamma={self.gamma}")
        if self.K < 1 or self.M_hy < 1:
            raise ConfigurationError("K and M_hy must be >= 1")

    def as_dict(self):
        return {k: float(getattr(self, k)) for k in ("K", "alpha", "beta", "gamma", "theta_hy", "M_hy")}


class Model:
    """Common machinery; subclasses provide the modal transforms."""

    eigenvalues: np.ndarray
    labels: tuple
    constants: TrichotomyConstants
    dim: int

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def mask(self, subspace: str) -> np.ndarray:
        if subspace not in SUBSPACES:
            raise ConfigurationError(f"unknown subspace {subspace!r}")
        return np.array([lab in subspace for lab in self.labels])

    def indices(self, subspace: str) -> np.ndarray:
        return np.flatnonzero(self.mask(subspace))

    def to_modal(self, y):
        raise NotImplementedError

    def from_modal(self, c):
        raise NotImplementedError

    def in_X0(self, y, tol: float = 0.0) -> bool:
        return True

    def norm(self, y, axis=-1):
        return np.linalg.norm(y, axis=axis)

    def basis(self, subspace: str) -> np.ndarray:
        """Physical basis vectors of a spectral subspace, one per row."""
        idx = self.indices(subspace)
        eye = np.zeros((len(idx), self.n_modes))
        eye[np.arange(len(idx)), idx] = 1.0
        return self.from_modal(eye)

    def modal_operator(self, weights) -> np.ndarray:
        """Physical matrix (dim x dim) of the modal multiplier ``weights``."""
        cols = self.from_modal(np.asarray(weights) * self.to_modal(np.eye(self.dim)))
        return cols.T

    def resolvent_apply(self, lam, y):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _check_labels(eigs, labels, const: TrichotomyConstants, tol=1e-12):
    for a, lab in zip(eigs, labels):
        if lab == "u" and not a >= const.alpha - tol:
            raise ConfigurationError(f"unstable eigenvalue {a} below alpha={const.alpha}")
        if lab == "c" and not abs(a) <= const.gamma + tol:
            raise ConfigurationError(f"center eigenvalue {a} outside [-gamma, gamma]")
        if lab == "s" and not a <= -const.beta + tol:
            raise ConfigurationError(f"stable eigenvalue {a} above -beta={-const.beta}")
        if lab not in ("c", "u", "s"):
            raise ConfigurationError(f"label {lab!r} not in c/u/s")


class SpectralModel(Model):
    """Diagonal operator; physical and modal coordinates coincide."""

    def __init__(self, eigenvalues, labels, constants: TrichotomyConstants, name="spectral"):
        eigs = np.asarray(eigenvalues, dtype=float)
        if eigs.ndim != 1 or len(eigs) == 0:
            raise ConfigurationError("eigenvalues must be a non-empty vector")
        labels = tuple(labels)
        if len(labels) != len(eigs):
            raise ConfigurationError("one label per eigenvalue required")
        _check_labels(eigs, labels, constants)
        eigs.setflags(write=False)
        self.eigenvalues = eigs
        self.labels = labels
        self.constants = constants
        self.dim = len(eigs)
        self.name = name

    @classmethod
    def from_eigenvalues(cls, eigenvalues, gamma: float, K: float = 1.0):
        """Label modes by sign relative to ``gamma`` and take sharp rates."""
        eigs = np.asarray(eigenvalues, dtype=float)
        labels = tuple("u" if a > gamma else "s" if a < -gamma else "c" for a in eigs)
        unst = eigs[eigs > gamma]
        stab = eigs[eigs < -gamma]
        alpha = float(unst.min()) if len(unst) else math.inf
        beta = float(-stab.max()) if len(stab) else math.inf
        const = TrichotomyConstants(K, alpha, beta, gamma, float(eigs.max()), 1.0)
        return cls(eigs, labels, const)

    def to_modal(self, y):
        return np.asarray(y, dtype=float)

    def from_modal(self, c):
        return np.asarray(c, dtype=float)

    def resolvent_apply(self, lam, y):
        _check_lambda(self, lam)
        return np.asarray(y, dtype=float) / (lam - self.eigenvalues)

    def describe(self):
        preset = getattr(self, "preset", None)
        if preset is not None:
            return dict(preset)
        return {"kind": "spectral", "eigenvalues": self.eigenvalues.tolist(),
                "labels": list(self.labels), "constants": self.constants.as_dict()}


def parabolic_preset(n_modes: int = 16, epsilon_star: float = 1.0, gamma_star: float = 0.5) -> SpectralModel:
    """Eigenvalues (1 - k^2) pi^2 labelled u, c, s, s, ..."""
    pi2 = math.pi ** 2
    if n_modes < 2:
        raise ConfigurationError("n_modes must be at least 2")
    if not 0 < epsilon_star < pi2:
        raise ConfigurationError("epsilon_star must lie in (0, pi^2)")
    if not 0 < gamma_star < pi2 - epsilon_star:
        raise ConfigurationError("gamma_star must lie in (0, pi^2 - epsilon_star)")
    k = np.arange(n_modes)
    eigs = (1.0 - k * k) * pi2
    labels = tuple("u" if j == 0 else "c" if j == 1 else "s" for j in k)
    const = TrichotomyConstants(1.0, pi2 - epsilon_star, pi2 + epsilon_star, gamma_star, pi2, 1.0)
    model = SpectralModel(eigs, labels, const, name="parabolic")
    model.preset = {"kind": "parabolic", "n_modes": n_modes,
                    "epsilon_star": epsilon_star, "gamma_star": gamma_star}
    return model


class BoundaryModel(Model):
    """Second-difference operator with a boundary trace slot.

    State is (r, phi_0..phi_{N-1}) on nodes x_j = j h, h = x_max / N, with
    phi_N = 0. The domain of A is {0} x R^N; the first slot of the image is
    the negative derivative at 0, realized by a ghost node
    phi_{-1} = phi_1 + 2 h r. The operator is shifted so that its second
    eigenvalue is exactly zero.
    """

    def __init__(self, n_interior: int = 32, x_max: float = 1.0, gamma: float | None = None):
        n = int(n_interior)
        if n < 3:
            raise ConfigurationError("n_interior must be at least 3")
        if not x_max > 0:
            raise ConfigurationError("x_max must be positive")
        self.n_interior = n
        self.x_max = float(x_max)
        self.h = h = x_max / n
        self.dim = n + 1
        # symmetric form S = D^-1 A D with D = diag(sqrt2, 1, ...)
        diag = np.full(n, -2.0 / h**2)
        off = np.full(n - 1, 1.0 / h**2)
        off[0] = math.sqrt(2.0) / h**2
        mu, q = eigh_tridiagonal(diag, off)
        order = np.argsort(mu)[::-1]
        mu, q = mu[order], q[:, order]
        self.shift = -float(mu[1])
        eigs = mu - mu[1]
        dvec = np.ones(n)
        dvec[0] = math.sqrt(2.0)
        self.V = dvec[:, None] * q
        self.W = q.T / dvec[None, :]
        self.lift = np.zeros(n)
        self.lift[0] = 2.0 / h
        eigs.setflags(write=False)
        self.eigenvalues = eigs
        self.labels = tuple("u" if j == 0 else "c" if j == 1 else "s" for j in range(n))
        alpha = float(eigs[0])
        beta = float(-eigs[2])
        if gamma is None:
            gamma = 0.1 * min(alpha, beta)
        K = 1.0
        for sub in ("c", "u", "s"):
            idx = self.indices(sub)
            K = max(K, np.linalg.norm(self.V[:, idx], 2) * np.linalg.norm(self.W[idx, :], 2))
        M = np.linalg.norm(self.V, 2) * np.linalg.norm(self.W, 2)
        self.constants = TrichotomyConstants(float(K), alpha, beta, float(gamma), alpha, float(max(M, 1.0)))
        self.name = "boundary"
        # banded A0 (without the shift) for resolvent solves
        self._lower = np.full(n - 1, 1.0 / h**2)
        self._upper = np.full(n - 1, 1.0 / h**2)
        self._upper[0] = 2.0 / h**2
        self._diag = np.full(n, -2.0 / h**2) + self.shift

    def to_modal(self, y):
        y = np.asarray(y, dtype=float)
        g = y[..., 1:] + y[..., :1] * self.lift
        return g @ self.W.T

    def from_modal(self, c):
        c = np.asarray(c, dtype=float)
        phi = c @ self.V.T
        return np.concatenate([np.zeros(phi.shape[:-1] + (1,)), phi], axis=-1)

    def in_X0(self, y, tol: float = 0.0) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(np.abs(y[..., 0]) <= tol))

    def resolvent_apply(self, lam, y):
        _check_lambda(self, lam)
        y = np.asarray(y, dtype=float)
        rhs = y[..., 1:] + y[..., :1] * self.lift
        ab = np.zeros((3, self.n_interior))
        ab[0, 1:] = -self._upper
        ab[1] = lam - self._diag
        ab[2, :-1] = -self._lower
        try:
            phi = solve_banded((1, 1), ab, np.moveaxis(rhs, -1, 0))
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"resolvent solve failed: {exc}") from exc
        phi = np.moveaxis(phi, 0, -1)
        if not np.all(np.isfinite(phi)):
            raise NumericalError("resolvent solve produced non-finite values")
        return np.concatenate([np.zeros(phi.shape[:-1] + (1,)), phi], axis=-1)

    def resolvent_residual(self, lam, y, x) -> float:
        """Max residual of the discrete equation solved by ``x = R(lam) y``.

        Checks that x lies in D(A), then evaluates the ghost-node stencil
        lam phi_j - (phi_{j-1} - 2 phi_j + phi_{j+1}) / h^2 - shift phi_j = f_j
        with phi_{-1} = phi_1 + 2 h r and phi_N = 0.
        """
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        h = self.h
        r, f = y[0], y[1:]
        phi = np.concatenate([[x[2] + 2 * h * r], x[1:], [0.0]])
        lap = (phi[:-2] - 2 * phi[1:-1] + phi[2:]) / h**2
        res = lam * phi[1:-1] - lap - self.shift * phi[1:-1] - f
        return float(max(abs(x[0]), np.max(np.abs(res))))

    def describe(self):
        return {"kind": "boundary", "n_interior": self.n_interior, "x_max": self.x_max,
                "gamma": self.constants.gamma}


def _check_lambda(model: Model, lam):
    if not lam > model.constants.theta_hy:
        raise SpectrumProximityError(
            f"lambda={lam} must exceed theta={model.constants.theta_hy}")


def semigroup_apply(model: Model, subspace: str, t: float, x):
    """T(t) restricted to a spectral subspace; negative t allowed on c, u, cu."""
    if t < 0 and "s" in subspace:
        raise DomainError("the stable part cannot be run backward in time")
    if not model.in_X0(x, tol=0.0):
        raise DomainError("semigroup acts on X0 only")
    c = model.to_modal(x)
    w = np.where(model.mask(subspace), np.exp(model.eigenvalues * t), 0.0)
    return model.from_modal(w * c)


def resolvent_apply(model: Model, lam: float, y):
    """(lam I - A)^{-1} y, landing in D(A)."""
    return model.resolvent_apply(lam, y)


def yosida_apply(model: Model, lam: float, y):
    """lam (lam I - A)^{-1} y."""
    return lam * model.resolvent_apply(lam, y)


def project(model: Model, subspace: str, y):
    """Spectral projection on X. The stable one is I minus the other two."""
    if subspace not in SUBSPACES:
        raise ConfigurationError(f"unknown subspace {subspace!r}")
    y = np.asarray(y, dtype=float)
    parts = {}
    c = model.to_modal(y)
    for k in ("c", "u"):
        parts[k] = model.from_modal(np.where(model.mask(k), c, 0.0))
    parts["s"] = y - parts["c"] - parts["u"]
    return sum(parts[k] for k in subspace)


@dataclass
class TrichotomyReport:
    worst_ratio: float
    tol: float
    ratios: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0 + self.tol


def verify_trichotomy_bounds(model: Model, t_samples, tol: float = 1e-6) -> TrichotomyReport:
    """Compare ||T(t) Pi_k|| on X0 with K exp(rate t) at sampled t >= 0.

    Center and unstable parts are also sampled at -t.
    """
    const = model.constants
    ratios = {"c": [], "u": [], "s": []}
    for t in np.asarray(t_samples, dtype=float):
        for sub, tt, bound in (
            ("s", t, const.K * math.exp(-const.beta * t)),
            ("u", -t, const.K * math.exp(-const.alpha * t)),
            ("c", t, const.K * math.exp(const.gamma * t)),
            ("c", -t, const.K * math.exp(const.gamma * t)),
        ):
            mask = model.mask(sub)
            w = np.zeros(model.n_modes)
            w[mask] = np.exp(model.eigenvalues[mask] * tt)
            op = model.modal_operator(w)
            if isinstance(model, BoundaryModel):
                op = op[1:, 1:]
            ratios[sub].append(np.linalg.norm(op, 2) / bound)
    worst = max(max(v) for v in ratios.values() if v)
    return TrichotomyReport(float(worst), tol, {k: float(max(v)) for k, v in ratios.items() if v})


def _z_guard(z):
    if np.any(np.abs(z) > _Z_LIMIT):
        raise RangeError(f"|z| exceeds {_Z_LIMIT}")


@dataclass
class Nonlinearity:
    """Globally Lipschitz F: X0 -> X with optional Jacobian.

    ``F`` and ``DF`` act on arrays with the state on the last axis; ``DF``
    returns matrices on the last two axes. ``delta`` optionally evaluates
    F(x + p) - F(x) without cancellation.
    """

    F: callable
    L: float
    DF: callable = None
    k: int = 1
    delta: callable = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.F(x)

    def difference(self, x, p):
        if self.delta is not None:
            return self.delta(x, p)
        return self.F(x + p) - self.F(x)

    def describe(self):
        return {"name": self.name, "L": float(self.L), **self.params}


def transform_nonlinearity(nl: Nonlinearity, z, v):
    """G(omega, v) = exp(-z) F(exp(z) v); z broadcasts over leading axes."""
    z = np.asarray(z, dtype=float)
    _z_guard(z)
    e = np.exp(z)[..., None]
    return nl.F(e * v) / e


def _q(x):
    return x / np.hypot(1.0, x)


def _dq(x):
    return np.hypot(1.0, x) ** -3


_C0 = 1.0 / (2.0 * 0.6 ** 2.5)


def _sat(x):
    return _C0 * _q(x) ** 3


def _dsat(x):
    return 3.0 * _C0 * _q(x) ** 2 * _dq(x)


def _state_slice(model: Model):
    return slice(1, None) if isinstance(model, BoundaryModel) else slice(None)


def _coupling(n):
    if n == 1:
        return np.ones((1, 1))
    return (np.ones((n, n)) - np.eye(n)) / (n - 1)


def zero_nonlinearity(model: Model) -> Nonlinearity:
    dim = model.dim
    return Nonlinearity(
        F=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        L=0.0,
        DF=lambda x: np.zeros(np.shape(x) + (dim,)),
        k=10, delta=lambda x, p: np.zeros_like(np.asarray(x, dtype=float)),
        name="zero")


def linear_coupling(model: Model, L: float) -> Nonlinearity:
    """F(v) = L B v with B the normalized all-to-all coupling (norm 1)."""
    sl = _state_slice(model)
    n = model.dim - (1 if sl.start else 0)
    full = np.zeros((model.dim, model.dim))
    full[sl, sl] = L * _coupling(n)

    def F(x):
        return np.asarray(x, dtype=float) @ full.T

    return Nonlinearity(F=F, L=float(L), DF=lambda x: np.broadcast_to(full, np.shape(x) + (model.dim,)),
                        k=10, delta=lambda x, p: F(p), name="linear-coupling", params={})


def cubic_saturated(model: Model, L: float) -> Nonlinearity:
    """F(v) = L B s(v) with s a smooth saturated cube of slope at most one."""
    sl = _state_slice(model)
    n = model.dim - (1 if sl.start else 0)
    B = L * _coupling(n)

    def F(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., sl] = _sat(x[..., sl]) @ B.T
        return out

    def DF(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (model.dim,))
        out[..., sl, sl] = B * _dsat(x[..., sl])[..., None, :]
        return out

    return Nonlinearity(F=F, L=float(L), DF=DF, k=10, name="cubic-saturated")


def bilinear(model: Model, L: float) -> Nonlinearity:
    """F_i = (L/2) q(v_{i+1}) q(v_{i+2}) with cyclic indices and q(x) = x / sqrt(1 + x^2)."""
    sl = _state_slice(model)
    n = model.dim - (1 if sl.start else 0)
    if n < 3:
        raise ConfigurationError("bilinear nonlinearity needs at least 3 components")
    i1 = (np.arange(n) + 1) % n
    i2 = (np.arange(n) + 2) % n

    def F(x):
        x = np.asarray(x, dtype=float)
        y = x[..., sl]
        out = np.zeros_like(x)
        out[..., sl] = 0.5 * L * _q(y[..., i1]) * _q(y[..., i2])
        return out

    def DF(x):
        x = np.asarray(x, dtype=float)
        y = x[..., sl]
        jac = np.zeros(y.shape + (n,))
        rows = np.arange(n)
        jac[..., rows, i1] += 0.5 * L * _dq(y[..., i1]) * _q(y[..., i2])
        jac[..., rows, i2] += 0.5 * L * _q(y[..., i1]) * _dq(y[..., i2])
        out = np.zeros(x.shape + (model.dim,))
        out[..., sl, sl] = jac
        return out

    return Nonlinearity(F=F, L=float(L), DF=DF, k=10, name="bilinear")


def boundary_cubic(model: Model, L: float) -> Nonlinearity:
    """Boundary forcing (L s(phi_0), 0, ..., 0) for the boundary model."""
    if not isinstance(model, BoundaryModel):
        raise ConfigurationError("boundary-cubic requires a BoundaryModel")

    def F(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = L * _sat(x[..., 1])
        return out

    def DF(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (model.dim,))
        out[..., 0, 1] = L * _dsat(x[..., 1])
        return out

    return Nonlinearity(F=F, L=float(L), DF=DF, k=10, name="boundary-cubic")


NONLINEARITIES = {
    "zero": lambda model, L=0.0: zero_nonlinearity(model),
    "linear-coupling": linear_coupling,
    "cubic-saturated": cubic_saturated,
    "bilinear": bilinear,
    "boundary-cubic": boundary_cubic,
}


def make_nonlinearity(name: str, model: Model, L: float = 0.0) -> Nonlinearity:
    try:
        factory = NONLINEARITIES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown nonlinearity {name!r}; choose from {sorted(NONLINEARITIES)}") from None
    if L < 0:
        raise ConfigurationError("L must be non-negative")
    return factory(model, L)


def sample_lipschitz(nl: Nonlinearity, model: Model, n_pairs: int = 1000, scale: float = 3.0,
                     seed: int = 0) -> float:
    """Largest sampled difference quotient of F over random pairs in X0."""
    rng = np.random.default_rng(seed)
    x = model.from_modal(scale * rng.standard_normal((n_pairs, model.n_modes)))
    y = x + model.from_modal(scale * rng.standard_normal((n_pairs, model.n_modes))) * \
        rng.uniform(1e-3, 1.0, (n_pairs, 1))
    num = np.linalg.norm(nl.F(x) - nl.F(y), axis=-1)
    den = np.linalg.norm(x - y, axis=-1)
    return float(np.max(num / den))


def build_model(desc: dict) -> Model:
    """Construct a model from a plain dictionary description."""
    kind = desc.get("kind")
    try:
        if kind == "parabolic":
            return parabolic_preset(int(desc.get("n_modes", 16)), float(desc.get("epsilon_star", 1.0)),
                                    float(desc.get("gamma_star", 0.5)))
        if kind == "spectral":
            c = desc["constants"]
            const = TrichotomyConstants(float(c["K"]), float(c["alpha"]), float(c["beta"]),
                                        float(c["gamma"]), float(c.get("theta_hy", max(desc["eigenvalues"]))),
                                        float(c.get("M_hy", 1.0)))
            return SpectralModel(desc["eigenvalues"], desc["labels"], const)
        if kind == "boundary":
            g = desc.get("gamma")
            return BoundaryModel(int(desc.get("n_interior", 32)), float(desc.get("x_max", 1.0)),
                                 None if g is None else float(g))
    except KeyError as exc:
        raise ConfigurationError(f"model.{exc.args[0]} is required for kind {kind!r}") from None
    raise ConfigurationError(f"model.kind must be parabolic, spectral or boundary, got {kind!r}")
