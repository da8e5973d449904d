"""Spectral-gap inequalities and the Lipschitz constants derived from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, DomainError
from .model import TrichotomyConstants
from .semigroup import ConvConstants, scan_c_kappa


@dataclass(frozen=True)
class RateParams:
    eta_cu: float = -2.0
    zeta: float = -5.0
    eta_cs: float = 1.0
    chi: float = -1.0
    sigma: float = 0.1
    nu: float = 0.0
    k: int = 1
    eta_c: float | None = None

    def as_dict(self):
        return {k: getattr(self, k) for k in ("eta_cu", "zeta", "eta_cs", "chi", "sigma", "nu", "k", "eta_c")}


@dataclass
class GapReport:
    name: str
    lhs: float
    threshold: float
    constants: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.threshold - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin > 0

    def as_dict(self):
        return {"name": self.name, "lhs": self.lhs, "threshold": self.threshold,
                "margin": self.margin, "pass": self.passed, "constants": dict(self.constants)}


def stable_delta(beta: float):
    """delta(tau) = (1 - e^{-beta tau}) / beta for the stable part."""
    return lambda tau: -math.expm1(-beta * tau) / beta


class ConstantProvider:
    """C_kappa for the stable part: theta = -beta, M = K, scanned (eps, tau).

    A fixed value can be supplied instead, in which case it is returned for
    every kappa.
    """

    def __init__(self, constants: TrichotomyConstants, fixed: float | None = None, taus=None):
        self.constants = constants
        self.fixed = fixed
        self.taus = taus
        self._cache = {}

    def details(self, kappa: float) -> ConvConstants:
        if self.fixed is not None:
            return ConvConstants(float("nan"), float("nan"), kappa, float(self.fixed))
        if kappa not in self._cache:
            beta = self.constants.beta
            self._cache[kappa] = scan_c_kappa(kappa, -beta, self.constants.K, stable_delta(beta), self.taus)
        return self._cache[kappa]

    def __call__(self, kappa: float) -> float:
        return self.details(kappa).c_kappa


def _require(cond: bool, msg: str):
    if not cond:
        raise DomainError(msg)


def check_cu(K, L, C_zeta, gamma, alpha, eta_cu, beta=None, zeta=None) -> GapReport:
    """KL (C_zeta - 1/(gamma + eta) - 1/(eta - alpha)) < 1 and the bound K_u."""
    _require(eta_cu < -gamma, f"need eta_cu < -gamma, got {eta_cu} >= {-gamma}")
    if beta is not None:
        _require(-beta < eta_cu, f"need -beta < eta_cu, got {eta_cu} <= {-beta}")
        if zeta is not None:
            _require(-beta < zeta < eta_cu, "need -beta < zeta < eta_cu")
    lhs = K * L * (C_zeta - 1.0 / (gamma + eta_cu) - 1.0 / (eta_cu - alpha))
    ku = K * L * C_zeta / (1.0 - lhs) if lhs < 1 else math.inf
    return GapReport("cu", lhs, 1.0, {"K_u": ku, "contraction": lhs, "C_zeta": C_zeta})


@dataclass
class GapProblem:
    """Everything the gap checks need: constants, L, rates and a C provider."""

    constants: TrichotomyConstants
    L: float
    rates: RateParams
    C: ConstantProvider = None
    shift_mode: str = "as-written"

    def __post_init__(self):
        if self.C is None:
            self.C = ConstantProvider(self.constants)
        if self.shift_mode not in ("as-written", "corrected"):
            raise ConfigurationError("shift_mode must be 'as-written' or 'corrected'")
        if self.L < 0:
            raise ConfigurationError("L must be non-negative")


def check_cu_problem(p: GapProblem) -> GapReport:
    c, r = p.constants, p.rates
    return check_cu(c.K, p.L, p.C(r.zeta), c.gamma, c.alpha, r.eta_cu, c.beta, r.zeta)


def check_cu_smooth(p: GapProblem, k: int | None = None) -> list:
    """Order-k conditions with C at zeta + (i - 1) eta_cu, i = 1..k."""
    c, r = p.constants, p.rates
    k = r.k if k is None else int(k)
    _require(k >= 1, "k must be at least 1")
    eta = r.eta_cu
    _require(-c.beta < r.zeta < k * eta < -c.gamma,
             f"need -beta < zeta < k eta_cu < -gamma, got zeta={r.zeta}, k eta_cu={k * eta}")
    out = []
    for i in range(1, k + 1):
        kap = r.zeta + (i - 1) * eta
        Ci = p.C(kap)
        lhs = c.K * p.L * (Ci - 1.0 / (c.gamma + i * eta) - 1.0 / (i * eta - c.alpha))
        out.append(GapReport(f"cu_smooth_{i}", lhs, 1.0, {"C": Ci, "kappa": kap}))
    return out


def check_c(p: GapProblem) -> GapReport:
    """Center-manifold condition and its Lipschitz bound."""
    c, r = p.constants, p.rates
    eta = r.eta_c if r.eta_c is not None else r.eta_cs
    _require(c.gamma < eta < min(c.alpha, c.beta), "need gamma < eta < min(alpha, beta)")
    _require(-c.beta < r.zeta < -eta, "need -beta < zeta < -eta")
    Cz = p.C(r.zeta)
    lhs = c.K * p.L * (Cz + 1.0 / (eta - c.gamma) + 1.0 / (c.alpha - eta))
    if lhs < 1:
        lip = c.K * (c.K * p.L + Cz * p.L * (c.alpha - eta)) / ((c.alpha - eta) * (1.0 - lhs))
    else:
        lip = math.inf
    return GapReport("c", lhs, 1.0, {"lip_hc": lip, "C_zeta": Cz, "eta": eta})


def check_cs_foliation(p: GapProblem, K_u: float | None = None) -> list:
    """Main foliation condition, the two sigma-shifted conditions and K_s.

    When ``K_u`` is given a product report K_u K_s < 1 is appended.
    """
    c, r = p.constants, p.rates
    eta, chi, sig = r.eta_cs, r.chi, r.sigma
    _require(c.gamma < eta < min(c.alpha, c.beta), "need gamma < eta_cs < min(alpha, beta)")
    _require(-c.beta < chi < eta, "need -beta < chi < eta_cs")
    _require(sig >= 0, "sigma must be non-negative")
    KL = c.K * p.L
    Cx = p.C(chi)
    lhs = KL * (Cx + 1.0 / (eta - c.gamma) + 1.0 / (c.alpha - eta))
    ks = c.K**2 * p.L / ((c.alpha - eta) * (1.0 - lhs)) if lhs < 1 else math.inf
    reports = [GapReport("cs_main", lhs, 1.0, {"K_s": ks, "contraction": lhs, "C_chi": Cx})]
    for i in (1, 2):
        d1 = eta - i * sig - c.gamma
        if p.shift_mode == "as-written":
            d2 = c.alpha - i * eta + i * sig
        else:
            d2 = c.alpha - eta + i * sig
        _require(d1 > 0 and d2 > 0,
                 f"shifted condition {i}: denominators must be positive, got {d1}, {d2}")
        Ci = p.C(chi + i * sig)
        li = KL * (Ci + 1.0 / d1 + 1.0 / d2)
        reports.append(GapReport(f"cs_shift_{i}", li, 1.0 / 6.0, {"C": Ci, "mode": p.shift_mode}))
    if K_u is not None:
        reports.append(GapReport("KuKs", K_u * ks, 1.0, {"K_u": K_u, "K_s": ks}))
    return reports


def check_cs_smooth(p: GapProblem, k: int | None = None) -> list:
    """Order-k foliation conditions with C at chi + (i - 1) eta_cs."""
    c, r = p.constants, p.rates
    k = r.k if k is None else int(k)
    _require(k >= 1, "k must be at least 1")
    eta = r.eta_cs
    _require(c.gamma < k * eta < min(c.alpha, c.beta), "need gamma < k eta_cs < min(alpha, beta)")
    _require(-c.beta < r.chi < k * eta, "need -beta < chi < k eta_cs")
    out = []
    for i in range(1, k + 1):
        kap = r.chi + (i - 1) * eta
        Ci = p.C(kap)
        lhs = c.K * p.L * (Ci + 1.0 / (i * eta - c.gamma) + 1.0 / (c.alpha - i * eta))
        out.append(GapReport(f"cs_smooth_{i}", lhs, 1.0, {"C": Ci, "kappa": kap}))
    return out


def check_all(p: GapProblem, k: int | None = None) -> list:
    """Every condition for the given problem, in a fixed order."""
    cu = check_cu_problem(p)
    reports = [cu]
    reports += check_cu_smooth(p, k)
    reports.append(check_c(p))
    reports += check_cs_foliation(p, K_u=cu.constants["K_u"])
    reports += check_cs_smooth(p, k)
    return reports
