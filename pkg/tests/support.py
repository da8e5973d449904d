"""Shared builders for the test suite."""
import json
from pathlib import Path

import numpy as np

from lpfoliation.gap import RateParams
from lpfoliation.lyapunov_perron import LPConfig
from lpfoliation.model import SpectralModel, TrichotomyConstants
from lpfoliation.noise import OUProcess, TimeGrid, default_tail_cut, ou_stationary, sample_brownian

DATA = Path(__file__).resolve().parent / "data"


def frozen():
    return json.loads((DATA / "frozen_values.json").read_text())


def ou_on(t_min, t_max, dt, seed, mu=1.0):
    """Stationary OU process whose output window is [t_min, t_max]."""
    tail = default_tail_cut(mu, dt)
    ntail = int(round(tail / dt))
    path = sample_brownian(TimeGrid(t_min - ntail * dt, t_max, dt), seed)
    return ou_stationary(path, mu, ntail * dt)


def frozen_ou(t_min, t_max, dt, value):
    return OUProcess.constant(TimeGrid(t_min, t_max, dt), value)


def mild_model():
    const = TrichotomyConstants(1.0, 0.8, 1.5, 0.1, 0.8, 1.0)
    return SpectralModel([0.8, 0.0, -1.5], ["u", "c", "s"], const, name="mild")


def mild_config(**kw):
    rates = RateParams(eta_cu=-0.8, zeta=-1.2, eta_cs=0.5, chi=0.0, sigma=0.15, k=1)
    return LPConfig(rates=rates, **kw)


ACCEPTANCE_LINES = []


def record(number, title, passed, detail):
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed
