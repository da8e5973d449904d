"""Lyapunov-Perron solvers for random center-unstable manifolds and center-stable foliations."""
from .kernels import BACKEND

__version__ = "0.1.0"
