"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``LPFOL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
exp_filter = _kernels_py.exp_filter

if not os.environ.get("LPFOL_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        exp_filter = _compiled.exp_filter
        BACKEND = "cython"
