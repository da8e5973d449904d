import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lpfoliation import kernels
from lpfoliation._kernels_py import exp_filter as exp_filter_py

try:
    from lpfoliation._kernels import exp_filter as exp_filter_c
except ImportError:  # extension not built
    exp_filter_c = None

needs_ext = pytest.mark.skipif(exp_filter_c is None, reason="compiled extension not built")

finite = st.floats(-5, 5, allow_nan=False)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_constant_forcing_matches_closed_form():
    a, dt, n = -2.0, 0.01, 201
    decay = np.array([np.exp(a * dt)])
    w = (decay - 1) / a
    h = np.ones((n, 1))
    y = exp_filter_py(decay, w / 2, w / 2, h)
    t = dt * np.arange(n)
    np.testing.assert_allclose(y[:, 0], np.expm1(a * t) / a, rtol=1e-12)


def test_initial_value_is_used():
    y = exp_filter_py(np.array([0.5]), np.zeros(1), np.zeros(1), np.zeros((4, 1)), y0=[8.0])
    np.testing.assert_allclose(y[:, 0], [8, 4, 2, 1])


@needs_ext
@given(n=st.integers(1, 60), m=st.integers(1, 5), data=st.data())
def test_compiled_matches_reference(n, m, data):
    vec = arrays(float, m, elements=finite)
    decay, wp, wn = data.draw(vec), data.draw(vec), data.draw(vec)
    h = data.draw(arrays(float, (n, m), elements=finite))
    y0 = data.draw(vec)
    ref = exp_filter_py(decay, wp, wn, h, y0)
    got = exp_filter_c(decay, wp, wn, h, y0)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


@needs_ext
def test_compiled_writes_into_out():
    h = np.random.default_rng(0).standard_normal((10, 3))
    out = np.empty_like(h)
    res = exp_filter_c(np.full(3, 0.9), np.full(3, 0.1), np.full(3, 0.1), h, out=out)
    assert np.shares_memory(res, out)
    np.testing.assert_allclose(out, exp_filter_py(np.full(3, 0.9), np.full(3, 0.1), np.full(3, 0.1), h))


def test_pure_python_fallback_selectable():
    import os
    import subprocess
    import sys
    env = dict(os.environ, LPFOL_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "import lpfoliation; print(lpfoliation.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert res.stdout.strip() == "python"
