import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from lpfoliation.errors import ConfigurationError, DivergenceError, DomainError, RangeError
from lpfoliation.flow import (Trajectory, integrate_mild, integrate_original, inverse_transform, phi_flow,
                              transform)
from lpfoliation.model import BoundaryModel, make_nonlinearity, parabolic_preset, zero_nonlinearity

from support import frozen_ou, ou_on

OU = ou_on(-3.0, 3.0, 0.01, seed=8)
MODEL = parabolic_preset(3)


@given(u=st.lists(st.floats(-5, 5), min_size=3, max_size=3), z=st.floats(-20, 20))
def test_transform_roundtrip(u, z):
    np.testing.assert_allclose(inverse_transform(transform(u, z), z), u, rtol=1e-12, atol=1e-300)


def test_transform_range_guard():
    with pytest.raises(RangeError):
        transform([1.0], 701.0)


@given(s=st.integers(-200, 200), r=st.integers(-200, 200), t=st.integers(-200, 200))
def test_center_unstable_flow_cocycle(s, r, t):
    x = np.array([0.3, -0.2, 0.0])
    s, r, t = s * 0.01, r * 0.01, t * 0.01
    two = phi_flow(MODEL, OU, "cu", t, r, phi_flow(MODEL, OU, "cu", r, s, x))
    np.testing.assert_allclose(two, phi_flow(MODEL, OU, "cu", t, s, x), rtol=1e-10)


def test_stable_flow_forward_only():
    with pytest.raises(DomainError):
        phi_flow(MODEL, OU, "s", 0.0, 1.0, np.zeros(3))


def test_linear_integration_is_exact():
    x0 = np.array([0.1, 0.5, -0.3])
    traj = integrate_mild(MODEL, zero_nonlinearity(MODEL), OU, x0, 2.0)
    for t in (0.5, 1.0, 2.0):
        np.testing.assert_allclose(traj.at(t), phi_flow(MODEL, OU, "cus"[:2], t, 0.0, x0)
                                   + phi_flow(MODEL, OU, "s", t, 0.0, x0), rtol=1e-10)


def test_nonlinear_against_ode_solver():
    nl = make_nonlinearity("cubic-saturated", MODEL, 0.5)
    x0 = np.array([0.01, 0.4, 0.2])
    z = 0.2
    a = MODEL.eigenvalues

    def rhs(t, v):
        return (a + z) * v + nl.F(np.exp(z) * v) / np.exp(z)

    ref = solve_ivp(rhs, (0, 1), x0, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    errs = []
    for dt in (0.01, 0.005):
        traj = integrate_mild(MODEL, nl, frozen_ou(-1.0, 1.0, dt, z), x0, 1.0)
        errs.append(np.linalg.norm(traj.values[-1] - ref) / np.linalg.norm(ref))
    # first order in dt
    assert errs[0] < 1e-2 and 0.4 < errs[1] / errs[0] < 0.6


def test_integrator_errors():
    nl = zero_nonlinearity(MODEL)
    with pytest.raises(ConfigurationError):
        integrate_mild(MODEL, nl, OU, np.zeros(3), -1.0)
    with pytest.raises(DivergenceError):
        integrate_mild(MODEL, nl, OU, np.array([1.0, 0.0, 0.0]), 3.0, max_norm=10.0)
    b = BoundaryModel(8)
    bad = np.zeros(b.dim)
    bad[0] = 1.0
    with pytest.raises(DomainError):
        integrate_mild(b, zero_nonlinearity(b), OU, bad, 1.0)


def test_original_frame_is_conjugate():
    nl = make_nonlinearity("bilinear", MODEL, 0.2)
    u0 = np.array([0.05, 0.3, -0.1])
    u = integrate_original(MODEL, nl, OU, u0, 1.0)
    v = integrate_mild(MODEL, nl, OU, transform(u0, OU.z_at(0.0)), 1.0)
    assert u.frame == "u"
    np.testing.assert_allclose(u.at(1.0), v.at(1.0) * np.exp(OU.z_at(1.0)))


def test_trajectory_csv():
    traj = Trajectory(np.array([0.0, 0.5]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    fh = io.StringIO()
    traj.write_csv(fh)
    assert fh.getvalue().splitlines() == ["t,x0,x1,frame", "0.0,1.0,2.0,v", "0.5,3.0,4.0,v"]
