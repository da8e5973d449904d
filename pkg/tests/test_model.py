import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lpfoliation.errors import ConfigurationError, DomainError, RangeError, SpectrumProximityError
from lpfoliation.model import (BoundaryModel, SpectralModel, TrichotomyConstants, build_model,
                               make_nonlinearity, parabolic_preset, project, resolvent_apply,
                               sample_lipschitz, semigroup_apply, transform_nonlinearity,
                               verify_trichotomy_bounds, yosida_apply)

from support import frozen

REF = frozen()
vec = lambda n: arrays(float, n, elements=st.floats(-10, 10, allow_nan=False))


@pytest.fixture(scope="module")
def boundary():
    return BoundaryModel(24)


def test_constants_validation():
    with pytest.raises(ConfigurationError):
        TrichotomyConstants(1.0, 0.1, 1.0, 0.5, 1.0)
    with pytest.raises(ConfigurationError):
        TrichotomyConstants(0.5, 1.0, 1.0, 0.1, 1.0)


def test_labels_checked_against_rates():
    const = TrichotomyConstants(1.0, 1.0, 1.0, 0.1, 1.0)
    with pytest.raises(ConfigurationError):
        SpectralModel([1.0, 0.5, -1.0], ["u", "c", "s"], const)
    with pytest.raises(ConfigurationError):
        SpectralModel([1.0, 0.0], ["u", "x"], const)


def test_from_eigenvalues_labels():
    m = SpectralModel.from_eigenvalues([2.0, 0.05, -3.0, -4.0], gamma=0.1)
    assert m.labels == ("u", "c", "s", "s")
    assert m.constants.alpha == 2.0 and m.constants.beta == 3.0


def test_parabolic_preset():
    m = parabolic_preset(3)
    np.testing.assert_allclose(m.eigenvalues, REF["parabolic_eigenvalues_3"], rtol=1e-15, atol=1e-15)
    assert m.labels == ("u", "c", "s")
    assert build_model(m.describe()).eigenvalues.tolist() == m.eigenvalues.tolist()
    with pytest.raises(ConfigurationError):
        parabolic_preset(1)


def test_semigroup_factor():
    m = parabolic_preset(3)
    x = np.array([0.0, 0.0, 1.0])
    assert semigroup_apply(m, "s", 0.1, x)[2] == pytest.approx(REF["stable_factor_k2_t01"], rel=1e-13)
    with pytest.raises(DomainError):
        semigroup_apply(m, "s", -0.1, x)


def test_resolvent_and_yosida_values():
    const = TrichotomyConstants(1.0, 0.5, 1.0, 0.1, 0.5)
    m = SpectralModel([0.5, 0.0, -1.0], ["u", "c", "s"], const)
    y = np.array([0.0, 0.0, 1.0])
    assert resolvent_apply(m, 10.0, y)[2] == pytest.approx(REF["resolvent_a_minus1_lambda10"], rel=1e-14)
    assert yosida_apply(m, 10.0, y)[2] == pytest.approx(REF["yosida_a_minus1_lambda10"], rel=1e-14)
    with pytest.raises(SpectrumProximityError):
        resolvent_apply(m, 0.4, y)


@given(t=st.floats(-2, 2), s=st.floats(-2, 2), x=vec(4))
def test_semigroup_property_cu(t, s, x):
    m = parabolic_preset(4)
    lhs = semigroup_apply(m, "cu", t, semigroup_apply(m, "cu", s, x))
    np.testing.assert_allclose(lhs, semigroup_apply(m, "cu", t + s, x), rtol=1e-10, atol=1e-10)


@given(t=st.floats(0, 2), s=st.floats(0, 2), x=vec(4))
def test_semigroup_property_s(t, s, x):
    m = parabolic_preset(4)
    lhs = semigroup_apply(m, "s", t, semigroup_apply(m, "s", s, x))
    np.testing.assert_allclose(lhs, semigroup_apply(m, "s", t + s, x), rtol=1e-10, atol=1e-300)


@given(y=vec(25))
def test_projections_decompose(y):
    m = BoundaryModel(24)
    parts = [project(m, k, y) for k in ("c", "u", "s")]
    np.testing.assert_allclose(sum(parts), y, atol=1e-9)
    for k, p in zip(("c", "u", "s"), parts):
        np.testing.assert_allclose(project(m, k, p), p, atol=1e-8 * (1 + np.abs(y).max()))


def test_boundary_spectrum(boundary):
    e = boundary.eigenvalues
    assert e[1] == 0.0 and e[0] > 0 > e[2]
    assert np.all(np.diff(e) < 0)
    assert boundary.constants.K >= 1


@given(c=vec(24))
def test_boundary_modal_roundtrip(c):
    m = BoundaryModel(24)
    x = m.from_modal(c)
    assert m.in_X0(x)
    np.testing.assert_allclose(m.to_modal(x), c, atol=1e-9 * (1 + np.abs(c).max()))


def test_boundary_resolvent_solves_stencil(boundary):
    rng = np.random.default_rng(0)
    y = rng.standard_normal(boundary.dim)
    lam = 2 * boundary.constants.theta_hy + 5
    x = resolvent_apply(boundary, lam, y)
    assert boundary.resolvent_residual(lam, y, x) < 1e-8 * (1 + np.abs(y).max()) * lam
    # the modal form agrees with the banded solve
    modal = boundary.from_modal(boundary.to_modal(y) / (lam - boundary.eigenvalues))
    np.testing.assert_allclose(x, modal, atol=1e-9)


def test_boundary_boundary_forcing_enters_through_lift(boundary):
    y = np.zeros(boundary.dim)
    y[0] = 1.0
    assert np.abs(boundary.to_modal(y)).max() > 0
    assert not boundary.in_X0(y)
    with pytest.raises(DomainError):
        semigroup_apply(boundary, "c", 1.0, y)


@pytest.mark.parametrize("model", [parabolic_preset(6), BoundaryModel(16)])
def test_trichotomy_bounds(model):
    assert verify_trichotomy_bounds(model, np.linspace(0, 3, 13)).passed


@pytest.mark.parametrize("name", ["linear-coupling", "cubic-saturated", "bilinear"])
def test_nonlinearity_lipschitz_and_jacobian(name):
    m = parabolic_preset(3)
    nl = make_nonlinearity(name, m, 0.2)
    assert np.allclose(nl.F(np.zeros(3)), 0)
    assert sample_lipschitz(nl, m, 2000) <= 0.2 * (1 + 1e-9)
    x = np.array([0.3, -0.7, 0.2])
    eps = 1e-6
    fd = np.array([(nl.F(x + eps * e) - nl.F(x - eps * e)) / (2 * eps) for e in np.eye(3)]).T
    np.testing.assert_allclose(nl.DF(x), fd, atol=1e-8)
    p = np.array([1e-9, 0.0, -2e-9])
    np.testing.assert_allclose(nl.difference(x, p), nl.F(x + p) - nl.F(x), atol=1e-15)


def test_boundary_cubic_lipschitz(boundary):
    nl = make_nonlinearity("boundary-cubic", boundary, 0.3)
    assert sample_lipschitz(nl, boundary, 500) <= 0.3 * (1 + 1e-9)


def test_make_nonlinearity_errors():
    m = parabolic_preset(3)
    with pytest.raises(ConfigurationError):
        make_nonlinearity("nope", m, 0.1)
    with pytest.raises(ConfigurationError):
        make_nonlinearity("bilinear", m, -1.0)


def test_transform_nonlinearity():
    m = parabolic_preset(3)
    nl = make_nonlinearity("zero", m)
    assert np.all(transform_nonlinearity(nl, 0.5, np.ones(3)) == 0)
    sq = type(nl)(lambda x: x * x, 1.0)
    got = transform_nonlinearity(sq, -np.log(2), np.ones(3))
    np.testing.assert_allclose(got, REF["transform_square_ln2"] / 4 * np.ones(3))
    with pytest.raises(RangeError):
        transform_nonlinearity(nl, 800.0, np.ones(3))


def test_build_model_errors():
    with pytest.raises(ConfigurationError):
        build_model({"kind": "wave"})
    with pytest.raises(ConfigurationError):
        build_model({"kind": "spectral", "eigenvalues": [1.0]})
