from concurrent.futures import ThreadPoolExecutor
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpfoliation.errors import (AdmissionError, CapabilityError, CertificationMismatchError, ConfigurationError,
                                ConvergenceError, CoverageError, DomainError, RangeError)
from lpfoliation.lyapunov_perron import (FoliationLeaf, LPConfig, ManifoldGraph, WeightedPath, _picard, intersect,
                                         lp_operator_cs, lp_operator_cu, pullback_leaf, pullback_manifold,
                                         solve_cu, solve_leaf)
from lpfoliation.model import Nonlinearity, make_nonlinearity, parabolic_preset, project

from support import mild_config, mild_model, ou_on

ANCHOR = np.array([0.1, 0.2, -0.1])


@pytest.fixture(scope="module")
def setup():
    model = mild_model()
    nl = make_nonlinearity("cubic-saturated", model, 0.005)
    ou = ou_on(-40.0, 62.0, 0.01, seed=4)
    cfg = mild_config()
    return model, nl, ou, cfg, ManifoldGraph(model, nl, ou, cfg), FoliationLeaf(model, nl, ou, ANCHOR, cfg)


def test_horizon_rules():
    cfg = LPConfig()
    assert cfg.horizon(-2.0, 0.01) == pytest.approx(15.0)
    assert LPConfig(T_horizon=20.001).horizon(-2.0, 0.01) == pytest.approx(20.01)
    with pytest.raises(ConfigurationError):
        LPConfig(T_horizon=5.0).horizon(-2.0, 0.01)
    with pytest.raises(ConfigurationError):
        LPConfig(dt=0.02).horizon(-2.0, 0.01)


def test_manifold_through_origin_and_lipschitz(setup):
    model, nl, ou, cfg, man, _ = setup
    assert np.all(man.h(np.zeros(3)) == 0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = np.array([rng.uniform(-0.02, 0.02), rng.uniform(-1, 1), 0.0])
        b = np.array([rng.uniform(-0.02, 0.02), rng.uniform(-1, 1), 0.0])
        q = np.linalg.norm(man.h(a) - man.h(b)) / np.linalg.norm(a - b)
        assert q <= man.K_u
    assert np.allclose(project(model, "cu", man.h([0.0, 0.7, 0.0])), 0)


def test_fixed_point_is_fixed(setup):
    model, nl, ou, cfg, man, leaf = setup
    xi = np.array([0.01, 0.5, 0.0])
    sol = man.solve(xi)
    path, h = sol
    again = lp_operator_cu(model, nl, ou, xi, path, cfg)
    assert path.norm(again.values - path.values) <= 10 * cfg.tol * (1 + path.norm())
    np.testing.assert_array_equal(h, path.values[-1] * model.mask("s"))
    iota = np.array([0.0, 0.3, 0.1])
    lsol = leaf.solve(iota)
    again = lp_operator_cs(model, nl, ou, iota - leaf.anchor_cs, leaf.base, lsol.path, cfg)
    assert lsol.path.norm(again.values - lsol.path.values) <= 10 * cfg.tol * (1 + lsol.path.norm())


def test_wrappers_match_classes(setup):
    model, nl, ou, cfg, man, leaf = setup
    xi = np.array([0.0, -0.4, 0.0])
    np.testing.assert_array_equal(solve_cu(model, nl, ou, xi, cfg).h, man.h(xi))
    iota = np.array([0.0, 0.1, 0.0])
    np.testing.assert_array_equal(solve_leaf(model, nl, ou, ANCHOR, iota, cfg).l, leaf.l(iota))


def test_anchor_lies_on_its_leaf(setup):
    _, _, _, _, _, leaf = setup
    np.testing.assert_allclose(leaf.point(leaf.anchor_cs), ANCHOR, atol=1e-12)


def test_input_validation(setup):
    model, nl, ou, cfg, man, leaf = setup
    with pytest.raises(DomainError):
        man.h([0.0, 0.0, 1.0])
    with pytest.raises(DomainError):
        leaf.l([1.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        man.h([0.0, 0.0])


def test_gate_rejects_large_L():
    model = mild_model()
    ou = ou_on(-40.0, 62.0, 0.01, seed=4)
    with pytest.raises(AdmissionError):
        ManifoldGraph(model, make_nonlinearity("cubic-saturated", model, 5.0), ou, mild_config())
    with pytest.raises(AdmissionError):
        FoliationLeaf(model, make_nonlinearity("cubic-saturated", model, 0.05), ou, ANCHOR, mild_config())


def test_short_noise_window_rejected():
    model = mild_model()
    nl = make_nonlinearity("cubic-saturated", model, 0.005)
    with pytest.raises(CoverageError):
        ManifoldGraph(model, nl, ou_on(-10.0, 1.0, 0.01, seed=0), mild_config())


def test_derivative_needs_jacobian(setup):
    model, _, ou, cfg, _, _ = setup
    nl = Nonlinearity(lambda x: 0.001 * np.sin(x), 0.001)
    with pytest.raises(CapabilityError):
        ManifoldGraph(model, nl, ou, cfg).derivative(np.zeros(3))


def test_concurrent_evaluation_is_deterministic(setup):
    model, nl, ou, cfg, _, _ = setup
    xis = [np.array([0.0, c, 0.0]) for c in np.linspace(-1, 1, 8)]
    serial = [ManifoldGraph(model, nl, ou, cfg).h(x) for x in xis]
    shared = ManifoldGraph(model, nl, ou, cfg)
    with ThreadPoolExecutor(4) as pool:
        par = list(pool.map(shared.h, xis + xis))
    for a, b in zip(serial + serial, par):
        np.testing.assert_array_equal(a, b)


@settings(max_examples=10)
@given(c=st.floats(-1, 1), u=st.floats(-0.02, 0.02))
def test_intersection_lies_on_both(setup, c, u):
    model, nl, ou, cfg, man, leaf = setup
    res = intersect(man, leaf, start=np.array([0.0, 0.0, u]))
    p = res.point
    np.testing.assert_allclose(project(model, "s", p), man.h(project(model, "cu", p)), atol=1e-9)
    np.testing.assert_allclose(project(model, "u", p), leaf.l(project(model, "cs", p)), atol=1e-9)
    assert abs(project(model, "c", p)[1] - cfg.center) < 1e-12


def test_intersection_requires_small_product(setup):
    model, nl, ou, cfg, man, leaf = setup
    fake = SimpleNamespace(model=model, ou=ou, cfg=cfg, K_u=1e3)
    with pytest.raises(AdmissionError):
        intersect(fake, leaf)


def test_picard_certification_and_divergence():
    op = lambda v: 0.5 * v + 1.0
    norm = lambda v: float(np.abs(v).max())
    v, stats = _picard(op, np.zeros(1), norm, 1e-12, 200)
    assert v[0] == pytest.approx(2.0) and stats.max_ratio == pytest.approx(0.5)
    with pytest.raises(CertificationMismatchError):
        _picard(op, np.zeros(1), norm, 1e-12, 200, certified=0.1)
    with pytest.raises(ConvergenceError):
        _picard(lambda v: 2 * v + 1, np.zeros(1), norm, 1e-12, 50)


def test_pullbacks():
    np.testing.assert_allclose(pullback_manifold([1.0, 2.0], np.log(3)), [3.0, 6.0])
    np.testing.assert_allclose(pullback_leaf([1.0], 0.0), [1.0])
    with pytest.raises(RangeError):
        pullback_leaf([1.0], 701.0)


def test_original_frame_graph(setup):
    model, nl, ou, cfg, man, leaf = setup
    z0 = ou.z_at(0.0)
    xi = np.array([0.0, 0.4, 0.0])
    np.testing.assert_allclose(man.h_original(xi), np.exp(z0) * man.h(np.exp(-z0) * xi))


def test_weighted_path_norm():
    p = WeightedPath("past", -1.0, np.array([-1.0, 0.0]), np.array([[1.0, 0.0], [0.0, 2.0]]), np.zeros(2))
    assert p.norm() == pytest.approx(2.0)
    np.testing.assert_array_equal(p.at_zero(), [0.0, 2.0])


def test_parabolic_manifold_tangent_at_origin():
    model = parabolic_preset(3)
    nl = make_nonlinearity("cubic-saturated", model, 0.5)
    man = ManifoldGraph(model, nl, ou_on(-16.0, 2.0, 0.01, seed=0))
    d = man.derivative(np.zeros(3)).matrix
    # cubic-saturated has zero Jacobian at 0, so the graph is tangent to X_cu
    assert np.abs(d).max() < 1e-12
