import numpy as np
import pytest

from ecg2d.fronts import MS0DFront, SmoothedHeaviside, build_vtilde, \
    build_vtilde_deriv, front_from_spec


def test_heaviside_endpoint_values():
    sh = SmoothedHeaviside(2.5)
    assert abs(sh(-2.5)) <= 1e-15
    assert abs(sh(2.5) - 0.94) <= 1e-15
    assert sh(-3.0) == 0.0
    assert sh(3.0) == 0.94


def test_heaviside_midpoint_and_slope():
    sh = SmoothedHeaviside(2.0)
    assert abs(sh(0.0) - 0.47) <= 1e-15
    assert abs(sh.derivative(0.0) - 0.705 / 2.0) <= 1e-15


def test_heaviside_c1_at_edges():
    for eps in (0.5, 2.5, 5.0):
        sh = SmoothedHeaviside(eps)
        for s in (-eps, eps):
            inner = sh.derivative(s)          # blended branch
            outer = 0.0
            assert abs(inner - outer) <= 1e-12


def test_heaviside_monotone_on_ramp():
    sh = SmoothedHeaviside(1.5)
    s = np.linspace(-1.5, 1.5, 301)
    assert np.all(sh.derivative(s) >= 0)
    vals = sh(s)
    assert np.all(np.diff(vals) >= -1e-15)


def test_heaviside_requires_positive_epsilon():
    with pytest.raises(ValueError):
        SmoothedHeaviside(0.0)
    with pytest.raises(ValueError):
        front_from_spec("heaviside", epsilon=-1.0)


def test_ms0d_centering_convention():
    front = MS0DFront.from_params()
    assert abs(front(0.0) - 0.5) <= 1e-8


def test_ms0d_far_past_is_resting():
    front = MS0DFront.from_params()
    assert front(-1e6) == pytest.approx(0.0, abs=1e-12)
    assert front.derivative(-1e6) == 0.0


def test_ms0d_plateau_shortly_after_crossing():
    front = MS0DFront.from_params()
    assert 0.90 <= front(10.0) <= 0.95


def test_build_vtilde_plateaus():
    sh = SmoothedHeaviside(1.0)
    psi = np.array([3.0, 4.0, 5.0])
    assert np.all(build_vtilde(sh, psi, 0.0) == 0.0)
    np.testing.assert_allclose(build_vtilde(sh, psi, 100.0), 0.94, atol=1e-15)


def test_build_vtilde_uniform_psi_is_constant():
    sh = SmoothedHeaviside(2.0)
    psi = np.full(7, 4.2)
    field = build_vtilde(sh, psi, 5.0)
    np.testing.assert_array_equal(field, np.full(7, sh(5.0 - 4.2)))


def test_build_vtilde_unactivated_vertices_are_zero():
    sh = SmoothedHeaviside(2.0)
    psi = np.array([3.0, np.nan, 4.0])
    field = build_vtilde(sh, psi, 50.0)
    assert field[1] == 0.0
    assert field[0] == 0.94
    d = build_vtilde_deriv(sh, psi, 3.5)
    assert d[1] == 0.0 and d[0] > 0


def test_front_from_spec_dispatch():
    sh = front_from_spec("heaviside", epsilon=2.5)
    assert isinstance(sh, SmoothedHeaviside)
    with pytest.raises(ValueError, match="unknown front"):
        front_from_spec("square")
