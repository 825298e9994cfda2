import numpy as np
import pytest

from ecg2d.activation import compute_activation, mean_front_speed
from ecg2d.fronts import SmoothedHeaviside
from ecg2d.mesh import generate_disk_in_disk, Region


def synthetic_front_series(offsets, dt=0.05, t_end=12.0, eps=2.0):
    shape = SmoothedHeaviside(eps)
    times = dt * np.arange(int(t_end / dt) + 1)
    v = np.stack([shape(times - d) for d in offsets], axis=1)
    return times, v


def test_constant_offset_from_analytic_front():
    rng = np.random.default_rng(2)
    offsets = 5.0 + rng.uniform(0.0, 1.0, size=40)
    times, v = synthetic_front_series(offsets)
    act = compute_activation(times, v)
    lag = act.psi - offsets
    assert np.isfinite(lag).all()
    assert lag.max() - lag.min() < 1e-6


def test_constant_zero_gives_no_propagation_error():
    times = np.linspace(0, 10, 101)
    v = np.zeros((101, 5))
    with pytest.raises(ValueError, match="no propagation"):
        compute_activation(times, v)


def test_linear_ramp_crosses_at_half():
    T = 8.0
    times = np.linspace(0, T, 81)
    v = np.tile((times / T)[:, None], (1, 3))
    act = compute_activation(times, v)
    np.testing.assert_allclose(act.psi, 0.5 * T, atol=1e-9)


def test_reruns_are_bit_identical():
    rng = np.random.default_rng(4)
    offsets = 4.0 + rng.uniform(0.0, 2.0, size=10)
    times, v = synthetic_front_series(offsets)
    a = compute_activation(times, v)
    b = compute_activation(times, v)
    np.testing.assert_array_equal(a.psi, b.psi)


def test_time_shift_equivariance():
    offsets = np.array([4.0, 4.7, 5.3])
    times, v = synthetic_front_series(offsets)
    a = compute_activation(times, v)
    b = compute_activation(times + 3.0, v)
    np.testing.assert_allclose(b.psi, a.psi + 3.0, atol=1e-9)


def test_never_crossing_vertices_are_nan():
    offsets = np.array([4.0, 5.0])
    times, v = synthetic_front_series(offsets)
    v = np.column_stack([v, np.full(len(times), 0.2)])
    act = compute_activation(times, v)
    assert np.isfinite(act.psi[:2]).all()
    assert np.isnan(act.psi[2])


def test_start_above_threshold_rejected():
    times = np.linspace(0, 5, 51)
    v = np.full((51, 2), 0.8)
    with pytest.raises(ValueError, match="start"):
        compute_activation(times, v)


def test_threshold_residual_small():
    rng = np.random.default_rng(6)
    offsets = 4.0 + rng.uniform(0.0, 2.0, size=20)
    times, v = synthetic_front_series(offsets)
    act = compute_activation(times, v)
    from scipy.interpolate import CubicSpline
    for i in range(v.shape[1]):
        sp = CubicSpline(times, v[:, i], bc_type="natural")
        assert abs(sp(act.psi[i]) - 0.5) <= 1e-8


def test_mean_front_speed_on_planar_front():
    mesh = generate_disk_in_disk(1.0, 3.0, 6, 24)
    c = 0.7
    psi = mesh.vertices[:, 0] / c   # plane wave along x at speed c
    speed = mean_front_speed(mesh, psi)
    np.testing.assert_allclose(speed, c, rtol=1e-10)
