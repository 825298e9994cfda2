import numpy as np
import pytest
import scipy.linalg

from ecg2d.mesh import Region, TriMesh, generate_disk_in_disk
from ecg2d.operators import (ConductivityMap, SolverError, assemble_boundary_mass,
                             assemble_mass, assemble_stiffness, build_operators,
                             l1_boundary_norm, l2_norm, pcg_projected, solve_neumann)


def unit_right_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2]])
    return TriMesh(verts, tris, np.array([1]), np.empty((0, 2), dtype=int),
                   np.empty(0, dtype=int))


def test_single_triangle_rows_sum_to_zero():
    K = assemble_stiffness(unit_right_triangle(), {Region.HEART: 1.0})
    rows = np.asarray(K.matrix.sum(axis=1)).ravel()
    assert np.max(np.abs(rows)) <= 1e-15


def test_stiffness_scales_exactly_with_conductivity():
    mesh = generate_disk_in_disk(1.0, 3.0, 4, 16)
    K1 = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 1.0})
    K2 = assemble_stiffness(mesh, {Region.HEART: 2.0, Region.TORSO: 2.0})
    np.testing.assert_array_equal(K2.matrix.data, 2.0 * K1.matrix.data)


def test_negative_conductivity_rejected():
    with pytest.raises(ValueError, match="negative"):
        assemble_stiffness(unit_right_triangle(), {Region.HEART: -1.0})
    with pytest.raises(ValueError):
        ConductivityMap(1.0, -2.0, 5.0)


def test_stiffness_exactly_symmetric():
    mesh = generate_disk_in_disk(1.0, 3.0, 6, 24)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 5.0}).matrix
    diff = (K - K.T).tocoo()
    assert diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0


def test_constant_null_space():
    mesh = generate_disk_in_disk(1.0, 3.0, 6, 24)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 5.0}).matrix
    resid = np.abs(K @ np.ones(K.shape[0])).max()
    assert resid <= 1e-12 * np.abs(K.data).max()


def test_smallest_nonzero_eigenvalue_positive():
    # dense eigensolve on a coarse disk: one zero mode, rest positive
    mesh = generate_disk_in_disk(0.5, 1.0, 3, 12)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 1.0}).matrix
    eig = scipy.linalg.eigvalsh(K.toarray())
    assert abs(eig[0]) < 1e-12
    assert eig[1] > 1e-6


def test_solve_neumann_zero_rhs_returns_zero():
    mesh = generate_disk_in_disk(1.0, 3.0, 4, 16)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 1.0})
    u = solve_neumann(K, np.zeros(mesh.n_vertices))
    np.testing.assert_array_equal(u, np.zeros(mesh.n_vertices))


def manufactured_error(n):
    # u = (1 - r^2)^2 on the unit disk solves -lap(u) = 8 - 16 r^2 with
    # zero Neumann flux and zero mean load
    mesh = generate_disk_in_disk(0.5, 1.0, n, 8 * n)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 1.0})
    M = assemble_mass(mesh)
    r2 = (mesh.vertices ** 2).sum(axis=1)
    f = 8.0 - 16.0 * r2
    u = solve_neumann(K, M.diag * f, tol=1e-12)
    exact = (1.0 - r2) ** 2
    exact = exact - (M.diag @ exact) / M.diag.sum()
    return l2_norm(M, u - exact)


def test_manufactured_solution_second_order():
    errs = [manufactured_error(n) for n in (4, 8, 16)]
    for e0, e1 in zip(errs, errs[1:]):
        assert 3.5 <= e0 / e1 <= 4.5


def test_solver_consistency_recovers_field():
    mesh = generate_disk_in_disk(1.0, 3.0, 5, 20)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 5.0})
    rng = np.random.default_rng(3)
    w = rng.standard_normal(mesh.n_vertices)
    u = solve_neumann(K, K.matrix @ w, tol=1e-12)
    w_gauged = w - (K.gauge_weights @ w) / K.gauge_weights.sum()
    assert np.max(np.abs(u - w_gauged)) <= 1e-6 * np.max(np.abs(w))


def test_torso_l2_norm_of_constant_matches_annulus_area():
    mesh = generate_disk_in_disk(1.0, 3.0, 8, 64)
    M = assemble_mass(mesh, Region.TORSO)
    val = l2_norm(M, np.ones(mesh.n_vertices))
    assert abs(val - np.sqrt(8 * np.pi)) < 0.005 * np.sqrt(8 * np.pi)


def test_norm_zero_and_homogeneity():
    mesh = generate_disk_in_disk(1.0, 3.0, 4, 16)
    M = assemble_mass(mesh)
    assert l2_norm(M, np.zeros(mesh.n_vertices)) == 0.0
    rng = np.random.default_rng(0)
    f = rng.standard_normal(mesh.n_vertices)
    np.testing.assert_allclose(l2_norm(M, -2.5 * f), 2.5 * l2_norm(M, f),
                               rtol=1e-14)


def test_norm_support_mismatch_raises():
    mesh = generate_disk_in_disk(1.0, 3.0, 4, 16)
    M = assemble_mass(mesh)
    with pytest.raises(ValueError, match="length"):
        l2_norm(M, np.zeros(mesh.n_vertices + 1))


def test_boundary_mass_measures_perimeter():
    mesh = generate_disk_in_disk(1.0, 3.0, 4, 64)
    Mb = assemble_boundary_mass(mesh)
    assert abs(Mb.measure() - 2 * np.pi * 3) < 0.01 * 2 * np.pi * 3
    f = np.full(mesh.n_vertices, -2.0)
    np.testing.assert_allclose(l1_boundary_norm(Mb, f), 2.0 * Mb.measure(),
                               rtol=1e-14)


def test_pcg_batch_agrees_with_single_columns():
    mesh = generate_disk_in_disk(1.0, 3.0, 5, 20)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 5.0})
    rng = np.random.default_rng(11)
    w = rng.standard_normal((mesh.n_vertices, 3))
    rhs = K.matrix @ w
    batch = solve_neumann(K, rhs, tol=1e-12)
    for j in range(3):
        solo = solve_neumann(K, rhs[:, j], tol=1e-12)
        scale = np.abs(solo).max()
        assert np.abs(batch[:, j] - solo).max() <= 1e-9 * scale


def test_pcg_identical_columns_identical_results():
    # within one batch, converged columns are frozen and every reduction is
    # columnwise, so equal inputs give bit-equal outputs
    mesh = generate_disk_in_disk(1.0, 3.0, 5, 20)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 5.0})
    rng = np.random.default_rng(11)
    col = K.matrix @ rng.standard_normal(mesh.n_vertices)
    other = K.matrix @ rng.standard_normal(mesh.n_vertices)
    rhs = np.column_stack([col, other, col])
    batch = solve_neumann(K, rhs, tol=1e-11)
    np.testing.assert_array_equal(batch[:, 0], batch[:, 2])


def test_pcg_deterministic_across_reruns():
    mesh = generate_disk_in_disk(1.0, 3.0, 5, 20)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 5.0})
    rng = np.random.default_rng(5)
    rhs = K.matrix @ rng.standard_normal(mesh.n_vertices)
    u1 = solve_neumann(K, rhs, tol=1e-11)
    u2 = solve_neumann(K, rhs, tol=1e-11)
    np.testing.assert_array_equal(u1, u2)


def test_pcg_reports_nonconvergence():
    mesh = generate_disk_in_disk(1.0, 3.0, 4, 16)
    K = assemble_stiffness(mesh, {Region.HEART: 1.0, Region.TORSO: 1.0})
    rng = np.random.default_rng(1)
    rhs = K.matrix @ rng.standard_normal(mesh.n_vertices)
    with pytest.raises(SolverError, match="did not converge"):
        diag = K.matrix.diagonal().copy()
        diag[diag <= 0] = 1.0
        pcg_projected(K.matrix, rhs, diag, K.gauge_weights, tol=1e-12, max_iter=3)


def test_solution_gauge_is_zero_mass_mean():
    mesh = generate_disk_in_disk(1.0, 3.0, 5, 20)
    ops = build_operators(mesh, ConductivityMap(1.0, 2.0, 5.0))
    rng = np.random.default_rng(9)
    rhs = ops.K_balance.matrix @ rng.standard_normal(mesh.n_vertices)
    u = solve_neumann(ops.K_balance, rhs, tol=1e-12)
    assert abs(ops.M_all.diag @ u) <= 1e-10 * l2_norm(ops.M_all, u)
