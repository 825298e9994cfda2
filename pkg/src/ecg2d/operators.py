"""Discrete elliptic operators with region-wise conductivities.

Assembles vertex-based linear-element stiffness matrices for div(sigma grad .)
with piecewise-constant conductivity per region, lumped mass operators for
region and boundary norms, and solves the resulting pure-Neumann systems by
diagonally preconditioned conjugate gradients with the constant mode projected
out at every iteration.

Assembly sums duplicate (i, j) entries through a stable lexsort so that
K[i, j] and K[j, i] accumulate in the same floating-point order; the matrix
is therefore exactly symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryTag, Region, TriMesh

__all__ = [
    "ConductivityMap",
    "StiffnessOperator",
    "MassOperator",
    "OperatorSet",
    "SolverError",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_boundary_mass",
    "build_operators",
    "solve_neumann",
    "pcg_projected",
    "l2_norm",
    "l1_boundary_norm",
]


@dataclass(frozen=True)
class ConductivityMap:
    """Nondimensional conductivities: sigma_i, sigma_e in the heart, sigma_t in the torso."""

    sigma_i: float
    sigma_e: float
    sigma_t: float

    def __post_init__(self):
        if self.sigma_i < 0:
            raise ValueError(f"sigma_i must be >= 0, got {self.sigma_i}")
        if self.sigma_e <= 0:
            raise ValueError(f"sigma_e must be > 0, got {self.sigma_e}")
        if self.sigma_t <= 0:
            raise ValueError(f"sigma_t must be > 0, got {self.sigma_t}")


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested residual."""


@dataclass(frozen=True)
class StiffnessOperator:
    """Sparse symmetric discrete form of -div(sigma grad .).

    `matrix` spans all mesh vertices; rows and columns of vertices outside the
    contributing regions are zero.  `gauge_weights` is the lumped mass over
    the same regions, used to fix the zero-mean gauge of pure-Neumann solves.
    """

    matrix: sp.csr_matrix
    conductivity: dict
    gauge_weights: np.ndarray
    support: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def dot(self, x):
        return self.matrix @ x


@dataclass(frozen=True)
class MassOperator:
    """Diagonal (lumped) mass restricted to a region set or a boundary tag."""

    diag: np.ndarray
    label: str

    @property
    def support(self):
        return self.diag > 0

    def measure(self):
        """Total measure (area or length) of the support."""
        return float(self.diag.sum())


def _triangle_geometry(mesh):
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return p, areas


def _sum_duplicates_symmetric(n, rows, cols, vals):
    """COO -> CSR with stable duplicate summation (order-identical for ij/ji)."""
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows.astype(np.int64) * n + cols
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    starts = np.flatnonzero(first)
    summed = np.add.reduceat(vals, starts)
    return sp.csr_matrix((summed, (rows[starts], cols[starts])), shape=(n, n))


def assemble_stiffness(mesh: TriMesh, sigma_per_region) -> StiffnessOperator:
    """Assemble the vertex-based stiffness of div(sigma grad .).

    Parameters
    ----------
    mesh : TriMesh
    sigma_per_region : mapping Region -> float
        Conductivity per region.  Regions not listed contribute nothing
        (the operator is restricted to the listed regions).

    Returns
    -------
    StiffnessOperator
        Exactly symmetric, positive semidefinite, annihilates constants on
        its support up to roundoff.
    """
    sigma_per_region = {Region(k): float(v) for k, v in sigma_per_region.items()}
    for region, s in sigma_per_region.items():
        if s < 0:
            raise ValueError(f"negative conductivity {s} for region {region.name}")

    n = mesh.n_vertices
    p, areas = _triangle_geometry(mesh)
    sigma_tri = np.zeros(mesh.n_triangles)
    active = np.zeros(mesh.n_triangles, dtype=bool)
    for region, s in sigma_per_region.items():
        mask = mesh.regions == int(region)
        sigma_tri[mask] = s
        active |= mask

    tri = mesh.triangles[active]
    pa = p[active]
    areas_a = areas[active]
    coef = sigma_tri[active] / (4.0 * areas_a)

    # Gradients of P1 basis functions scale with the rotated opposite edges:
    # grad(lambda_i) = rot90(p_k - p_j) / (2A).  The 1/(2A) factors fold into
    # `coef` so each local entry is a single multiply of an edge dot product.
    e = np.empty((len(tri), 3, 2))
    e[:, 0] = pa[:, 2] - pa[:, 1]
    e[:, 1] = pa[:, 0] - pa[:, 2]
    e[:, 2] = pa[:, 1] - pa[:, 0]

    rows = np.empty(9 * len(tri), dtype=np.int64)
    cols = np.empty_like(rows)
    vals = np.empty(9 * len(tri))
    idx = 0
    for i in range(3):
        for j in range(3):
            dot = e[:, i, 0] * e[:, j, 0] + e[:, i, 1] * e[:, j, 1]
            vals[idx : idx + len(tri)] = coef * dot
            rows[idx : idx + len(tri)] = tri[:, i]
            cols[idx : idx + len(tri)] = tri[:, j]
            idx += len(tri)

    matrix = _sum_duplicates_symmetric(n, rows, cols, vals)

    gauge = np.zeros(n)
    third = areas_a / 3.0
    for i in range(3):
        np.add.at(gauge, tri[:, i], third)
    support = gauge > 0

    return StiffnessOperator(matrix, dict(sigma_per_region), gauge, support)


def assemble_mass(mesh: TriMesh, regions=None) -> MassOperator:
    """Lumped mass over a set of regions (default: all)."""
    if regions is None:
        regions = (Region.HEART, Region.TORSO)
    elif isinstance(regions, (Region, int)):
        regions = (regions,)
    _, areas = _triangle_geometry(mesh)
    mask = np.isin(mesh.regions, [int(r) for r in regions])
    diag = np.zeros(mesh.n_vertices)
    tri = mesh.triangles[mask]
    third = areas[mask] / 3.0
    for i in range(3):
        np.add.at(diag, tri[:, i], third)
    label = "+".join(Region(r).name for r in regions)
    return MassOperator(diag, label)


def assemble_boundary_mass(mesh: TriMesh, tag=BoundaryTag.TORSO_OUTER) -> MassOperator:
    """Lumped edge-length mass on a tagged boundary (half edge length per endpoint)."""
    mask = mesh.boundary_tags == int(tag)
    edges = mesh.boundary_edges[mask]
    d = mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]]
    half = 0.5 * np.hypot(d[:, 0], d[:, 1])
    diag = np.zeros(mesh.n_vertices)
    np.add.at(diag, edges[:, 0], half)
    np.add.at(diag, edges[:, 1], half)
    return MassOperator(diag, BoundaryTag(tag).name)


def _as_columns(rhs):
    b = np.ascontiguousarray(rhs, dtype=float)
    if b.ndim == 1:
        return b[:, None], True
    return b, False


def pcg_projected(matrix, rhs, diag_precond, gauge_weights, tol=1e-12,
                  max_iter=None, x0=None):
    """Jacobi-preconditioned CG on a singular SPD system, constants projected out.

    Works columnwise on a (n, m) right-hand side.  Converged columns are
    frozen and every reduction is columnwise, so at a fixed batch width a
    column's result depends only on its own data: equal columns in one batch
    come out bit-equal, whatever the companions hold.

    Parameters
    ----------
    matrix : csr_matrix
        Symmetric positive semidefinite with null space = constants on the
        support of `gauge_weights`.
    rhs : (n,) or (n, m) array
        Must be compatible (orthogonal to constants); project beforehand.
    diag_precond : (n,) array
        Positive diagonal preconditioner entries (ones where the matrix row
        is empty).
    gauge_weights : (n,) array
        Nonnegative weights defining the zero-mean gauge; iterates are kept
        gauge-free by projecting the preconditioned residual each iteration.
    tol : float
        Relative residual target, per column.

    Returns
    -------
    x : array, same shape as rhs
    iterations : int

    Raises
    ------
    SolverError
        If some column misses `tol` within the iteration cap.
    """
    b, squeeze = _as_columns(rhs)
    n, m = b.shape
    if max_iter is None:
        max_iter = 50 * n
    w = gauge_weights
    wsum = w.sum()
    ones_support = (w > 0).astype(float)
    inv_diag = 1.0 / diag_precond

    def project(z):
        # remove the constant mode on the support: w is the gauge functional,
        # the indicator is the null direction
        z -= np.outer(ones_support, (w @ z) / wsum)
        return z

    # drop the roundoff-level component of b along the null direction; it is
    # outside the range of the matrix and would put tol below the floor
    ssum = ones_support.sum()
    b = b - np.outer(ones_support, (ones_support @ b) / ssum)

    if x0 is None:
        x = np.zeros_like(b)
    else:
        x, _ = _as_columns(np.array(x0, dtype=float, copy=True))
        x = project(x)
    r = b - matrix @ x
    bnorm = np.sqrt(np.einsum("ij,ij->j", b, b))
    target = tol * bnorm
    active = np.sqrt(np.einsum("ij,ij->j", r, r)) > target
    # columns with an exactly zero RHS are done at x0 (or zero)
    if not active.any():
        out = x
        return (out[:, 0] if squeeze else out), 0

    z = project(inv_diag[:, None] * r)
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    it = 0
    stall_window = 60
    stall_best = None
    while active.any():
        if it >= max_iter:
            res = np.sqrt(np.einsum("ij,ij->j", r, r))
            worst = float((res / np.where(bnorm > 0, bnorm, 1.0)).max())
            raise SolverError(
                f"pcg did not converge in {max_iter} iterations "
                f"(worst relative residual {worst:.3e}, target {tol:.1e})"
            )
        it += 1
        ap = matrix @ p
        pap = np.einsum("ij,ij->j", p, ap)
        alpha = np.where(active & (pap > 0), rz / np.where(pap > 0, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        rnorm = np.sqrt(np.einsum("ij,ij->j", r, r))
        active = active & (rnorm > target)
        if not active.any():
            break
        # roundoff floor guard: fail fast if no active column improves anymore
        if it % stall_window == 0:
            worst = float(np.max(np.where(active, rnorm, 0.0)))
            if stall_best is not None and worst > 0.98 * stall_best:
                rel = float((rnorm / np.where(bnorm > 0, bnorm, 1.0)).max())
                raise SolverError(
                    f"pcg stagnated after {it} iterations at relative residual "
                    f"{rel:.3e} (target {tol:.1e}); tol is below the roundoff floor"
                )
            stall_best = worst
        z = project(inv_diag[:, None] * r)
        rz_new = np.einsum("ij,ij->j", r, z)
        beta = np.where(active, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
    x = project(x)
    return (x[:, 0] if squeeze else x), it


def solve_neumann(K: StiffnessOperator, rhs, tol=1e-12, enforce_compat=True,
                  max_iter=None, x0=None):
    """Solve K u = rhs with the zero mass-weighted mean gauge.

    Parameters
    ----------
    K : StiffnessOperator
    rhs : (n,) or (n, m) array
        Nodal load vector(s).  With `enforce_compat` the load is first
        projected onto the range of K by subtracting the mass-weighted mean
        (a constant function's load), making ones^T rhs = 0.
    tol : float
        Relative residual target.
    x0 : array, optional
        Warm-start guess.

    Returns
    -------
    u : array, same shape as rhs, with w^T u = 0 for the gauge weights w.
    """
    b, squeeze = _as_columns(rhs)
    if b.shape[0] != K.shape[0]:
        raise ValueError(f"rhs length {b.shape[0]} != operator size {K.shape[0]}")
    w = K.gauge_weights
    if enforce_compat:
        mean = b.sum(axis=0) / w.sum()
        b = b - np.outer(w, mean)
    diag = K.matrix.diagonal().copy()
    diag[diag <= 0] = 1.0
    u, _ = pcg_projected(K.matrix, b, diag, w, tol=tol, max_iter=max_iter, x0=x0)
    return u[:, 0] if squeeze else u


@dataclass(frozen=True)
class OperatorSet:
    """The operators every solver in the package shares for one (mesh, sigma) pair.

    K_intra drives both the bidomain coupling and the balance-formulation RHS;
    K_source is the source-formulation operator (sigma_e | sigma_t) and
    K_balance the balance operator (sigma_i + sigma_e | sigma_t).
    """

    mesh: TriMesh
    cond: ConductivityMap
    K_intra: StiffnessOperator
    K_source: StiffnessOperator
    K_balance: StiffnessOperator
    M_heart: MassOperator
    M_torso: MassOperator
    M_all: MassOperator
    M_boundary: MassOperator
    heart_vertices: np.ndarray

    def __post_init__(self):
        self.heart_vertices.setflags(write=False)


def build_operators(mesh: TriMesh, cond: ConductivityMap) -> OperatorSet:
    """Assemble the full operator set for a mesh and conductivity map."""
    K_intra = assemble_stiffness(mesh, {Region.HEART: cond.sigma_i})
    K_source = assemble_stiffness(
        mesh, {Region.HEART: cond.sigma_e, Region.TORSO: cond.sigma_t}
    )
    K_balance = assemble_stiffness(
        mesh, {Region.HEART: cond.sigma_i + cond.sigma_e, Region.TORSO: cond.sigma_t}
    )
    return OperatorSet(
        mesh=mesh,
        cond=cond,
        K_intra=K_intra,
        K_source=K_source,
        K_balance=K_balance,
        M_heart=assemble_mass(mesh, Region.HEART),
        M_torso=assemble_mass(mesh, Region.TORSO),
        M_all=assemble_mass(mesh),
        M_boundary=assemble_boundary_mass(mesh),
        heart_vertices=mesh.region_vertices(Region.HEART),
    )


def l2_norm(M: MassOperator, field):
    """L2(region) norm sqrt(u^T M u); `field` spans all mesh vertices."""
    f = np.asarray(field, dtype=float)
    if f.shape[-1] != M.diag.shape[0]:
        raise ValueError(f"field length {f.shape[-1]} != mass size {M.diag.shape[0]}")
    return np.sqrt(np.einsum("...i,i,...i->...", f, M.diag, f))


def l1_boundary_norm(M: MassOperator, field):
    """L1(boundary) norm sum_i M_ii |u_i|."""
    f = np.asarray(field, dtype=float)
    if f.shape[-1] != M.diag.shape[0]:
        raise ValueError(f"field length {f.shape[-1]} != mass size {M.diag.shape[0]}")
    return np.abs(f) @ M.diag
