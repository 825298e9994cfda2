"""The two static mappings from a transmembrane voltage to the extracardiac potential.

Source formulation: a single elliptic solve with conductivity sigma_e in the
heart and sigma_t in the torso, driven by the volumetric source
(time derivative of v plus ionic term) lumped over heart vertices.

Balance formulation: the quasi-static balance operator (sigma_i + sigma_e in
the heart, sigma_t in the torso) driven by the intracellular stiffness applied
to v; its right-hand side is automatically compatible because row sums of the
stiffness vanish.

Both potentials carry the zero mass-weighted mean gauge.  Right-hand sides for
the source formulation are built from swappable recipes: the derivative may be
recomputed with several difference schemes or taken analytically from a front
shape, and the ionic term may come from recorded reaction samples, a fitted
cubic, or the Mitchell-Schaeffer current.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ionic import CubicIonic, MSParams, ionic_current, f_ms_reduced
from .operators import OperatorSet, solve_neumann

__all__ = [
    "DerivativeScheme",
    "IonicChoice",
    "RhsRecipe",
    "PotentialSolution",
    "f1_rhs",
    "f1_rhs_series",
    "valid_recipe_steps",
    "solve_f1",
    "solve_f2",
    "RECIPES",
]


class DerivativeScheme(Enum):
    ANALYTIC = "analytic"
    SBDF2 = "sbdf2"
    EULER_CENTERED = "euler_centered"
    EULER_EXPLICIT = "euler_explicit"
    RECORDED = "recorded"


class IonicChoice(Enum):
    RECORDED = "recorded"
    F_INT = "f_int"
    F_MS_WITH_H = "f_ms_with_h"
    F_MS_REDUCED = "f_ms_reduced"


@dataclass(frozen=True)
class RhsRecipe:
    """How to rebuild the source-formulation RHS from voltage snapshots."""

    derivative: DerivativeScheme
    ionic: IonicChoice
    cubic: CubicIonic = None
    ms: MSParams = None

    def label(self):
        if self.derivative is DerivativeScheme.RECORDED:
            return "recorded"
        return f"{self.derivative.value}+{self.ionic.value}"


# canonical recipe names for the CLI and the verification study
RECIPES = {
    "recorded": RhsRecipe(DerivativeScheme.RECORDED, IonicChoice.RECORDED),
    "sbdf2_f_int": RhsRecipe(DerivativeScheme.SBDF2, IonicChoice.F_INT),
    "sbdf2_f_ms_h": RhsRecipe(DerivativeScheme.SBDF2, IonicChoice.F_MS_WITH_H),
    "euler_centered": RhsRecipe(DerivativeScheme.EULER_CENTERED, IonicChoice.RECORDED),
    "euler_explicit": RhsRecipe(DerivativeScheme.EULER_EXPLICIT, IonicChoice.RECORDED),
}


@dataclass(frozen=True)
class PotentialSolution:
    """Nodal extracardiac potential with the formulation and recipe that built it."""

    u: np.ndarray
    formulation: str
    recipe: str = ""

    def __post_init__(self):
        self.u.setflags(write=False)


def _ionic_term(recipe, v_n, h_n):
    if recipe.ionic is IonicChoice.F_INT:
        if recipe.cubic is None:
            raise ValueError("F_INT recipe needs a fitted cubic")
        return recipe.cubic(v_n)
    if recipe.ionic is IonicChoice.F_MS_WITH_H:
        if h_n is None:
            raise ValueError("F_MS_WITH_H recipe needs the gate field h")
        ms = recipe.ms or MSParams()
        return ionic_current(v_n, h_n, ms)
    if recipe.ionic is IonicChoice.F_MS_REDUCED:
        ms = recipe.ms or MSParams()
        return -f_ms_reduced(v_n, ms)
    raise ValueError(f"ionic choice {recipe.ionic} not valid here")


def f1_rhs(recipe: RhsRecipe, dt, v_n=None, v_prev=None, v_prev2=None, v_next=None,
           h_n=None, analytic_deriv=None,
           reaction_n=None, reaction_prev=None, reaction_prev2=None):
    """Source-formulation RHS field on heart vertices for one time step.

    Snapshot requirements per derivative scheme: SBDF2 needs (v_n, v_prev,
    v_prev2), centered needs (v_next, v_prev), explicit needs (v_n, v_prev),
    ANALYTIC needs `analytic_deriv`.  The reference combination (SBDF2
    derivative with recorded reaction samples) extrapolates the reaction from
    the two previous steps, 2 f(n-1) - f(n-2), reproducing the stepping
    scheme exactly; every substituted ionic choice is evaluated pointwise at
    step n instead.
    """
    d = recipe.derivative
    if d is DerivativeScheme.RECORDED:
        raise ValueError("RECORDED recipes read the stored rhs; nothing to rebuild")
    if d is DerivativeScheme.SBDF2:
        if v_n is None or v_prev is None or v_prev2 is None:
            raise ValueError("SBDF2 needs snapshots n, n-1, n-2")
        deriv = (1.5 * v_n - 2.0 * v_prev + 0.5 * v_prev2) / dt
    elif d is DerivativeScheme.EULER_CENTERED:
        if v_next is None or v_prev is None:
            raise ValueError("centered scheme needs snapshots n+1 and n-1")
        deriv = (v_next - v_prev) / (2.0 * dt)
    elif d is DerivativeScheme.EULER_EXPLICIT:
        if v_n is None or v_prev is None:
            raise ValueError("explicit scheme needs snapshots n and n-1")
        deriv = (v_n - v_prev) / dt
    elif d is DerivativeScheme.ANALYTIC:
        if analytic_deriv is None:
            raise ValueError("analytic scheme needs the derivative field")
        deriv = analytic_deriv
    else:
        raise ValueError(f"unknown derivative scheme {d}")

    if recipe.ionic is IonicChoice.RECORDED:
        if d is DerivativeScheme.SBDF2:
            if reaction_prev is None or reaction_prev2 is None:
                raise ValueError("SBDF2 + recorded ionic needs reaction samples n-1, n-2")
            ion = 2.0 * reaction_prev - reaction_prev2
        else:
            if reaction_n is None:
                raise ValueError("recorded ionic needs the reaction sample at n")
            ion = reaction_n
    else:
        ion = _ionic_term(recipe, v_n, h_n)
    return deriv + ion


def solve_f1(ops: OperatorSet, rhs_heart, tol=1e-12, enforce_compat=True, x0=None):
    """Solve the source formulation for one RHS field (or a batch of columns).

    `rhs_heart` spans all vertices with zeros off the heart (or a (n, m)
    block of such columns).  The load is the lumped heart mass times the
    field; the compatibility projection subtracts its mass-weighted mean.
    """
    rhs = np.asarray(rhs_heart, dtype=float)
    load = (ops.M_heart.diag * rhs.T).T if rhs.ndim == 1 else ops.M_heart.diag[:, None] * rhs
    u = solve_neumann(ops.K_source, load, tol=tol, enforce_compat=enforce_compat, x0=x0)
    return PotentialSolution(u, "F1")


def solve_f2(ops: OperatorSet, vtilde, tol=1e-12, x0=None):
    """Solve the balance formulation for a heart voltage field (or a batch).

    The RHS -K_intra v is orthogonal to constants up to roundoff because the
    stiffness annihilates constants; no compatibility projection is needed.
    """
    v = np.ascontiguousarray(vtilde, dtype=float)
    # keep single fields on the multi-column code path so a field solved
    # alone matches the same field solved inside a batch bit for bit
    squeeze = v.ndim == 1
    rhs = -(ops.K_intra.matrix @ (v[:, None] if squeeze else v))
    u = solve_neumann(ops.K_balance, rhs, tol=tol, enforce_compat=False, x0=x0)
    return PotentialSolution(u[:, 0] if squeeze else u, "F2")


def valid_recipe_steps(run, recipe: RhsRecipe):
    """Recorded steps at which the recipe's snapshot requirements are met."""
    n = run.n_steps
    d = recipe.derivative
    if d is DerivativeScheme.RECORDED:
        return np.arange(0, n + 1)
    if d is DerivativeScheme.SBDF2:
        return np.arange(2, n + 1)
    if d is DerivativeScheme.EULER_CENTERED:
        return np.arange(1, n)
    return np.arange(1, n + 1)  # explicit


def f1_rhs_series(run, recipe: RhsRecipe, steps):
    """Rebuild the source RHS at the given run steps; returns (n_vertices, len(steps)).

    Uses the run's stored voltage/gate/reaction history.  Steps whose snapshot
    requirements cannot be met (e.g. step 1 for SBDF2, the last step for the
    centered scheme) raise ValueError.
    """
    dt = run.config.dt
    hv = run.ops.heart_vertices
    n = run.v.shape[1]
    out = np.zeros((n, len(steps)))
    for col, k in enumerate(steps):
        if k == 0:
            continue  # initial data: rhs is zero
        if recipe.derivative is DerivativeScheme.RECORDED:
            out[:, col] = run.rhs[k]
            continue
        need_prev2 = recipe.derivative is DerivativeScheme.SBDF2
        if k < 2 and need_prev2:
            raise ValueError(f"step {k}: SBDF2 needs two history steps")
        if recipe.derivative is DerivativeScheme.EULER_CENTERED and k + 1 > run.n_steps:
            raise ValueError(f"step {k}: centered scheme needs step {k + 1}")
        kwargs = dict(
            v_n=run.v[k, hv],
            v_prev=run.v[k - 1, hv],
            h_n=run.h[k, hv],
            reaction_n=run.reaction[k, hv],
        )
        if need_prev2:
            kwargs["v_prev2"] = run.v[k - 2, hv]
            kwargs["reaction_prev"] = run.reaction[k - 1, hv]
            kwargs["reaction_prev2"] = run.reaction[k - 2, hv]
        if recipe.derivative is DerivativeScheme.EULER_CENTERED:
            kwargs["v_next"] = run.v[k + 1, hv]
        field = f1_rhs(recipe, dt, **kwargs)
        out[hv, col] = field
    return out
