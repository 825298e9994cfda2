"""Parametrized action-potential front shapes V(s) and front-based voltages.

Two variants: a smoothed Heaviside upstroke of half-width epsilon rising from
0 to 0.94, and the 0D Mitchell-Schaeffer trace re-centered so its threshold
upstroke crossing sits at s = 0.  A nodal voltage field is built by composing
the shape with an activation map: v(x, t) = V(t - psi(x)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .activation import first_upward_crossing
from .ionic import MSParams, StimulusPulse, solve_ms_0d

__all__ = ["SmoothedHeaviside", "MS0DFront", "build_vtilde", "front_from_spec"]

PLATEAU = 0.94


@dataclass(frozen=True)
class SmoothedHeaviside:
    """C1 upstroke: 0 below -eps, 0.94 above +eps, cubic blend in between."""

    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        e = self.epsilon
        blend = PLATEAU * (-(s ** 3) / (4 * e ** 3) + 3 * s / (4 * e) + 0.5)
        out = np.where(s < -e, 0.0, np.where(s > e, PLATEAU, blend))
        return float(out) if out.ndim == 0 else out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        e = self.epsilon
        inner = PLATEAU * (-3 * s ** 2 / (4 * e ** 3) + 3 / (4 * e))
        out = np.where(np.abs(s) <= e, inner, 0.0)
        return float(out) if out.ndim == 0 else out

    def label(self):
        return f"heaviside_eps={self.epsilon:g}"


@dataclass(frozen=True)
class MS0DFront:
    """Spline of a 0D Mitchell-Schaeffer trace, centered on its 0.5 crossing."""

    times: np.ndarray
    values: np.ndarray
    center: float = field(init=False)
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        self.times.setflags(write=False)
        self.values.setflags(write=False)
        spline = CubicSpline(self.times, self.values, bc_type="natural")
        center = first_upward_crossing(spline, self.times, 0.5)
        if not np.isfinite(center):
            raise ValueError("0D trace never crosses 0.5: cannot center the front")
        object.__setattr__(self, "_spline", spline)
        object.__setattr__(self, "center", float(center))

    @classmethod
    def from_params(cls, params: MSParams = MSParams(),
                    stim: StimulusPulse = StimulusPulse(), dt=0.05, t_end=330.0):
        t, v, _ = solve_ms_0d(params, stim, dt=dt, t_end=t_end)
        return cls(t, v)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        tq = np.clip(s + self.center, self.times[0], self.times[-1])
        out = self._spline(tq)
        return float(out) if out.ndim == 0 else out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        tq = s + self.center
        inside = (tq >= self.times[0]) & (tq <= self.times[-1])
        out = np.where(inside, self._spline(np.clip(tq, self.times[0], self.times[-1]), 1), 0.0)
        return float(out) if out.ndim == 0 else out

    def label(self):
        return "ms0d"


def build_vtilde(shape, psi, t):
    """Nodal front voltage V(t - psi) on the heart; unactivated vertices get 0.

    `psi` may be an ActivationMap or a plain array of activation times.
    """
    times = np.asarray(getattr(psi, "psi", psi), dtype=float)
    out = np.zeros(times.shape)
    act = np.isfinite(times)
    out[act] = shape(t - times[act])
    return out


def build_vtilde_deriv(shape, psi, t):
    """Nodal temporal derivative of the front voltage; 0 where unactivated."""
    times = np.asarray(getattr(psi, "psi", psi), dtype=float)
    out = np.zeros(times.shape)
    act = np.isfinite(times)
    out[act] = shape.derivative(t - times[act])
    return out


def front_from_spec(kind, epsilon=None, ms0d_kwargs=None):
    """Build a front shape from config-style fields."""
    kind = kind.lower()
    if kind == "heaviside":
        if epsilon is None:
            raise ValueError("heaviside front needs epsilon")
        return SmoothedHeaviside(float(epsilon))
    if kind == "ms0d":
        return MS0DFront.from_params(**(ms0d_kwargs or {}))
    raise ValueError(f"unknown front kind {kind!r}")
