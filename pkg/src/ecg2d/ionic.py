"""Mitchell-Schaeffer ionic dynamics, its 0D trace, and the constrained cubic fit.

Sign conventions
----------------
`ms_rhs` returns the ODE rates (dv/dt, dh/dt): resting tissue has dv = 0.
The reaction term consumed by the solvers is the *current* `ionic_current`,
defined so that dv/dt + ionic_current(v, h) = 0 reproduces the ODE; along the
coupled tissue solution the discrete elliptic balance then holds exactly with
this sign.  The reduced front function `f_ms_reduced` keeps the classical
rate-side sign (positive on the upstroke).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MSParams",
    "CubicIonic",
    "StimulusPulse",
    "ms_rhs",
    "ionic_current",
    "f_ms_reduced",
    "plateau_voltage",
    "solve_ms_0d",
    "fit_cubic_ionic",
]

UPSTROKE_ROOT = 0.94  # pinned upper zero of the fitted cubic


@dataclass(frozen=True)
class MSParams:
    """Mitchell-Schaeffer time constants and gate threshold.

    tau_in and tau_out shape the cubic reaction; tau_open / tau_close drive
    the recovery gate h; v_gate switches the gate dynamics.
    """

    tau_in: float = 0.3
    tau_out: float = 6.0
    tau_open: float = 120.0
    tau_close: float = 150.0
    v_gate: float = 0.13

    def __post_init__(self):
        for name in ("tau_in", "tau_out", "tau_open", "tau_close"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 < self.v_gate < 1:
            raise ValueError(f"v_gate must lie in (0, 1), got {self.v_gate}")


@dataclass(frozen=True)
class CubicIonic:
    """Cubic current a*v*(v - 0.94)*(v - r); zeros at 0 and 0.94 by construction."""

    a: float
    r: float

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.a * v * (v - UPSTROKE_ROOT) * (v - self.r)


@dataclass(frozen=True)
class StimulusPulse:
    """Compact-support C-infinity bump A*exp(1 - 1/(1 - y^2)), y=(t-t0)/tau."""

    amplitude: float = 0.05
    t0: float = 5.0
    tau: float = 3.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        y = (t - self.t0) / self.tau
        out = np.zeros_like(y)
        inside = np.abs(y) < 1.0
        yi = y[inside]
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - yi * yi))
        return out if out.ndim else float(out)


def ms_rhs(v, h, p: MSParams):
    """ODE rates (dv/dt, dh/dt) of the Mitchell-Schaeffer model.

    dv = h v^2 (1 - v)/tau_in - v/tau_out
    dh = (1 - h)/tau_open where v < v_gate, else -h/tau_close
    """
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    dv = h * v * v * (1.0 - v) / p.tau_in - v / p.tau_out
    dh = np.where(v < p.v_gate, (1.0 - h) / p.tau_open, -h / p.tau_close)
    if dv.ndim == 0:
        return float(dv), float(dh)
    return dv, dh


def ionic_current(v, h, p: MSParams):
    """Membrane current with the solver-side sign: dv/dt + current = 0 in 0D."""
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    return v / p.tau_out - h * v * v * (1.0 - v) / p.tau_in


def f_ms_reduced(v, p: MSParams = MSParams()):
    """Reduced front reaction v^2(1-v)/tau_in - v/tau_out (gate pinned at 1)."""
    v = np.asarray(v, dtype=float)
    out = v * v * (1.0 - v) / p.tau_in - v / p.tau_out
    return float(out) if out.ndim == 0 else out


def plateau_voltage(p: MSParams):
    """Larger root of v(1-v) = tau_in/tau_out: the plateau with a fresh gate."""
    disc = 1.0 - 4.0 * p.tau_in / p.tau_out
    if disc < 0:
        raise ValueError("tau_in/tau_out too large: no excitable plateau")
    return 0.5 * (1.0 + np.sqrt(disc))


def solve_ms_0d(p: MSParams = MSParams(), stim: StimulusPulse = StimulusPulse(),
                dt=0.05, t_end=330.0):
    """Integrate the 0D Mitchell-Schaeffer model with a stimulus pulse.

    Classical fixed-step RK4 on (v, h) with dv/dt += stim(t).  A nonzero
    stimulus must drive the trace across the upstroke threshold, otherwise it
    is subthreshold and an error is raised; with a zero-amplitude pulse the
    resting trace is returned as-is.

    Returns
    -------
    t, v, h : 1D arrays of the sampled trace.
    """
    if t_end < 330.0:
        raise ValueError(f"t_end must cover a full action potential (>= 330), got {t_end}")
    n = int(round(t_end / dt))
    t = dt * np.arange(n + 1)
    v = np.empty(n + 1)
    h = np.empty(n + 1)
    v[0], h[0] = 0.0, 1.0

    def rates(tk, vk, hk):
        dv, dh = ms_rhs(vk, hk, p)
        return dv + stim(tk), dh

    for k in range(n):
        tk, vk, hk = t[k], v[k], h[k]
        k1v, k1h = rates(tk, vk, hk)
        k2v, k2h = rates(tk + 0.5 * dt, vk + 0.5 * dt * k1v, hk + 0.5 * dt * k1h)
        k3v, k3h = rates(tk + 0.5 * dt, vk + 0.5 * dt * k2v, hk + 0.5 * dt * k2h)
        k4v, k4h = rates(tk + dt, vk + dt * k3v, hk + dt * k3h)
        v[k + 1] = vk + dt * (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
        h[k + 1] = hk + dt * (k1h + 2 * k2h + 2 * k3h + k4h) / 6.0

    if stim.amplitude != 0.0 and v.max() < 0.5:
        raise ValueError(f"stimulus below threshold: max v = {v.max():.3g} < 0.5")
    return t, v, h


def fit_cubic_ionic(samples_per_point):
    """Least-squares fit of a*v*(v-0.94)*(v-r) to reaction samples.

    Parameters
    ----------
    samples_per_point : sequence of (m_k, 2) arrays
        Per spatial point, rows of (v, f) samples; each point needs at least
        4 samples spanning the upstroke range.

    With z = v(v - 0.94), the model f = z*(c3 v + c2) is linear in (c3, c2);
    per point the normal equations give a_k = c3 and r_k = -c2/c3, and the
    returned coefficients are the means over points.

    Returns
    -------
    CubicIonic
    """
    if len(samples_per_point) == 0:
        raise ValueError("no sample points given")
    a_vals, r_vals = [], []
    for k, samples in enumerate(samples_per_point):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 4:
            raise ValueError(f"point {k}: need at least 4 (v, f) samples")
        v, f = arr[:, 0], arr[:, 1]
        z = v * (v - UPSTROKE_ROOT)
        design = np.column_stack([z * v, z])
        coef, _, rank, _ = np.linalg.lstsq(design, f, rcond=None)
        if rank < 2 or coef[0] == 0.0:
            raise ValueError(f"point {k}: degenerate sample set (rank {rank})")
        a_vals.append(coef[0])
        r_vals.append(-coef[1] / coef[0])
    return CubicIonic(float(np.mean(a_vals)), float(np.mean(r_vals)))
