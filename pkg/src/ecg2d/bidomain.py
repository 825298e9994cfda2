"""Reference heart-torso solver: semi-implicit BDF2 stepping of the coupled system.

Each step solves one symmetric positive semidefinite block system for
(v on heart vertices, u on all vertices): the transmembrane equation with
implicit diffusion and extrapolated explicit reaction, coupled to the
quasi-static balance equation for the extracardiac potential.  The gate h
advances with the matching explicit multistep rule.  The realized discrete
right-hand side (backward-difference derivative plus extrapolated reaction,
stimulus included) is recorded per step; re-solving the source formulation
with that exact field reproduces u up to solver tolerance.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .ionic import MSParams, StimulusPulse, ionic_current
from .mesh import TriMesh
from .operators import ConductivityMap, OperatorSet, build_operators, pcg_projected

__all__ = ["BidomainConfig", "BidomainRun", "run_bidomain", "save_run", "load_run"]


@dataclass(frozen=True)
class BidomainConfig:
    mesh: TriMesh
    cond: ConductivityMap = ConductivityMap(1.0, 2.0, 5.0)
    ms: MSParams = MSParams()
    dt: float = 0.1
    t_end: float = 50.0
    stim_center: tuple = (0.0, 0.0)
    stim_radius: float = 2.0
    pulse: StimulusPulse = StimulusPulse()
    tol: float = 1e-12

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_end < self.dt:
            raise ValueError(f"t_end must be >= dt, got {self.t_end}")
        if self.stim_radius <= 0:
            raise ValueError(f"stim_radius must be > 0, got {self.stim_radius}")


@dataclass(frozen=True)
class BidomainRun:
    """Recorded time series of a bidomain solve.

    All fields have shape (n_steps + 1, n_vertices); entries outside the heart
    are 0 for v / rhs / reaction and 1 for h.  `u` carries the zero
    mass-weighted mean gauge at every step.  `rhs` is the realized discrete
    source (derivative part plus extrapolated reaction, stimulus folded in).
    """

    times: np.ndarray
    v: np.ndarray
    u: np.ndarray
    h: np.ndarray
    rhs: np.ndarray
    reaction: np.ndarray
    config: BidomainConfig
    ops: OperatorSet = field(repr=False)

    def __post_init__(self):
        for name in ("times", "v", "u", "h", "rhs", "reaction"):
            getattr(self, name).setflags(write=False)

    @property
    def n_steps(self):
        return len(self.times) - 1

    def step_of_time(self, t):
        k = int(round(t / self.config.dt))
        if not (0 <= k <= self.n_steps) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the recorded step grid")
        return k

    def step_of_time_floor(self, t):
        """Largest recorded step with time <= t (clamped to the run)."""
        k = int(np.floor(t / self.config.dt + 1e-9))
        return min(max(k, 0), self.n_steps)


def _stimulus_mask(mesh, heart_vertices, center, radius):
    xy = mesh.vertices[heart_vertices]
    d = np.hypot(xy[:, 0] - center[0], xy[:, 1] - center[1])
    mask = d <= radius
    if not mask.any():
        raise ValueError("stimulus site contains no heart vertices; center must lie in the heart")
    return mask


def _gate_rate(v, h, ms):
    return np.where(v < ms.v_gate, (1.0 - h) / ms.tau_open, -h / ms.tau_close)


def run_bidomain(config: BidomainConfig, ops: OperatorSet = None) -> BidomainRun:
    """Run the coupled reference solver and record (v, u, h, rhs) per step.

    The first step uses a one-step backward-Euler variant to bootstrap the
    two-step history.  Raises on linear-solver failure and on blow-up
    (max |v| > 10), naming the step.
    """
    mesh = config.mesh
    if ops is None:
        ops = build_operators(mesh, config.cond)
    hv = ops.heart_vertices
    n = mesh.n_vertices
    nh = len(hv)
    dt = config.dt
    ms = config.ms
    n_steps = int(round(config.t_end / dt))

    Ki = ops.K_intra.matrix
    Ki_hh = Ki[hv][:, hv].tocsr()
    Ki_ha = Ki[hv].tocsr()          # heart rows, all columns
    Ki_ah = Ki[:, hv].tocsr()       # all rows, heart columns
    Kb = ops.K_balance.matrix
    mh = ops.M_heart.diag[hv]

    def coupled(c0):
        A11 = sp.diags(c0 / dt * mh) + Ki_hh
        A = sp.bmat([[A11, Ki_ha], [Ki_ah, Kb]], format="csr")
        diag = A.diagonal().copy()
        diag[diag <= 0] = 1.0
        return A, diag

    A1, d1 = coupled(1.0)
    A2, d2 = coupled(1.5)
    gauge = np.concatenate([np.zeros(nh), ops.M_all.diag])

    stim_mask = _stimulus_mask(mesh, hv, config.stim_center, config.stim_radius)

    times = dt * np.arange(n_steps + 1)
    v_out = np.zeros((n_steps + 1, n))
    u_out = np.zeros((n_steps + 1, n))
    h_out = np.ones((n_steps + 1, n))
    rhs_out = np.zeros((n_steps + 1, n))
    reac_out = np.zeros((n_steps + 1, n))

    def stim_at(t):
        s = np.zeros(nh)
        s[stim_mask] = config.pulse(t)
        return s

    def reaction_at(v, h, t):
        return ionic_current(v, h, ms) - stim_at(t)

    v_prev = np.zeros(nh)      # v^{n-1}
    v_prev2 = np.zeros(nh)     # v^{n-2}
    h_prev = np.ones(nh)
    h_prev2 = np.ones(nh)
    reac_prev = reaction_at(v_prev, h_prev, 0.0)
    reac_prev2 = reac_prev.copy()
    reac_out[0, hv] = reac_prev
    x = np.zeros(nh + n)

    for k in range(1, n_steps + 1):
        t = times[k]
        if k == 1:
            b_v = mh * (v_prev / dt - reac_prev)
            A, diag = A1, d1
        else:
            b_v = mh * ((2.0 * v_prev - 0.5 * v_prev2) / dt - (2.0 * reac_prev - reac_prev2))
            A, diag = A2, d2
        b = np.concatenate([b_v, np.zeros(n)])
        try:
            x, _ = pcg_projected(A, b, diag, gauge, tol=config.tol,
                                 max_iter=50 * (nh + n), x0=x)
        except Exception as exc:
            raise RuntimeError(f"linear solve failed at step {k} (t={t:g}): {exc}") from exc
        v_new = x[:nh]
        u_new = x[nh:]
        if np.max(np.abs(v_new)) > 10.0:
            raise RuntimeError(f"blow-up detected at step {k} (t={t:g}): max |v| > 10")

        g_prev = _gate_rate(v_prev, h_prev, ms)
        if k == 1:
            h_new = h_prev + dt * g_prev
            rhs_heart = (v_new - v_prev) / dt + reac_prev
        else:
            g_prev2 = _gate_rate(v_prev2, h_prev2, ms)
            h_new = (2.0 * h_prev - 0.5 * h_prev2 + dt * (2.0 * g_prev - g_prev2)) / 1.5
            rhs_heart = (1.5 * v_new - 2.0 * v_prev + 0.5 * v_prev2) / dt \
                + (2.0 * reac_prev - reac_prev2)
        np.clip(h_new, 0.0, 1.0, out=h_new)

        v_out[k, hv] = v_new
        u_out[k] = u_new
        h_out[k, hv] = h_new
        rhs_out[k, hv] = rhs_heart
        reac_new = reaction_at(v_new, h_new, t)
        reac_out[k, hv] = reac_new

        v_prev2, v_prev = v_prev, v_new
        h_prev2, h_prev = h_prev, h_new
        reac_prev2, reac_prev = reac_prev, reac_new

    return BidomainRun(times, v_out, u_out, h_out, rhs_out, reac_out, config, ops)


# ---------------------------------------------------------------------------
# run directory I/O

_FIELD_FILES = {
    "v": "fields_v.csv",
    "u": "fields_u.csv",
    "h": "fields_h.csv",
    "rhs": "recorded_rhs.csv",
    "reaction": "recorded_reaction.csv",
}


def write_field_csv(path, times, series):
    """Rows = steps, first column = time, remaining columns = vertices."""
    with open(path, "w") as f:
        for t, row in zip(times, series):
            f.write(f"{t:.17g}," + ",".join(f"{x:.17g}" for x in row) + "\n")


def read_field_csv(path):
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return data[:, 0], data[:, 1:]


def save_run(run: BidomainRun, out_dir, meta=None):
    """Write fields_*.csv, recorded_*.csv and run_meta under `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    for attr, fname in _FIELD_FILES.items():
        write_field_csv(os.path.join(out_dir, fname), run.times, getattr(run, attr))
    cfg = run.config
    lines = {
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "sigma_i": cfg.cond.sigma_i,
        "sigma_e": cfg.cond.sigma_e,
        "sigma_t": cfg.cond.sigma_t,
        "tau_in": cfg.ms.tau_in,
        "tau_out": cfg.ms.tau_out,
        "tau_open": cfg.ms.tau_open,
        "tau_close": cfg.ms.tau_close,
        "v_gate": cfg.ms.v_gate,
        "stim_center_x": cfg.stim_center[0],
        "stim_center_y": cfg.stim_center[1],
        "stim_radius": cfg.stim_radius,
        "stim_amplitude": cfg.pulse.amplitude,
        "stim_t0": cfg.pulse.t0,
        "stim_tau": cfg.pulse.tau,
        "solver_tol": cfg.tol,
    }
    if meta:
        lines.update(meta)
    with open(os.path.join(out_dir, "run_meta"), "w") as f:
        for key, value in lines.items():
            f.write(f"{key}={value!r}\n" if isinstance(value, str) else f"{key}={value:.17g}\n")
