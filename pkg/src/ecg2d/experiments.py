"""The three studies: verification tables, front-duration sweep, noise sensitivity.

Every study returns an ExperimentReport: a flat list of rows
(study, formulation, recipe, front, eps, noise_case, amplitude, seed, time,
metric, value) with a deterministic sort order and repr-exact float
formatting, so a rerun with the same configuration and seed produces a
byte-identical CSV.

Relative errors divide by the reference norm at the same time; at steps where
the reference is exactly zero (before the stimulus switches on) the absolute
difference is reported instead, which keeps those rows finite and zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .activation import ActivationMap, compute_activation, mean_front_speed
from .bidomain import BidomainRun
from .fronts import MS0DFront, SmoothedHeaviside, build_vtilde, build_vtilde_deriv
from .ionic import CubicIonic, f_ms_reduced, fit_cubic_ionic, ionic_current
from .formulations import (DerivativeScheme, IonicChoice, RECIPES, RhsRecipe,
                           f1_rhs_series, solve_f1, solve_f2, valid_recipe_steps)
from .operators import l1_boundary_norm, l2_norm

__all__ = [
    "ReportRow",
    "ExperimentReport",
    "NoiseCase",
    "DEFAULT_EPS_GRID",
    "DEFAULT_AMPLITUDES",
    "fit_cubic_from_run",
    "upstroke_duration",
    "free_propagation_window",
    "verification_study",
    "epsilon_sweep",
    "noise_study",
    "ionic_fit_table",
]

REPORT_HEADER = "study,formulation,recipe,front,eps,noise_case,amplitude,seed,time,metric,value"

DEFAULT_EPS_GRID = tuple(0.5 * k for k in range(1, 11))  # 0.5 .. 5.0
DEFAULT_AMPLITUDES = (0.1, 0.2, 0.4)

NOISE_CASES = ("vref_plus_w", "veps_plus_w", "psi_field_noise", "psi_scalar_shift")


@dataclass(frozen=True)
class NoiseCase:
    variant: str
    amplitude: float
    seed: int

    def __post_init__(self):
        if self.variant not in NOISE_CASES:
            raise ValueError(f"unknown noise case {self.variant!r}")
        if self.amplitude < 0:
            raise ValueError("noise amplitude must be >= 0")


@dataclass(frozen=True)
class ReportRow:
    study: str
    metric: str
    value: object            # float or "error"
    formulation: str = ""
    recipe: str = ""
    front: str = ""
    eps: object = ""         # float or ""
    noise_case: str = ""
    amplitude: object = ""
    seed: object = ""
    time: object = ""        # float or "ALL" or ""

    def sort_key(self):
        def num(x, big=False):
            if isinstance(x, (int, float)):
                return (0, float(x))
            return (1 if big else 2, 0.0) if x == "ALL" else (2, 0.0)
        return (self.study, self.formulation, self.recipe, self.front,
                num(self.eps), self.noise_case, num(self.amplitude),
                num(self.seed), num(self.time, big=True), self.metric)

    def to_csv(self):
        def fmt(x):
            if isinstance(x, float):
                return repr(x)
            return str(x)
        return ",".join(fmt(v) for v in (
            self.study, self.formulation, self.recipe, self.front, self.eps,
            self.noise_case, self.amplitude, self.seed, self.time,
            self.metric, self.value))


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append(ReportRow(**kw))

    def extend(self, other):
        self.rows.extend(other.rows)

    def sorted_rows(self):
        return sorted(self.rows, key=ReportRow.sort_key)

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write(REPORT_HEADER + "\n")
            for row in self.sorted_rows():
                f.write(row.to_csv() + "\n")

    def values(self, **filters):
        """Numeric values of rows matching all given column filters."""
        out = []
        for row in self.rows:
            if all(getattr(row, k) == v for k, v in filters.items()):
                if isinstance(row.value, (int, float)):
                    out.append(float(row.value))
        return out

    def value(self, **filters):
        vals = self.values(**filters)
        if len(vals) != 1:
            raise KeyError(f"expected exactly one row for {filters}, found {len(vals)}")
        return vals[0]


def _rel_errors(M, u, u_ref):
    """Per-column relative L2 errors with the zero-reference convention."""
    den = l2_norm(M, u_ref)
    num = l2_norm(M, u - u_ref)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def fit_cubic_from_run(run: BidomainRun, n_points=20, seed=12345,
                       min_distance=None, v_floor=0.01) -> CubicIonic:
    """Fit the constrained cubic to recorded reaction samples of a run.

    Picks `n_points` heart vertices outside the stimulus site (at least
    `min_distance` from its center, default twice the stimulus radius), takes
    each vertex's (v, reaction) history above `v_floor`, and fits the shared
    cubic through the per-point least-squares coefficients.
    """
    mesh = run.config.mesh
    hv = run.ops.heart_vertices
    if min_distance is None:
        min_distance = 2.0 * run.config.stim_radius
    xy = mesh.vertices[hv]
    cx, cy = run.config.stim_center
    far = np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) > min_distance
    enough = (run.v[:, hv] > v_floor).sum(axis=0) >= 8
    candidates = np.flatnonzero(far & enough)
    if len(candidates) < n_points:
        raise ValueError("not enough activated heart vertices outside the stimulus site")
    rng = np.random.default_rng(seed)
    picks = rng.choice(candidates, size=n_points, replace=False)
    samples = []
    for i in picks:
        g = hv[i]
        v = run.v[:, g]
        f = run.reaction[:, g]
        m = v > v_floor
        samples.append(np.column_stack([v[m], f[m]]))
    return fit_cubic_ionic(samples)


def upstroke_duration(run: BidomainRun, act: ActivationMap, lo_frac=0.05,
                      hi_frac=0.95, n_sample=100, seed=7):
    """Median 5-95% upstroke duration of the reference voltage (time units)."""
    from scipy.interpolate import CubicSpline
    from .activation import first_upward_crossing
    from .fronts import PLATEAU

    hv = run.ops.heart_vertices
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(hv), size=min(n_sample, len(hv)), replace=False)
    durations = []
    for i in idx:
        trace = run.v[:, hv[i]]
        sp = CubicSpline(run.times, trace, bc_type="natural")
        t_lo = first_upward_crossing(sp, run.times, lo_frac * PLATEAU)
        t_hi = first_upward_crossing(sp, run.times, hi_frac * PLATEAU)
        if np.isfinite(t_lo) and np.isfinite(t_hi):
            durations.append(t_hi - t_lo)
    if not durations:
        raise ValueError("no vertex exhibits a full upstroke")
    return float(np.median(durations))


def free_propagation_window(run: BidomainRun, act: ActivationMap):
    """Interval during which the front propagates freely.

    Starts once the stimulus footprint has fully depolarized (latest
    activation inside the stimulus site plus one upstroke duration) and ends
    before the front reaches the heart boundary (earliest activation on the
    interface ring minus one upstroke duration).
    """
    mesh = run.config.mesh
    hv = run.ops.heart_vertices
    psi = act.psi
    t_up = upstroke_duration(run, act)
    xy = mesh.vertices[hv]
    cx, cy = run.config.stim_center
    in_stim = np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) <= run.config.stim_radius
    rim_vertices = np.unique(mesh.interface_edges)
    rim_psi = psi[np.isin(hv, rim_vertices)]
    lo = float(np.nanmax(psi[in_stim])) + t_up
    hi = float(run.times[-1])
    if np.isfinite(rim_psi).any():
        # front reaches the boundary inside the run; stop before the collision
        hi = min(hi, float(np.nanmin(rim_psi)) - t_up)
    if not lo < hi:
        raise ValueError("free-propagation window is empty; run too short or heart too small")
    return lo, hi


# ---------------------------------------------------------------------------
# verification study (tables analogue)


def verification_study(run: BidomainRun, recipes=None, cubic=None,
                       study_tol=1e-12) -> ExperimentReport:
    """Relative errors of the source formulation under swapped RHS recipes.

    For each recipe, rebuilds the source RHS from the recorded voltage
    history, solves, and reports the per-step relative torso error plus its
    maximum over the free-propagation window.  The balance formulation driven
    by the recorded voltage is reported alongside.  Solver failures mark the
    affected rows with "error" and the remaining recipes still run.
    """
    ops = run.ops
    if recipes is None:
        recipes = list(RECIPES)
    act = compute_activation(run.times, run.v[:, ops.heart_vertices])
    win_lo, win_hi = free_propagation_window(run, act)
    report = ExperimentReport()
    report.add(study="verification", metric="window_lo", value=float(win_lo))
    report.add(study="verification", metric="window_hi", value=float(win_hi))

    def emit(formulation, recipe_name, steps, u):
        u_ref = run.u[steps]
        errs = _rel_errors(ops.M_torso, u.T, u_ref)
        times = run.times[steps]
        for t, e in zip(times, errs):
            report.add(study="verification", formulation=formulation,
                       recipe=recipe_name, time=float(t),
                       metric="rel_l2_torso", value=float(e))
        inside = (times >= win_lo) & (times <= win_hi)
        report.add(study="verification", formulation=formulation,
                   recipe=recipe_name, time="ALL", metric="rel_l2_torso_max",
                   value=float(errs[inside].max()))

    for name in recipes:
        recipe = RECIPES[name] if isinstance(name, str) else name
        label = name if isinstance(name, str) else recipe.label()
        if recipe.ionic is IonicChoice.F_INT and recipe.cubic is None:
            if cubic is None:
                cubic = fit_cubic_from_run(run)
            recipe = replace(recipe, cubic=cubic)
        if recipe.ms is None:
            recipe = replace(recipe, ms=run.config.ms)
        steps = valid_recipe_steps(run, recipe)
        tol = run.config.tol if recipe.derivative is DerivativeScheme.RECORDED \
            else study_tol
        try:
            rhs = f1_rhs_series(run, recipe, steps)
            u1 = solve_f1(ops, rhs, tol=tol).u
        except Exception as exc:
            report.add(study="verification", formulation="F1", recipe=label,
                       time="ALL", metric="rel_l2_torso_max",
                       value=f"error: {exc}")
            continue
        emit("F1", label, steps, u1)

    try:
        steps = np.arange(run.n_steps + 1)
        u2 = solve_f2(ops, run.v[steps].T, tol=run.config.tol).u
        emit("F2", "vref", steps, u2)
    except Exception as exc:
        report.add(study="verification", formulation="F2", recipe="vref",
                   time="ALL", metric="rel_l2_torso_max", value=f"error: {exc}")
    return report


# ---------------------------------------------------------------------------
# front-duration sweep (error-vs-epsilon analogue)


def _sweep_recipe(cubic):
    return RhsRecipe(DerivativeScheme.ANALYTIC, IonicChoice.F_INT, cubic=cubic)


def epsilon_sweep(run: BidomainRun, act: ActivationMap, eps_grid=DEFAULT_EPS_GRID,
                  include_ms0d=True, stride=5, cubic=None,
                  study_tol=1e-12) -> ExperimentReport:
    """Compare both formulations against the reference for pre-shaped fronts.

    For each smoothed-Heaviside half-width (and the 0D-trace front), builds
    v(x,t) = V(t - psi(x)) on a strided step grid, solves the balance
    formulation and the source formulation (analytic derivative plus fitted
    cubic), and reports per-time relative torso errors, space-time boundary
    L1 errors over [0, max psi + 2 eps], the front-vs-reference voltage
    mismatch, and the grid minimizer of the balance formulation's space-time
    metric.
    """
    ops = run.ops
    mesh = run.config.mesh
    hv = ops.heart_vertices
    dt = run.config.dt
    if cubic is None:
        cubic = fit_cubic_from_run(run)
    recipe = _sweep_recipe(cubic)
    psi_full = np.full(mesh.n_vertices, np.nan)
    psi_full[hv] = act.psi
    heart_mask = np.zeros(mesh.n_vertices, dtype=bool)
    heart_mask[hv] = True

    win_lo, win_hi = free_propagation_window(run, act)
    report = ExperimentReport()
    report.add(study="sweep_eps", metric="window_lo", value=float(win_lo))
    report.add(study="sweep_eps", metric="window_hi", value=float(win_hi))

    fronts = []
    if include_ms0d:
        fronts.append(("ms0d", "", MS0DFront.from_params(run.config.ms)))
    for eps in eps_grid:
        fronts.append(("heaviside", float(eps), SmoothedHeaviside(float(eps))))

    l1_by_eps = {}
    for front_name, eps, shape in fronts:
        eps_reach = shape.epsilon if front_name == "heaviside" else 0.0
        t_end = min(run.times[-1], act.max() + 2.0 * eps_reach) if front_name == "heaviside" \
            else run.times[-1]
        steps = np.arange(0, run.step_of_time_floor(t_end) + 1, stride)
        times = run.times[steps]
        u_ref = run.u[steps]
        v_ref = run.v[steps]

        vt = np.zeros((mesh.n_vertices, len(steps)))
        vtd = np.zeros_like(vt)
        for j, t in enumerate(times):
            vt[:, j] = build_vtilde(shape, psi_full, t)
            vtd[:, j] = build_vtilde_deriv(shape, psi_full, t)

        common = dict(study="sweep_eps", front=front_name, eps=eps)
        try:
            u2 = solve_f2(ops, vt, tol=study_tol).u
            rhs1 = vtd + cubic(vt)
            rhs1[~heart_mask, :] = 0.0
            u1 = solve_f1(ops, rhs1, tol=study_tol).u
        except Exception as exc:
            report.add(metric="rel_l1_boundary_spacetime", value=f"error: {exc}",
                       formulation="F2", time="ALL", **common)
            continue

        for formulation, u in (("F1", u1), ("F2", u2)):
            rel_t = _rel_errors(ops.M_torso, u.T, u_ref)
            den_b = l1_boundary_norm(ops.M_boundary, u_ref)
            num_b = l1_boundary_norm(ops.M_boundary, u.T - u_ref)
            rel_b = np.where(den_b > 0, num_b / np.where(den_b > 0, den_b, 1.0), num_b)
            for t, e2, eb in zip(times, rel_t, rel_b):
                report.add(metric="rel_l2_torso", value=float(e2),
                           formulation=formulation, time=float(t), **common)
                report.add(metric="rel_l1_boundary", value=float(eb),
                           formulation=formulation, time=float(t), **common)
            # space-time boundary L1 over the window, strided Riemann sum
            weight = stride * dt
            den_st = (den_b * weight).sum()
            num_st = (np.abs(u.T - u_ref) @ ops.M_boundary.diag * weight).sum()
            l1_rel = num_st / den_st
            report.add(metric="rel_l1_boundary_spacetime", value=float(l1_rel),
                       formulation=formulation, time="ALL", **common)
            if formulation == "F2" and front_name == "heaviside":
                l1_by_eps[eps] = l1_rel

        # voltage mismatch (space-time L2 over the heart)
        den_v = np.sqrt(((l2_norm(ops.M_heart, v_ref)) ** 2).sum())
        num_v = np.sqrt(((l2_norm(ops.M_heart, vt.T - v_ref)) ** 2).sum())
        report.add(metric="rel_l2_heart_spacetime_vtilde",
                   value=float(num_v / den_v), formulation="vtilde",
                   time="ALL", **common)

    if l1_by_eps:
        eps_opt = min(l1_by_eps, key=lambda e: l1_by_eps[e])
        report.add(study="sweep_eps", front="heaviside", metric="eps_opt",
                   value=float(eps_opt))
    return report


# ---------------------------------------------------------------------------
# noise sensitivity study


def noise_study(run: BidomainRun, act: ActivationMap, eps=2.5,
                cases=NOISE_CASES, n_realisations=200,
                amplitudes=DEFAULT_AMPLITUDES, base_seed=42, t_eval=35.0,
                study_tol=1e-12) -> ExperimentReport:
    """Balance-formulation error under four noisy front constructions.

    Noise realisation k draws from numpy's default generator seeded with
    base_seed XOR k, so every (case, amplitude) pair sees the same underlying
    standard-normal field.  Voltage-valued noise is scaled by the plateau
    (0.94); time-valued noise by dt_ref = (stimulus diameter) / (mean front
    speed).  Reports per-realisation relative torso errors at `t_eval` plus
    quartile summaries per case and amplitude.
    """
    ops = run.ops
    mesh = run.config.mesh
    hv = ops.heart_vertices
    if n_realisations < 2:
        raise ValueError("need at least 2 realisations")
    for case in cases:
        if case not in NOISE_CASES:
            raise ValueError(f"unknown noise case {case!r}")

    k_eval = run.step_of_time(t_eval)
    u_ref = run.u[k_eval]
    den = l2_norm(ops.M_torso, u_ref)
    if den == 0:
        raise ValueError(f"reference potential vanishes at t={t_eval}")

    shape = SmoothedHeaviside(float(eps))
    psi = act.psi
    v_ref_t = run.v[k_eval]
    v_eps_t = np.zeros(mesh.n_vertices)
    v_eps_t[hv] = build_vtilde(shape, psi, t_eval)

    c_mean = mean_front_speed(mesh, _psi_full(mesh, hv, psi))
    dt_ref = 2.0 * run.config.stim_radius / c_mean

    report = ExperimentReport()
    report.add(study="noise", metric="mean_front_speed", value=float(c_mean))
    report.add(study="noise", metric="dt_ref", value=float(dt_ref))
    report.add(study="noise", metric="t_eval", value=float(t_eval))

    def noisy_field(case, amplitude, w, w0):
        if case == "vref_plus_w":
            vt = v_ref_t.copy()
            vt[hv] += amplitude * 0.94 * w
        elif case == "veps_plus_w":
            vt = v_eps_t.copy()
            vt[hv] += amplitude * 0.94 * w
        elif case == "psi_field_noise":
            # H(t - psi + w) = H(t - (psi - w)); unactivated vertices stay 0
            vt = np.zeros(mesh.n_vertices)
            vt[hv] = build_vtilde(shape, psi - amplitude * dt_ref * w, t_eval)
        else:  # psi_scalar_shift
            vt = np.zeros(mesh.n_vertices)
            vt[hv] = build_vtilde(shape, psi - amplitude * dt_ref * w0, t_eval)
        return vt

    # the zero-noise field rides along as the last column of every batch;
    # equal-shaped batches make equal columns bit-identical, so amplitude-0
    # realisations reproduce the reported baseline exactly
    emitted_front_baseline = False
    zeros_w = np.zeros(len(hv))
    for amplitude in amplitudes:
        for case in cases:
            fields = np.empty((mesh.n_vertices, n_realisations + 1))
            for k in range(n_realisations):
                rng = np.random.default_rng(base_seed ^ k)
                w = rng.standard_normal(len(hv))
                w0 = rng.standard_normal()
                fields[:, k] = noisy_field(case, amplitude, w, w0)
            fields[:, n_realisations] = noisy_field(case, 0.0, zeros_w, 0.0)
            common = dict(study="noise", formulation="F2", front="heaviside",
                          eps=float(eps), noise_case=case,
                          amplitude=float(amplitude))
            try:
                u2 = solve_f2(ops, fields, tol=study_tol).u
            except Exception as exc:
                report.add(metric="median", value=f"error: {exc}",
                           time=float(t_eval), **common)
                continue
            errs = l2_norm(ops.M_torso, u2.T - u_ref) / den
            for k in range(n_realisations):
                report.add(metric="rel_l2_torso", value=float(errs[k]),
                           seed=int(base_seed ^ k), time=float(t_eval), **common)
            report.add(metric="noiseless_rel_l2_torso", value=float(errs[-1]),
                       time=float(t_eval), **common)
            if case == "veps_plus_w" and not emitted_front_baseline:
                report.add(study="noise", front="heaviside", eps=float(eps),
                           metric="noiseless_rel_l2_torso",
                           value=float(errs[-1]))
                emitted_front_baseline = True
            q1, med, q3 = np.percentile(errs[:n_realisations],
                                        [25.0, 50.0, 75.0])
            report.add(metric="q1", value=float(q1), time=float(t_eval), **common)
            report.add(metric="median", value=float(med), time=float(t_eval), **common)
            report.add(metric="q3", value=float(q3), time=float(t_eval), **common)
    return report


def _psi_full(mesh, hv, psi):
    out = np.full(mesh.n_vertices, np.nan)
    out[hv] = psi
    return out


def ionic_fit_table(run: BidomainRun, cubic: CubicIonic = None, n_points=5,
                    seed=2024, n_curve=101):
    """Rows (v, series, value) for the reaction-fit figure.

    series "f_ms" is the Mitchell-Schaeffer current with a fresh gate,
    "f_int" the fitted cubic, and "f_ref" recorded reaction samples from a
    few non-stimulated heart vertices.
    """
    if cubic is None:
        cubic = fit_cubic_from_run(run)
    ms = run.config.ms
    rows = []
    vgrid = np.linspace(0.0, 1.0, n_curve)
    for v in vgrid:
        rows.append((float(v), "f_ms", float(ionic_current(v, 1.0, ms))))
        rows.append((float(v), "f_int", float(cubic(v))))
    hv = run.ops.heart_vertices
    mesh = run.config.mesh
    xy = mesh.vertices[hv]
    cx, cy = run.config.stim_center
    far = np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) > 2.0 * run.config.stim_radius
    enough = (run.v[:, hv] > 0.01).sum(axis=0) >= 8
    cand = np.flatnonzero(far & enough)
    rng = np.random.default_rng(seed)
    picks = rng.choice(cand, size=min(n_points, len(cand)), replace=False)
    for i in picks:
        g = hv[i]
        v = run.v[:, g]
        f = run.reaction[:, g]
        m = v > 0.01
        for vk, fk in zip(v[m][::5], f[m][::5]):
            rows.append((float(vk), "f_ref", float(fk)))
    return rows
