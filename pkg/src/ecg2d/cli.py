"""Command-line entry point wiring the modules into reproducible pipelines.

Subcommands: mesh-gen, ms0d, run-bidomain, activation, solve-f1, solve-f2,
verify, sweep-eps, noise-study.  Outputs are write-once (existing files are
an error without --force); every report is byte-identical across reruns and
thread settings for a fixed seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .activation import compute_activation
from .bidomain import (BidomainRun, read_field_csv, run_bidomain, save_run,
                       write_field_csv)
from .config import RunConfig, parse_config_file
from .experiments import (DEFAULT_AMPLITUDES, DEFAULT_EPS_GRID, epsilon_sweep,
                          fit_cubic_from_run, ionic_fit_table, noise_study,
                          verification_study)
from .formulations import RECIPES, f1_rhs_series, solve_f1, solve_f2
from .fronts import MS0DFront, SmoothedHeaviside, build_vtilde
from .ionic import MSParams, StimulusPulse, solve_ms_0d
from .mesh import generate_disk_in_disk, load_mesh, save_mesh
from .operators import build_operators


def _check_out(path, force):
    if os.path.exists(path) and not force:
        raise FileExistsError(f"output {path} exists (use --force to overwrite)")


def _write_once(path, force, writer):
    _check_out(path, force)
    writer(path)


def _load_config(args) -> RunConfig:
    if args.config:
        return parse_config_file(args.config)
    from .config import parse_config
    return parse_config("")


def _run_pipeline(cfg: RunConfig, out_dir, force):
    """Run the bidomain solver and write the run directory."""
    os.makedirs(out_dir, exist_ok=True)
    for fname in ("fields_v.csv", "fields_u.csv", "fields_h.csv",
                  "recorded_rhs.csv", "recorded_reaction.csv", "run_meta",
                  "config_echo.ini"):
        _check_out(os.path.join(out_dir, fname), force)
    mesh = cfg.build_mesh()
    run = run_bidomain(cfg.bidomain_config(mesh))
    save_run(run, out_dir)
    with open(os.path.join(out_dir, "config_echo.ini"), "w") as f:
        f.write(cfg.echo())
    return run


def _load_run(cfg: RunConfig, run_dir) -> BidomainRun:
    """Rebuild a BidomainRun from a run directory written by run-bidomain.

    The mesh and solver configuration come from `cfg`, which must match the
    one used to produce the directory (the echoed config is stored there).
    """
    from .operators import build_operators  # noqa: F811 (clarity)
    bcfg = cfg.bidomain_config()
    ops = build_operators(bcfg.mesh, bcfg.cond)
    times, v = read_field_csv(os.path.join(run_dir, "fields_v.csv"))
    _, u = read_field_csv(os.path.join(run_dir, "fields_u.csv"))
    _, h = read_field_csv(os.path.join(run_dir, "fields_h.csv"))
    _, rhs = read_field_csv(os.path.join(run_dir, "recorded_rhs.csv"))
    _, reac = read_field_csv(os.path.join(run_dir, "recorded_reaction.csv"))
    return BidomainRun(times, v, u, h, rhs, reac, bcfg, ops)


def _get_run(cfg: RunConfig, args) -> BidomainRun:
    if getattr(args, "run_dir", None):
        return _load_run(cfg, args.run_dir)
    return run_bidomain(cfg.bidomain_config())


def _activation_of(run):
    return compute_activation(run.times, run.v[:, run.ops.heart_vertices])


def cmd_mesh_gen(args):
    mesh = generate_disk_in_disk(args.r_heart, args.r_torso, args.rings,
                                 args.sectors, torso_rings=args.torso_rings)
    _write_once(args.out, args.force, lambda p: save_mesh(mesh, p))
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, "
          f"{mesh.n_triangles} triangles")
    return 0


def cmd_ms0d(args):
    cfg = _load_config(args)
    t, v, h = solve_ms_0d(cfg.ms_params(), StimulusPulse(), dt=args.dt,
                          t_end=args.T)
    def write(path):
        with open(path, "w") as f:
            f.write("t,v,h\n")
            for row in zip(t, v, h):
                f.write(",".join(repr(float(x)) for x in row) + "\n")
    _write_once(args.out, args.force, write)
    print(f"wrote {args.out}: {len(t)} samples, max v = {v.max():.4f}")
    return 0


def cmd_run_bidomain(args):
    cfg = _load_config(args)
    run = _run_pipeline(cfg, args.out_dir, args.force)
    print(f"wrote run to {args.out_dir}: {run.n_steps} steps, "
          f"{run.v.shape[1]} vertices, max v = {run.v.max():.4f}")
    return 0


def cmd_activation(args):
    times, v = read_field_csv(args.v)
    act = compute_activation(times, v, threshold=args.threshold)
    def write(path):
        with open(path, "w") as f:
            f.write("vertex_id,psi\n")
            for i, p in enumerate(act.psi):
                f.write(f"{i},{repr(float(p))}\n")
    _write_once(args.out, args.force, write)
    n_act = int(np.isfinite(act.psi).sum())
    print(f"wrote {args.out}: {n_act} activated vertices, "
          f"psi in [{act.min():.3f}, {act.max():.3f}]")
    return 0


def cmd_solve_f1(args):
    cfg = _load_config(args)
    if args.recipe not in RECIPES:
        raise ValueError(f"unknown recipe {args.recipe!r}; choose from "
                         + ", ".join(RECIPES))
    run = _get_run(cfg, args)
    recipe = RECIPES[args.recipe]
    from dataclasses import replace
    if recipe.ionic.value == "f_int":
        recipe = replace(recipe, cubic=fit_cubic_from_run(run))
    recipe = replace(recipe, ms=run.config.ms)
    from .formulations import valid_recipe_steps
    steps = valid_recipe_steps(run, recipe)
    rhs = f1_rhs_series(run, recipe, steps)
    tol = cfg["solver", "tol"] if args.recipe == "recorded" else cfg.study_tol
    u1 = solve_f1(run.ops, rhs, tol=tol).u
    _write_once(args.out, args.force,
                lambda p: write_field_csv(p, run.times[steps], u1.T))
    print(f"wrote {args.out}: {len(steps)} steps, recipe {args.recipe}")
    return 0


def cmd_solve_f2(args):
    cfg = _load_config(args)
    run = _get_run(cfg, args)
    act = _activation_of(run)
    if cfg.front_kind == "ms0d":
        shape = MS0DFront.from_params(run.config.ms)
    else:
        shape = SmoothedHeaviside(cfg.epsilon)
    psi_full = np.full(run.v.shape[1], np.nan)
    psi_full[run.ops.heart_vertices] = act.psi
    steps = np.arange(0, run.n_steps + 1, args.stride)
    vt = np.stack([build_vtilde(shape, psi_full, t) for t in run.times[steps]],
                  axis=1)
    u2 = solve_f2(run.ops, vt, tol=cfg.study_tol).u
    _write_once(args.out, args.force,
                lambda p: write_field_csv(p, run.times[steps], u2.T))
    print(f"wrote {args.out}: {len(steps)} steps, front {cfg.front_kind}")
    return 0


def cmd_verify(args):
    cfg = _load_config(args)
    run = _get_run(cfg, args)
    report = verification_study(run, study_tol=cfg.study_tol)
    _write_once(args.out, args.force, report.to_csv)
    if args.ionic_fit_out:
        rows = ionic_fit_table(run)
        def write(path):
            with open(path, "w") as f:
                f.write("v,series,value\n")
                for v, series, value in rows:
                    f.write(f"{v!r},{series},{value!r}\n")
        _write_once(args.ionic_fit_out, args.force, write)
    n = len(report.rows)
    print(f"wrote {args.out}: {n} rows")
    return 0


def _parse_eps_grid(text):
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        n = int(round((hi - lo) / step))
        return tuple(lo + k * step for k in range(n + 1))
    return tuple(float(x) for x in text.split(","))


def cmd_sweep_eps(args):
    cfg = _load_config(args)
    run = _get_run(cfg, args)
    act = _activation_of(run)
    grid = _parse_eps_grid(args.eps) if args.eps else DEFAULT_EPS_GRID
    report = epsilon_sweep(run, act, eps_grid=grid, stride=args.stride,
                           study_tol=cfg.study_tol)
    _write_once(args.out, args.force, report.to_csv)
    print(f"wrote {args.out}: {len(report.rows)} rows")
    return 0


def cmd_noise_study(args):
    cfg = _load_config(args)
    run = _get_run(cfg, args)
    act = _activation_of(run)
    amplitudes = tuple(float(a) for a in args.amplitudes.split(",")) \
        if args.amplitudes else DEFAULT_AMPLITUDES
    report = noise_study(run, act, eps=args.eps, n_realisations=args.n,
                         amplitudes=amplitudes, base_seed=args.seed,
                         t_eval=args.t, study_tol=cfg.study_tol)
    _write_once(args.out, args.force, report.to_csv)
    print(f"wrote {args.out}: {len(report.rows)} rows")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ecg2d",
        description="2D forward-ECG toolkit: activation-front potentials "
                    "via source and balance formulations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, run_dir=False):
        if config:
            p.add_argument("--config", help="run configuration file")
        if run_dir:
            p.add_argument("--run-dir", help="directory written by run-bidomain "
                           "(default: recompute the reference run)")
        p.add_argument("--force", action="store_true",
                       help="overwrite existing outputs")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (results are identical for any value)")

    p = sub.add_parser("mesh-gen", help="generate a disk-in-disk mesh")
    p.add_argument("--r-heart", type=float, required=True)
    p.add_argument("--r-torso", type=float, required=True)
    p.add_argument("--rings", type=int, required=True)
    p.add_argument("--sectors", type=int, required=True)
    p.add_argument("--torso-rings", type=int, default=None)
    p.add_argument("--out", required=True)
    common(p, config=False)
    p.set_defaults(func=cmd_mesh_gen)

    p = sub.add_parser("ms0d", help="solve the 0D ionic model")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--T", type=float, default=330.0)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_ms0d)

    p = sub.add_parser("run-bidomain", help="run the reference solver")
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_run_bidomain)

    p = sub.add_parser("activation", help="extract the activation map")
    p.add_argument("--v", required=True, help="fields_v.csv from a run")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    common(p, config=False)
    p.set_defaults(func=cmd_activation)

    p = sub.add_parser("solve-f1", help="source-formulation potentials")
    p.add_argument("--recipe", default="recorded",
                   help="one of: " + ", ".join(RECIPES))
    p.add_argument("--out", required=True)
    common(p, run_dir=True)
    p.set_defaults(func=cmd_solve_f1)

    p = sub.add_parser("solve-f2", help="balance-formulation potentials")
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--out", required=True)
    common(p, run_dir=True)
    p.set_defaults(func=cmd_solve_f2)

    p = sub.add_parser("verify", help="RHS-recipe verification study")
    p.add_argument("--out", required=True)
    p.add_argument("--ionic-fit-out", default=None,
                   help="also write the reaction-fit curve CSV")
    common(p, run_dir=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep-eps", help="front-duration sweep")
    p.add_argument("--eps", default=None, help="grid as lo:hi:step or comma list")
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--out", required=True)
    common(p, run_dir=True)
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("noise-study", help="noise sensitivity study")
    p.add_argument("--eps", type=float, default=2.5)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--t", type=float, default=35.0)
    p.add_argument("--amplitudes", default=None, help="comma list of fractions")
    p.add_argument("--out", required=True)
    common(p, run_dir=True)
    p.set_defaults(func=cmd_noise_study)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
