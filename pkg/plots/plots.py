#!/usr/bin/env python3
"""Render the study figures from report and field CSVs.

Five figure kinds, one per invocation:

  eps_curve       error-vs-epsilon curves from a sweep report (red source
                  formulation, blue balance formulation, black voltage
                  mismatch; dashed horizontals for the 0D-trace front)
  noise_box       box glyphs of the noise study's per-realisation errors
  field_map       side-by-side nodal potential maps on the mesh
  activation_map  activation-time color map on the heart triangles
  ionic_fit       fitted cubic vs the reduced reaction, with recorded samples

Everything is drawn from CSV numbers; no physics is recomputed here, and the
renderer runs without the solver package installed.  Output images are
deterministic: fixed canvas, fonts, colormaps, and stripped PNG metadata.

Usage: plots.py --kind KIND --in CSV[,CSV] [--mesh MESHFILE] --out PNG
"""

import argparse
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("eps_curve", "noise_box", "field_map", "activation_map", "ionic_fit")

REPORT_COLUMNS = ["study", "formulation", "recipe", "front", "eps",
                  "noise_case", "amplitude", "seed", "time", "metric", "value"]

FIGSIZE = (8.0, 5.0)
DPI = 110
PNG_METADATA = {"Software": "plots.py"}

matplotlib.rcParams.update({
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "svg.hashsalt": "plots",
})


class MissingColumnError(ValueError):
    def __init__(self, column, path):
        self.column = column
        super().__init__(f"{path}: missing required column {column!r}")


def read_report(path):
    """Rows of a study report CSV as a list of dicts with typed values."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for col in REPORT_COLUMNS:
            if col not in header:
                raise MissingColumnError(col, path)
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in ("eps", "amplitude", "time", "value"):
                try:
                    row[key] = float(raw[key])
                except (TypeError, ValueError):
                    pass  # keep "", "ALL", or error markers as strings
            rows.append(row)
    return rows


def read_table(path, required):
    """Generic CSV with a header; returns dict of column -> list of strings."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumnError(col, path)
        cols = {c: [] for c in header}
        for raw in reader:
            for c in header:
                cols[c].append(raw[c])
    return cols


def read_mesh(path):
    """Vertices, triangles, and region tags from the mesh ASCII format."""
    with open(path) as f:
        tokens = f.read().split()
    it = iter(tokens)
    nv, nt, nb = int(next(it)), int(next(it)), int(next(it))
    vertices = np.array([[float(next(it)), float(next(it))] for _ in range(nv)])
    tris = np.empty((nt, 3), dtype=int)
    regions = np.empty(nt, dtype=int)
    for i in range(nt):
        tris[i] = (int(next(it)), int(next(it)), int(next(it)))
        regions[i] = int(next(it))
    return vertices, tris, regions


def read_field_rows(path):
    """Field CSV: rows of (time, vertex values...)."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return data[:, 0], data[:, 1:]


def select(rows, **eq):
    out = [r for r in rows if all(r[k] == v for k, v in eq.items())]
    return out


def _values(rows, **eq):
    return [r["value"] for r in select(rows, **eq)
            if isinstance(r["value"], float)]


# ---------------------------------------------------------------------------
# figure kinds


def prepare_eps_curve(rows):
    """Per-formulation space-time error vs epsilon, plus ms0d baselines."""
    metric = "rel_l1_boundary_spacetime"
    eps = sorted({r["eps"] for r in rows
                  if r["front"] == "heaviside" and isinstance(r["eps"], float)})
    if not eps:
        raise ValueError("no heaviside sweep rows in the report")
    series = {}
    for formulation in ("F1", "F2"):
        series[formulation] = [
            _values(rows, front="heaviside", eps=e, formulation=formulation,
                    time="ALL", metric=metric)[0] for e in eps]
    series["vtilde"] = [
        _values(rows, front="heaviside", eps=e, formulation="vtilde",
                metric="rel_l2_heart_spacetime_vtilde")[0] for e in eps]
    baselines = {}
    for formulation in ("F1", "F2"):
        vals = _values(rows, front="ms0d", formulation=formulation,
                       time="ALL", metric=metric)
        if vals:
            baselines[formulation] = vals[0]
    vals = _values(rows, front="ms0d", formulation="vtilde",
                   metric="rel_l2_heart_spacetime_vtilde")
    if vals:
        baselines["vtilde"] = vals[0]
    return np.array(eps), series, baselines


def render_eps_curve(rows, out):
    eps, series, baselines = prepare_eps_curve(rows)
    colors = {"F1": "tab:red", "F2": "tab:blue", "vtilde": "black"}
    labels = {"F1": "source formulation u1", "F2": "balance formulation u2",
              "vtilde": "front voltage mismatch"}
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for key in ("F1", "F2", "vtilde"):
        ax.semilogy(eps, series[key], "o-", color=colors[key],
                    label=labels[key])
        if key in baselines:
            ax.axhline(baselines[key], color=colors[key], linestyle="--",
                       linewidth=1.0, label=f"{labels[key]} (0D front)")
    ax.set_xlabel("front half-width epsilon")
    ax.set_ylabel("relative space-time error")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def prepare_noise_box(rows, amplitude=None):
    """Per-case realisation errors and the report's quartile rows."""
    cases = []
    for r in rows:
        if r["noise_case"] and r["noise_case"] not in cases:
            cases.append(r["noise_case"])
    if not cases:
        raise ValueError("no noise-case rows in the report")
    amplitudes = sorted({r["amplitude"] for r in rows
                         if isinstance(r["amplitude"], float)})
    if amplitude is None:
        amplitude = amplitudes[-1]
    data, quartiles = {}, {}
    for case in cases:
        errs = _values(rows, noise_case=case, amplitude=amplitude,
                       metric="rel_l2_torso")
        if not errs:
            raise ValueError(f"no realisation rows for case {case!r} "
                             f"at amplitude {amplitude}")
        data[case] = np.array(errs)
        quartiles[case] = tuple(
            _values(rows, noise_case=case, amplitude=amplitude, metric=m)[0]
            for m in ("q1", "median", "q3"))
    return amplitude, data, quartiles


def boxplot_stats(errs):
    """Quartiles and whiskers the way the boxes are drawn (linear percentile)."""
    q1, med, q3 = np.percentile(errs, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo = errs[errs >= q1 - 1.5 * iqr].min()
    hi = errs[errs <= q3 + 1.5 * iqr].max()
    fliers = errs[(errs < q1 - 1.5 * iqr) | (errs > q3 + 1.5 * iqr)]
    return {"q1": q1, "med": med, "q3": q3, "whislo": lo, "whishi": hi,
            "fliers": fliers}


def render_noise_box(rows, out, amplitude=None):
    amplitude, data, _ = prepare_noise_box(rows, amplitude)
    stats = []
    for case, errs in data.items():
        s = boxplot_stats(errs)
        s["label"] = case
        stats.append(s)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bxp(stats, showfliers=True)
    ax.set_ylabel("relative torso error")
    ax.set_title(f"noise amplitude {amplitude:g}")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def prepare_field_panels(paths, mesh_path, time=None):
    vertices, tris, _ = read_mesh(mesh_path)
    panels = []
    for path in paths:
        times, fields = read_field_rows(path)
        if time is None:
            k = len(times) - 1
        else:
            k = int(np.argmin(np.abs(times - time)))
        if fields.shape[1] != len(vertices):
            raise ValueError(
                f"{path}: {fields.shape[1]} columns but mesh has "
                f"{len(vertices)} vertices")
        panels.append((times[k], fields[k]))
    return vertices, tris, panels


def render_field_map(paths, mesh_path, out, time=None):
    vertices, tris, panels = prepare_field_panels(paths, mesh_path, time)
    vmax = max(np.abs(f).max() for _, f in panels)
    vmax = vmax if vmax > 0 else 1.0
    fig, axes = plt.subplots(1, len(panels), figsize=FIGSIZE, squeeze=False)
    for ax, path, (t, field) in zip(axes[0], paths, panels):
        tpc = ax.tripcolor(vertices[:, 0], vertices[:, 1], tris, field,
                           shading="gouraud", cmap="RdBu_r",
                           vmin=-vmax, vmax=vmax)
        ax.set_aspect("equal")
        ax.set_title(f"{path.split('/')[-1]}  t={t:g}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(tpc, ax=list(axes[0]), shrink=0.8)
    fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def render_activation_map(psi_path, mesh_path, out):
    cols = read_table(psi_path, required=("vertex_id", "psi"))
    psi = np.full(len(cols["psi"]), np.nan)
    for i, (vid, val) in enumerate(zip(cols["vertex_id"], cols["psi"])):
        psi[int(vid)] = float(val)
    vertices, tris, regions = read_mesh(mesh_path)
    heart = tris[regions == 1]
    # drop triangles with unactivated corners; unused vertices get a finite
    # placeholder so the color normalization stays clean
    ok = np.all(np.isfinite(psi[heart]), axis=1)
    finite = psi[np.isfinite(psi)]
    if finite.size == 0:
        raise ValueError(f"{psi_path}: no activated vertices to draw")
    vmin, vmax = float(finite.min()), float(finite.max())
    psi = np.nan_to_num(psi, nan=vmin)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    tpc = ax.tripcolor(vertices[:, 0], vertices[:, 1], heart[ok],
                       psi, shading="gouraud", cmap="viridis",
                       vmin=vmin, vmax=vmax)
    ax.set_aspect("equal")
    ax.set_title("activation time")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(tpc, ax=ax, label="time")
    fig.tight_layout()
    fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def render_ionic_fit(path, out):
    cols = read_table(path, required=("v", "series", "value"))
    v = np.array([float(x) for x in cols["v"]])
    val = np.array([float(x) for x in cols["value"]])
    series = np.array(cols["series"])
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for name, style, label in (("f_ms", "g-", "reduced reaction"),
                               ("f_int", "r-", "fitted cubic")):
        m = series == name
        if m.any():
            order = np.argsort(v[m])
            ax.plot(v[m][order], val[m][order], style, label=label)
    m = series == "f_ref"
    if m.any():
        ax.plot(v[m], val[m], "k*", markersize=5, label="recorded samples")
    ax.set_xlabel("transmembrane voltage v")
    ax.set_ylabel("membrane current")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


# ---------------------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="render study figures from CSV files")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="inputs", required=True,
                        help="input CSV path(s), comma separated")
    parser.add_argument("--mesh", help="mesh file (field/activation maps)")
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--time", type=float, default=None,
                        help="snapshot time for field maps (default: last)")
    parser.add_argument("--amplitude", type=float, default=None,
                        help="noise amplitude to plot (default: largest)")
    args = parser.parse_args(argv)
    paths = args.inputs.split(",")

    if args.kind == "eps_curve":
        render_eps_curve(read_report(paths[0]), args.out)
    elif args.kind == "noise_box":
        render_noise_box(read_report(paths[0]), args.out,
                         amplitude=args.amplitude)
    elif args.kind == "field_map":
        if not args.mesh:
            parser.error("field_map needs --mesh")
        render_field_map(paths, args.mesh, args.out, time=args.time)
    elif args.kind == "activation_map":
        if not args.mesh:
            parser.error("activation_map needs --mesh")
        render_activation_map(paths[0], args.mesh, args.out)
    else:
        render_ionic_fit(paths[0], args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
