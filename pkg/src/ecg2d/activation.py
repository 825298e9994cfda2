"""Activation-map extraction from transmembrane-voltage time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "ActivationMap",
    "compute_activation",
    "first_upward_crossing",
    "mean_front_speed",
]


@dataclass(frozen=True)
class ActivationMap:
    """First-crossing times psi per vertex; NaN marks unactivated vertices."""

    psi: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        self.psi.setflags(write=False)

    @property
    def activated(self):
        return np.isfinite(self.psi)

    def min(self):
        return float(np.nanmin(self.psi))

    def max(self):
        return float(np.nanmax(self.psi))


def first_upward_crossing(spline, times, threshold, tol=1e-10):
    """Smallest root of spline - threshold with positive slope, or NaN.

    Brackets on the sample intervals, then bisects the cubic to `tol` in time.
    """
    vals = spline(times)
    below = vals < threshold
    for k in range(len(times) - 1):
        if below[k] and not below[k + 1]:
            lo, hi = times[k], times[k + 1]
            # bisection on the cubic within the bracketing interval
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if spline(mid) < threshold:
                    lo = mid
                else:
                    hi = mid
            root = 0.5 * (lo + hi)
            if spline(root, 1) > 0 or vals[k + 1] > vals[k]:
                return root
    return np.nan


def compute_activation(times, v_series, threshold=0.5) -> ActivationMap:
    """Extract the activation map from a sampled voltage history.

    Parameters
    ----------
    times : (n_steps,) array
        Uniform sample times.
    v_series : (n_steps, n_vertices) array
        Transmembrane voltage per step and vertex; each vertex must start
        below `threshold`.
    threshold : float
        Crossing level (default 0.5).

    Returns
    -------
    ActivationMap
        Per vertex, the first time the natural cubic spline through its trace
        crosses `threshold` upward; vertices that never cross get NaN.

    Raises
    ------
    ValueError
        If no vertex activates ("no propagation").
    """
    times = np.asarray(times, dtype=float)
    v_series = np.asarray(v_series, dtype=float)
    if v_series.shape[0] != times.shape[0]:
        raise ValueError("v_series rows must match times")
    if np.any(v_series[0] >= threshold):
        raise ValueError("some vertices start at or above the threshold")

    n_vertices = v_series.shape[1]
    psi = np.full(n_vertices, np.nan)
    # vertices whose trace never reaches the threshold cannot cross
    reaches = v_series.max(axis=0) >= threshold
    for i in np.flatnonzero(reaches):
        spline = CubicSpline(times, v_series[:, i], bc_type="natural")
        psi[i] = first_upward_crossing(spline, times, threshold)
    if not np.any(np.isfinite(psi)):
        raise ValueError("no propagation: all vertices unactivated")
    return ActivationMap(psi, threshold)


def mean_front_speed(mesh, psi):
    """Mean of 1/|grad psi| over heart triangles (piecewise P1 gradient).

    Triangles touching unactivated vertices, or with a vanishing gradient,
    are excluded from the statistic.
    """
    from .mesh import Region  # local import to keep module load light

    psi = np.asarray(getattr(psi, "psi", psi), dtype=float)
    tri = mesh.triangles[mesh.regions == int(Region.HEART)]
    p = mesh.vertices[tri]
    f = psi[tri]
    twice_area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    gx = (f[:, 0] * (p[:, 1, 1] - p[:, 2, 1]) + f[:, 1] * (p[:, 2, 1] - p[:, 0, 1])
          + f[:, 2] * (p[:, 0, 1] - p[:, 1, 1])) / twice_area
    gy = (f[:, 0] * (p[:, 2, 0] - p[:, 1, 0]) + f[:, 1] * (p[:, 0, 0] - p[:, 2, 0])
          + f[:, 2] * (p[:, 1, 0] - p[:, 0, 0])) / twice_area
    g = np.hypot(gx, gy)
    ok = np.isfinite(g) & (g > 0)
    if not ok.any():
        raise ValueError("no triangle with a finite activation gradient")
    return float(np.mean(1.0 / g[ok]))
