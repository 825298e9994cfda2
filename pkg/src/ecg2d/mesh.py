"""Two-region triangulations of a circular heart embedded in a circular torso.

The mesh is the spatial substrate for every solver in the package: triangles
carry a region tag (heart or torso), the torso rim carries boundary edges,
and the heart/torso interface is recovered from the triangle tags.  Meshes
are immutable after construction and safe to share between concurrent runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

__all__ = [
    "Region",
    "BoundaryTag",
    "TriMesh",
    "MeshFormatError",
    "generate_disk_in_disk",
    "load_mesh",
    "save_mesh",
]


class Region(IntEnum):
    HEART = 1
    TORSO = 2


class BoundaryTag(IntEnum):
    TORSO_OUTER = 1


class MeshFormatError(ValueError):
    """Raised when a mesh file is malformed; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TriMesh:
    """Triangulated two-region geometry.

    Attributes
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates, nondimensional length.
    triangles : (nt, 3) int array
        Vertex index triples, counterclockwise.
    regions : (nt,) int array
        Per-triangle region tag (``Region.HEART`` or ``Region.TORSO``).
    boundary_edges : (nb, 2) int array
        Vertex index pairs on tagged boundaries.
    boundary_tags : (nb,) int array
        Tag per boundary edge (``BoundaryTag.TORSO_OUTER``).
    interface_edges : (ni, 2) int array
        Derived: edges shared by one HEART and one TORSO triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    interface_edges: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("vertices", "triangles", "regions", "boundary_edges", "boundary_tags"):
            getattr(self, name).setflags(write=False)
        if self.interface_edges is None:
            object.__setattr__(self, "interface_edges", _find_interface_edges(self))
        self.interface_edges.setflags(write=False)
        _validate(self)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def triangle_areas(self):
        """Signed areas of all triangles (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def region_triangles(self, region):
        return np.flatnonzero(self.regions == int(region))

    def region_vertices(self, region):
        """Sorted indices of vertices incident to at least one triangle of `region`."""
        return np.unique(self.triangles[self.regions == int(region)])

    def edge_lengths(self):
        """Lengths of all unique triangle edges."""
        e = _all_edges(self.triangles)
        d = self.vertices[e[:, 0]] - self.vertices[e[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def max_edge_length(self):
        return float(self.edge_lengths().max())


def _all_edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _find_interface_edges(mesh):
    """Edges with exactly one HEART and one TORSO incident triangle."""
    tri = mesh.triangles
    edges = np.sort(
        np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1
    )
    owner = np.tile(mesh.regions, 3)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    owner = owner[order]
    out = []
    i = 0
    n = len(edges)
    while i < n:
        j = i + 1
        while j < n and np.array_equal(edges[j], edges[i]):
            j += 1
        if j - i == 2 and owner[i] != owner[i + 1]:
            out.append(edges[i])
        i = j
    if not out:
        return np.empty((0, 2), dtype=tri.dtype)
    return np.array(out, dtype=tri.dtype)


def _edge_connected(triangles, subset):
    """True if the triangle subset is connected through shared edges."""
    if len(subset) == 0:
        return True
    edge_map = {}
    for local, t in enumerate(subset):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((triangles[t, a], triangles[t, b])))
            edge_map.setdefault(key, []).append(local)
    adj = [[] for _ in subset]
    for owners in edge_map.values():
        if len(owners) == 2:
            adj[owners[0]].append(owners[1])
            adj[owners[1]].append(owners[0])
    seen = np.zeros(len(subset), dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())


def _validate(mesh):
    nv = mesh.n_vertices
    tri = mesh.triangles
    if tri.size and (tri.min() < 0 or tri.max() >= nv):
        raise ValueError("triangle vertex index out of range")
    areas = mesh.triangle_areas()
    if np.any(areas <= 0):
        bad = int(np.argmax(areas <= 0))
        raise ValueError(f"triangle {bad} has non-positive area {areas[bad]:g}")
    if not np.all(np.isin(mesh.regions, (int(Region.HEART), int(Region.TORSO)))):
        raise ValueError("unknown region tag")
    if not np.all(np.isin(mesh.boundary_tags, (int(BoundaryTag.TORSO_OUTER),))):
        raise ValueError("unknown boundary tag")

    # Each TORSO_OUTER edge must belong to exactly one triangle.
    edges = np.sort(
        np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1
    )
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    count_of = {tuple(e): c for e, c in zip(uniq, counts)}
    for k, (a, b) in enumerate(np.sort(mesh.boundary_edges, axis=1)):
        c = count_of.get((int(a), int(b)), 0)
        if c != 1:
            raise ValueError(
                f"boundary edge ({a},{b}) belongs to {c} triangles, expected 1"
            )

    for region in (Region.HEART, Region.TORSO):
        subset = mesh.region_triangles(region)
        if len(subset) and not _edge_connected(tri, subset):
            raise ValueError(f"{region.name} triangle set is not edge-connected")


def generate_disk_in_disk(r_heart, r_torso, n_rings, n_sectors, torso_rings=None):
    """Concentric polar-grid triangulation of a circular heart in a circular torso.

    One vertex ring lies exactly on radius `r_heart`, so the heart/torso
    interface is mesh-conforming.  Ring radii are uniform within each region;
    quads between consecutive rings are split along alternating diagonals.

    Parameters
    ----------
    r_heart, r_torso : float
        Region radii, 0 < r_heart < r_torso.
    n_rings : int
        Number of vertex rings inside the heart (>= 2).
    n_sectors : int
        Number of angular sectors (>= 8), shared by all rings.
    torso_rings : int, optional
        Number of rings across the torso annulus.  Default keeps the heart's
        radial spacing (rounded), matching a uniformly refined mesh.

    Returns
    -------
    TriMesh
    """
    if not (0 < r_heart < r_torso):
        raise ValueError(f"need 0 < r_heart < r_torso, got {r_heart} >= {r_torso}")
    if n_rings < 2:
        raise ValueError(f"n_rings must be >= 2, got {n_rings}")
    if n_sectors < 8:
        raise ValueError(f"n_sectors must be >= 8, got {n_sectors}")
    dr = r_heart / n_rings
    if torso_rings is None:
        torso_rings = max(1, round((r_torso - r_heart) / dr))
    elif torso_rings < 1:
        raise ValueError(f"torso_rings must be >= 1, got {torso_rings}")

    radii = np.concatenate(
        [
            r_heart * np.arange(1, n_rings + 1) / n_rings,
            r_heart + (r_torso - r_heart) * np.arange(1, torso_rings + 1) / torso_rings,
        ]
    )
    radii[n_rings - 1] = r_heart  # interface ring exact
    radii[-1] = r_torso

    theta = 2.0 * np.pi * np.arange(n_sectors) / n_sectors
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    verts = [np.zeros((1, 2))]
    for r in radii:
        verts.append(np.column_stack([r * cos_t, r * sin_t]))
    vertices = np.concatenate(verts)

    def vid(ring, sector):
        # ring 0 is the center vertex
        if ring == 0:
            return 0
        return 1 + (ring - 1) * n_sectors + (sector % n_sectors)

    tris = []
    # center fan
    for j in range(n_sectors):
        tris.append((0, vid(1, j), vid(1, j + 1)))
    # annular strips: CCW quad (a, d, c, b) split along alternating diagonals
    n_total_rings = len(radii)
    for k in range(1, n_total_rings):
        for j in range(n_sectors):
            a = vid(k, j)
            b = vid(k, j + 1)
            c = vid(k + 1, j + 1)
            d = vid(k + 1, j)
            if (k + j) % 2 == 0:
                tris.append((a, d, c))
                tris.append((a, c, b))
            else:
                tris.append((a, d, b))
                tris.append((d, c, b))
    triangles = np.array(tris, dtype=np.int64)

    centroids = vertices[triangles].mean(axis=1)
    cr = np.hypot(centroids[:, 0], centroids[:, 1])
    regions = np.where(cr < r_heart, int(Region.HEART), int(Region.TORSO)).astype(np.int64)

    outer = n_total_rings
    boundary_edges = np.array(
        [(vid(outer, j), vid(outer, j + 1)) for j in range(n_sectors)], dtype=np.int64
    )
    boundary_tags = np.full(n_sectors, int(BoundaryTag.TORSO_OUTER), dtype=np.int64)

    return TriMesh(vertices, triangles, regions, boundary_edges, boundary_tags)


def save_mesh(mesh, path):
    """Write a mesh in the package's ASCII format (17 significant digits)."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    for (i, j, k), reg in zip(mesh.triangles, mesh.regions):
        lines.append(f"{i} {j} {k} {reg}")
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"{i} {j} {tag}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a mesh from the ASCII format written by :func:`save_mesh`.

    Raises
    ------
    MeshFormatError
        On malformed counts, out-of-range indices, or unknown tags; the
        message names the offending line.
    """
    with open(path) as f:
        raw = f.read().splitlines()

    def fields(lineno):
        if lineno > len(raw):
            raise MeshFormatError("unexpected end of file", lineno)
        return raw[lineno - 1].split()

    head = fields(1)
    if len(head) != 3:
        raise MeshFormatError("header must be 'nv nt nb'", 1)
    try:
        nv, nt, nb = (int(v) for v in head)
    except ValueError:
        raise MeshFormatError("header counts must be integers", 1) from None
    if nv < 3 or nt < 1 or nb < 0:
        raise MeshFormatError(f"implausible counts nv={nv} nt={nt} nb={nb}", 1)

    vertices = np.empty((nv, 2))
    for i in range(nv):
        ln = 2 + i
        parts = fields(ln)
        if len(parts) != 2:
            raise MeshFormatError("vertex line must be 'x y'", ln)
        try:
            vertices[i] = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise MeshFormatError("vertex coordinates must be numbers", ln) from None

    triangles = np.empty((nt, 3), dtype=np.int64)
    regions = np.empty(nt, dtype=np.int64)
    for i in range(nt):
        ln = 2 + nv + i
        parts = fields(ln)
        if len(parts) != 4:
            raise MeshFormatError("triangle line must be 'i j k region'", ln)
        try:
            vals = [int(v) for v in parts]
        except ValueError:
            raise MeshFormatError("triangle fields must be integers", ln) from None
        if any(v < 0 or v >= nv for v in vals[:3]):
            raise MeshFormatError(
                f"triangle vertex index out of range [0, {nv})", ln
            )
        if vals[3] not in (int(Region.HEART), int(Region.TORSO)):
            raise MeshFormatError(f"unknown region tag {vals[3]}", ln)
        triangles[i] = vals[:3]
        regions[i] = vals[3]

    boundary_edges = np.empty((nb, 2), dtype=np.int64)
    boundary_tags = np.empty(nb, dtype=np.int64)
    for i in range(nb):
        ln = 2 + nv + nt + i
        parts = fields(ln)
        if len(parts) != 3:
            raise MeshFormatError("boundary line must be 'i j tag'", ln)
        try:
            vals = [int(v) for v in parts]
        except ValueError:
            raise MeshFormatError("boundary fields must be integers", ln) from None
        if any(v < 0 or v >= nv for v in vals[:2]):
            raise MeshFormatError(f"boundary vertex index out of range [0, {nv})", ln)
        if vals[2] != int(BoundaryTag.TORSO_OUTER):
            raise MeshFormatError(f"unknown boundary tag {vals[2]}", ln)
        boundary_edges[i] = vals[:2]
        boundary_tags[i] = vals[2]

    return TriMesh(vertices, triangles, regions, boundary_edges, boundary_tags)
