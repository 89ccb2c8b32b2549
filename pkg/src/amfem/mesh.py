"""Conforming triangular meshes with newest-vertex bisection.

Storage convention: triangle vertices (v0, v1, v2) are counterclockwise
and the refinement edge is always (v0, v1), i.e. local edge 2; the peak
(newest vertex) is v2.  Bisecting (a, b, c) at the midpoint m of (a, b)
yields children (c, a, m) and (b, c, m), which preserves both the
orientation and the convention, so a single vertex ordering encodes the
whole newest-vertex rule.

Meshes are immutable after construction; `refine` returns a new mesh.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

DOMAINS = ("unit-square", "square", "lshape")


class MeshError(Exception):
    """Invalid mesh topology, geometry, or refinement request."""


class Mesh:
    """Triangulation with edge topology and refinement bookkeeping.

    Attributes
    ----------
    verts : (nv, 2) float array
    tris : (nt, 3) int array, counterclockwise, refinement edge = (v0, v1)
    ancestor : (nt,) id of the containing element of the initial mesh
    generation : (nt,) number of bisections separating a triangle from T0
    prev_ids : (nt,) id in the mesh this one was refined from (self for T0)
    level : refinement-loop counter k
    edges : (ne, 2) vertex pairs with v0 < v1, lexicographically ordered
    tri_edges : (nt, 3) edge ids; local edge i is opposite vertex i
    edge_tris : (ne, 2) adjacent triangles (ascending, -1 when boundary)
    edge_normal : (ne, 2) unit normal, fixed at creation, pointing out of
        edge_tris[:, 0] (domain-outward on the boundary)
    """

    def __init__(self, verts, tris, ancestor=None, generation=None,
                 prev_ids=None, level=0, _skip_normalize=False):
        verts = np.ascontiguousarray(verts, dtype=float)
        tris = np.ascontiguousarray(tris, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("verts must be (nv, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("tris must be (nt, 3)")
        if not np.isfinite(verts).all():
            raise MeshError("vertex coordinates must be finite")
        if not _skip_normalize:
            tris = _normalize_tris(verts, tris)
        self.verts = verts
        self.tris = tris
        nt = len(tris)
        self.ancestor = (np.arange(nt) if ancestor is None
                         else np.asarray(ancestor, dtype=np.int64))
        self.generation = (np.zeros(nt, dtype=np.int64) if generation is None
                           else np.asarray(generation, dtype=np.int64))
        self.prev_ids = (np.arange(nt) if prev_ids is None
                         else np.asarray(prev_ids, dtype=np.int64))
        self.level = int(level)
        self._build_geometry()
        self._build_edges()
        self._vertex_tris = None

    # -- construction helpers -------------------------------------------------

    def _build_geometry(self):
        p = self.verts[self.tris]  # (nt, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if (self.area <= 0).any():
            raise MeshError("triangles must be counterclockwise with positive area")
        lmax = np.sqrt(
            np.maximum.reduce([
                ((p[:, 1] - p[:, 0]) ** 2).sum(1),
                ((p[:, 2] - p[:, 1]) ** 2).sum(1),
                ((p[:, 0] - p[:, 2]) ** 2).sum(1),
            ])
        )
        if (self.area <= 1e-14 * lmax**2).any():
            bad = int(np.argmax(self.area <= 1e-14 * lmax**2))
            raise MeshError(f"degenerate triangle {bad}")
        self.h = np.sqrt(self.area)  # h_K = |K|^(1/2) in 2D
        self.centroid = p.mean(axis=1)

    def _build_edges(self):
        nt = len(self.tris)
        t = self.tris
        # local edge i opposite vertex i
        raw = np.stack(
            [t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1
        ).reshape(-1, 2)
        raw_sorted = np.sort(raw, axis=1)
        edges, inv = np.unique(raw_sorted, axis=0, return_inverse=True)
        inv = inv.reshape(nt, 3)
        self.edges = edges
        self.tri_edges = inv
        ne = len(edges)

        flat_edge = inv.ravel()
        flat_tri = np.repeat(np.arange(nt), 3)
        order = np.lexsort((flat_tri, flat_edge))
        fe = flat_edge[order]
        ft = flat_tri[order]
        first = np.ones(len(fe), dtype=bool)
        first[1:] = fe[1:] != fe[:-1]
        counts = np.bincount(fe, minlength=ne)
        if counts.max() > 2 or counts.min() < 1:
            raise MeshError("non-conforming connectivity: edge shared by >2 triangles")
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        edge_tris[fe[first], 0] = ft[first]
        second = ~first
        edge_tris[fe[second], 1] = ft[second]
        self.edge_tris = edge_tris
        self.boundary_edge = edge_tris[:, 1] < 0

        va = self.verts[edges[:, 0]]
        vb = self.verts[edges[:, 1]]
        tvec = vb - va
        self.edge_len = np.sqrt((tvec**2).sum(1))
        n = np.column_stack([tvec[:, 1], -tvec[:, 0]]) / self.edge_len[:, None]
        mid = 0.5 * (va + vb)
        outward = ((mid - self.centroid[edge_tris[:, 0]]) * n).sum(1)
        n[outward < 0] *= -1.0
        self.edge_normal = n

        # neighbor across each local edge (-1 on the boundary)
        et = edge_tris[self.tri_edges]  # (nt, 3, 2)
        own = np.arange(nt)[:, None]
        self.neighbors = np.where(et[:, :, 0] == own, et[:, :, 1], et[:, :, 0])

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.verts)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.tris)

    def dof_signs(self):
        """sign(K, local edge) = +1 iff the fixed edge normal points out of K."""
        return np.where(
            self.edge_tris[self.tri_edges, 0] == np.arange(len(self.tris))[:, None],
            1.0,
            -1.0,
        )

    def vertex_tris(self):
        """CSR-style vertex->triangle incidence: (offsets, tri ids)."""
        if self._vertex_tris is None:
            flat = self.tris.ravel()
            order = np.argsort(flat, kind="stable")
            tids = np.repeat(np.arange(len(self.tris)), 3)[order]
            counts = np.bincount(flat, minlength=self.n_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._vertex_tris = (offsets, tids)
        return self._vertex_tris

    def min_angles(self):
        """Minimum interior angle of each triangle (radians)."""
        p = self.verts[self.tris]
        angles = np.empty((len(self.tris), 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = (a * b).sum(1) / np.sqrt((a**2).sum(1) * (b**2).sum(1))
            angles[:, i] = np.arccos(np.clip(cosv, -1.0, 1.0))
        return angles.min(axis=1)


def _normalize_tris(verts, tris):
    """Orient counterclockwise and rotate so the longest edge is (v0, v1)."""
    tris = tris.copy()
    p = verts[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    flip = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    p = verts[tris]
    # squared lengths of local edges 0:(v1,v2) 1:(v2,v0) 2:(v0,v1)
    l0 = ((p[:, 2] - p[:, 1]) ** 2).sum(1)
    l1 = ((p[:, 0] - p[:, 2]) ** 2).sum(1)
    l2 = ((p[:, 1] - p[:, 0]) ** 2).sum(1)
    longest = np.argmax(np.column_stack([l0, l1, l2]), axis=1)
    rot0 = longest == 0  # (v1, v2, v0)
    rot1 = longest == 1  # (v2, v0, v1)
    tris[rot0] = tris[rot0][:, [1, 2, 0]]
    tris[rot1] = tris[rot1][:, [2, 0, 1]]
    return tris


def build_initial(domain: str, resolution: int = 1) -> Mesh:
    """Structured initial mesh of a predefined domain.

    Every cell of a (2*resolution)^2 grid over the bounding box is split by
    the diagonal through its corner nearest the origin, so re-entrant or
    interface corners at the origin are mesh vertices and every initial
    triangle is right-angled with the hypotenuse as refinement edge.
    """
    if domain not in DOMAINS:
        raise MeshError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    n = 2 * int(resolution)
    if resolution < 1:
        raise MeshError("resolution must be >= 1")
    if domain == "unit-square":
        lo, hi = 0.0, 1.0
    else:
        lo, hi = -1.0, 1.0
    xs = np.linspace(lo, hi, n + 1)
    ys = np.linspace(lo, hi, n + 1)

    def in_domain(cx, cy):
        if domain == "lshape":
            # {(-1,1)x(0,1)} U {(-1,0)x(-1,0)}
            return (cy > 0) or (cx < 0 and cy < 0)
        return True

    vid = {}
    coords = []

    def node(i, j):
        key = (i, j)
        if key not in vid:
            vid[key] = len(coords)
            coords.append((xs[i], ys[j]))
        return vid[key]

    tris = []
    for j in range(n):
        for i in range(n):
            cx = 0.5 * (xs[i] + xs[i + 1])
            cy = 0.5 * (ys[j] + ys[j + 1])
            if not in_domain(cx, cy):
                continue
            bl = node(i, j)
            br = node(i + 1, j)
            tr = node(i + 1, j + 1)
            tl = node(i, j + 1)
            if cx * cy > 0:  # diagonal bl-tr
                tris.append((tr, bl, br))
                tris.append((bl, tr, tl))
            else:  # diagonal br-tl
                tris.append((br, tl, bl))
                tris.append((tl, br, tr))
    return Mesh(np.array(coords), np.array(tris))


def _bisect_pass(mesh: Mesh, marked: np.ndarray):
    """One bisection sweep: mark refinement edges, close, split.

    Returns (child mesh, parent ids).  Conformity holds because after the
    closure every marked edge is bisected inside each adjacent triangle.
    """
    te = mesh.tri_edges
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[te[marked, 2]] = True
    while True:
        need = edge_marked[te].any(axis=1) & ~edge_marked[te[:, 2]]
        if not need.any():
            break
        edge_marked[te[need, 2]] = True

    marked_edges = np.flatnonzero(edge_marked)
    mid_vid = np.full(mesh.n_edges, -1, dtype=np.int64)
    mid_vid[marked_edges] = mesh.n_vertices + np.arange(len(marked_edges))
    mids = 0.5 * (
        mesh.verts[mesh.edges[marked_edges, 0]]
        + mesh.verts[mesh.edges[marked_edges, 1]]
    )
    verts = np.vstack([mesh.verts, mids])

    m0 = edge_marked[te[:, 0]]
    m1 = edge_marked[te[:, 1]]
    m2 = edge_marked[te[:, 2]]
    nchild = 1 + m2.astype(np.int64) + (m2 & m0) + (m2 & m1)
    offs = np.concatenate([[0], np.cumsum(nchild)])
    total = offs[-1]

    tris = np.empty((total, 3), dtype=np.int64)
    gen = np.empty(total, dtype=np.int64)
    parent = np.empty(total, dtype=np.int64)

    a, b, c = mesh.tris[:, 0], mesh.tris[:, 1], mesh.tris[:, 2]
    M0, M1, M2 = mid_vid[te[:, 0]], mid_vid[te[:, 1]], mid_vid[te[:, 2]]
    g = mesh.generation

    def put(sel, slot, v0, v1, v2, dg):
        idx = offs[:-1][sel] + slot
        tris[idx, 0] = v0[sel]
        tris[idx, 1] = v1[sel]
        tris[idx, 2] = v2[sel]
        gen[idx] = g[sel] + dg
        parent[idx] = np.flatnonzero(sel)

    keep = ~m2
    put(keep, 0, a, b, c, 0)

    only2 = m2 & ~m0 & ~m1
    put(only2, 0, c, a, M2, 1)
    put(only2, 1, b, c, M2, 1)

    with1 = m2 & m1 & ~m0  # first child bisected again across (c, a)
    put(with1, 0, M2, c, M1, 2)
    put(with1, 1, a, M2, M1, 2)
    put(with1, 2, b, c, M2, 1)

    with0 = m2 & m0 & ~m1  # second child bisected again across (b, c)
    put(with0, 0, c, a, M2, 1)
    put(with0, 1, M2, b, M0, 2)
    put(with0, 2, c, M2, M0, 2)

    allm = m2 & m0 & m1
    put(allm, 0, M2, c, M1, 2)
    put(allm, 1, a, M2, M1, 2)
    put(allm, 2, M2, b, M0, 2)
    put(allm, 3, c, M2, M0, 2)

    child = Mesh(
        verts,
        tris,
        ancestor=mesh.ancestor[parent],
        generation=gen,
        prev_ids=parent,
        level=mesh.level,
        _skip_normalize=True,
    )
    return child, parent


def refine(mesh: Mesh, marked, b: int = 1) -> Mesh:
    """Bisect every marked triangle at least b times, then close to conformity.

    The returned mesh's `prev_ids` maps its triangles back to the input
    mesh, so descendants of the marked set can be identified.
    """
    if b < 1:
        raise MeshError("b must be >= 1")
    ids = np.unique(np.asarray(list(marked), dtype=np.int64)) if len(marked) else \
        np.empty(0, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= mesh.n_triangles):
        raise MeshError("invalid triangle id in marked set")
    if ids.size == 0:
        return mesh
    cur = np.zeros(mesh.n_triangles, dtype=bool)
    cur[ids] = True
    origin = np.arange(mesh.n_triangles)
    out = mesh
    for _ in range(b):
        out, parent = _bisect_pass(out, np.flatnonzero(cur))
        origin = origin[parent]
        cur = cur[parent]
    return Mesh(
        out.verts,
        out.tris,
        ancestor=out.ancestor,
        generation=out.generation,
        prev_ids=origin,
        level=mesh.level + 1,
        _skip_normalize=True,
    )


def shape_regularity(mesh: Mesh) -> float:
    """Minimum interior angle over all triangles (radians)."""
    return float(mesh.min_angles().min())


def patches(mesh: Mesh):
    """Edge patches omega_sigma and element patches omega_K.

    omega_sigma: list over edges of adjacent-triangle id arrays (size 1-2).
    omega_K: list over triangles of K plus its side neighbors.
    """
    omega_sigma = [row[row >= 0] for row in mesh.edge_tris]
    omega_k = []
    for t in range(mesh.n_triangles):
        nbr = mesh.neighbors[t]
        omega_k.append(np.unique(np.concatenate(([t], nbr[nbr >= 0]))))
    return omega_sigma, omega_k


def write_vtk(mesh: Mesh, path, cell_data=None, title="amfem mesh"):
    """Write legacy ASCII VTK (UNSTRUCTURED_GRID) with optional CELL_DATA."""
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines.extend(f"{x:.17g} {y:.17g} 0" for x, y in mesh.verts)
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines.extend(f"3 {t0} {t1} {t2}" for t0, t1, t2 in mesh.tris)
    lines.append(f"CELL_TYPES {nt}")
    lines.extend("5" for _ in range(nt))
    if cell_data:
        lines.append(f"CELL_DATA {nt}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            if len(values) != nt:
                raise MeshError(f"cell data {name!r} has wrong length")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.17g}" for v in values)
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text: str):
    """Write via a temporary file in the same directory plus rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
