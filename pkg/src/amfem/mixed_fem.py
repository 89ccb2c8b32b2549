"""Lowest-order Raviart-Thomas x piecewise-constant discretization.

Flux degrees of freedom are the constant normal traces on edges, taken
with respect to the fixed global edge normals, so normal continuity of
the discrete flux holds by construction.  The local basis on K for its
edge sigma (opposite vertex x_opp) is

    psi_sigma(x) = sign(K, sigma) * |sigma| / (2 |K|) * (x - x_opp),

whose normal trace on sigma equals sign(K, sigma) relative to K's
outward normal, i.e. +1 relative to the global normal from either side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .problem import CoefficientVariants, ProblemSpec
from .quadrature import SEG3_W, SEG3_X, TRI7_BARY, TRI7_W, points_from_bary, seg_points


@dataclass(eq=False)
class DofMap:
    """Global numbering: one flux DOF per edge, one pressure DOF per triangle."""

    n_u: int
    n_p: int
    signs: np.ndarray  # (nt, 3) orientation of each local edge

    @property
    def n_total(self):
        return self.n_u + self.n_p


@dataclass(eq=False)
class MixedSolution:
    """Edge normal-flux coefficients and per-element pressure constants."""

    u_coeffs: np.ndarray
    p_vals: np.ndarray


@dataclass(eq=False)
class AssembledSystem:
    """Sparse saddle-point system [[A, -B^T], [B - C, D]] and right-hand side."""

    matrix: "object"  # linsolve.SparseMatrix
    rhs: np.ndarray
    n_u: int
    n_p: int
    dofmap: DofMap
    mesh: Mesh


def _edge_len_local(mesh: Mesh) -> np.ndarray:
    return mesh.edge_len[mesh.tri_edges]


def rt0_basis(mesh: Mesh, tri: int, local_edge: int, points) -> np.ndarray:
    """Signed global RT0 basis of a triangle's edge, evaluated at points (m, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sign = mesh.dof_signs()[tri, local_edge]
    x_opp = mesh.verts[mesh.tris[tri, local_edge]]
    ell = mesh.edge_len[mesh.tri_edges[tri, local_edge]]
    return sign * ell / (2.0 * mesh.area[tri]) * (pts - x_opp)


def rt0_div(mesh: Mesh, tri: int, local_edge: int) -> float:
    """Constant divergence of the signed basis on its triangle."""
    sign = mesh.dof_signs()[tri, local_edge]
    ell = mesh.edge_len[mesh.tri_edges[tri, local_edge]]
    return float(sign * ell / mesh.area[tri])


def _basis_at(mesh: Mesh, bary: np.ndarray):
    """Signed basis values of all local edges at quadrature points.

    Returns (pts (nt, q, 2), psi (nt, q, 3, 2)).
    """
    coords = mesh.verts[mesh.tris]
    pts = points_from_bary(coords, bary)
    ell = _edge_len_local(mesh)
    scale = mesh.dof_signs() * ell / (2.0 * mesh.area[:, None])  # (nt, 3)
    psi = scale[:, None, :, None] * (pts[:, :, None, :] - coords[:, None, :, :])
    return pts, psi


def assemble(mesh: Mesh, spec: ProblemSpec, var: CoefficientVariants) -> AssembledSystem:
    """Assemble the centered mixed scheme with natural Dirichlet data.

    Blocks: A = weighted RT0 mass matrix with S^{-1}; B the divergence
    matrix; C the convection coupling (S^{-1} psi . w, chi); D the
    reaction diagonal ((r + div w) chi, chi).  The Dirichlet datum enters
    the flux equation as G = -<g, psi.n> on boundary edges (3-point Gauss).
    """
    from .linsolve import SparseMatrix

    nt = mesh.n_triangles
    ne = mesh.n_edges
    signs = mesh.dof_signs()
    dofmap = DofMap(n_u=ne, n_p=nt, signs=signs)

    pts, psi = _basis_at(mesh, TRI7_BARY)
    sinv_psi = np.einsum("tde,tqie->tqid", var.Sinv, psi)
    a_loc = np.einsum("q,tqid,tqjd->tij", TRI7_W, psi, sinv_psi) * mesh.area[:, None, None]

    ell = _edge_len_local(mesh)
    b_loc = signs * ell  # integral of div(psi_j) over K

    wq_pts = var.w_at(pts)
    c_loc = np.einsum("q,tqjd,tqd->tj", TRI7_W, sinv_psi, wq_pts) * mesh.area[:, None]

    d_diag = (var.r + var.divw) * mesh.area

    fq = np.asarray(spec.f(pts[..., 0], pts[..., 1]), dtype=float)
    f_vec = mesh.area * np.einsum("q,tq->t", TRI7_W, fq)

    g_vec = np.zeros(ne)
    bnd = np.flatnonzero(mesh.boundary_edge)
    if bnd.size:
        a = mesh.verts[mesh.edges[bnd, 0]]
        b = mesh.verts[mesh.edges[bnd, 1]]
        gp = seg_points(a, b, SEG3_X)
        gv = np.asarray(spec.g(gp[..., 0], gp[..., 1]), dtype=float)
        g_vec[bnd] = -0.5 * mesh.edge_len[bnd] * np.einsum("q,eq->e", SEG3_W, gv)

    te = mesh.tri_edges
    rows_a = np.repeat(te, 3, axis=1).ravel()
    cols_a = np.tile(te, (1, 3)).ravel()
    tri_dof = ne + np.arange(nt)

    rows = np.concatenate([
        rows_a,
        np.repeat(tri_dof, 3),          # B - C block rows
        te.ravel(),                     # -B^T rows
        tri_dof,                        # D diagonal
    ])
    cols = np.concatenate([
        cols_a,
        te.ravel(),
        np.repeat(tri_dof, 3),
        tri_dof,
    ])
    vals = np.concatenate([
        a_loc.ravel(),
        (b_loc - c_loc).ravel(),
        -b_loc.ravel(),
        d_diag,
    ])

    n = ne + nt
    matrix = SparseMatrix.from_triplets(rows, cols, vals, (n, n))
    rhs = np.concatenate([g_vec, f_vec])
    return AssembledSystem(matrix=matrix, rhs=rhs, n_u=ne, n_p=nt, dofmap=dofmap, mesh=mesh)


def solution_affine(mesh: Mesh, solution: MixedSolution):
    """Per-element affine representation u_h(x) = a_u + b_u * x."""
    te = mesh.tri_edges
    c = mesh.dof_signs() * solution.u_coeffs[te] * mesh.edge_len[te] / (
        2.0 * mesh.area[:, None]
    )
    b_u = c.sum(axis=1)
    a_u = -np.einsum("ti,tid->td", c, mesh.verts[mesh.tris])
    return a_u, b_u


@dataclass(eq=False)
class Postprocessed:
    """Per-element quadratic reconstruction and vertex-averaged display field.

    On each element: ptilde(x) = c0 + lin.x + qcoef * x.Sinv.x, chosen so
    grad(ptilde) = -S^{-1} u_h and the element mean equals p_h.
    """

    c0: np.ndarray
    lin: np.ndarray
    qcoef: np.ndarray
    Sinv: np.ndarray
    vertex_values: np.ndarray

    def evaluate(self, tri_ids: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Evaluate ptilde on elements tri_ids (n,) at points pts (n, m, 2)."""
        sinv = self.Sinv[tri_ids]
        quad = np.einsum("tqd,tde,tqe->tq", pts, sinv, pts)
        linp = np.einsum("td,tqd->tq", self.lin[tri_ids], pts)
        return self.c0[tri_ids, None] + linp + self.qcoef[tri_ids, None] * quad


def postprocess(mesh: Mesh, spec: ProblemSpec, solution: MixedSolution) -> Postprocessed:
    """Quadratic displacement reconstruction plus the vertex-mean display field.

    The display value at a vertex is the arithmetic mean of p_h over the
    elements sharing that vertex, matching the visualization rule used for
    the non-continuous piecewise-constant displacement.
    """
    from .problem import variants

    var = variants(mesh, spec)
    a_u, b_u = solution_affine(mesh, solution)
    lin = -np.einsum("tde,te->td", var.Sinv, a_u)
    qcoef = -0.5 * b_u
    pts = points_from_bary(mesh.verts[mesh.tris], TRI7_BARY)
    quad = np.einsum("tqd,tde,tqe->tq", pts, var.Sinv, pts)
    linp = np.einsum("td,tqd->tq", lin, pts)
    mean_wo_c0 = np.einsum("q,tq->t", TRI7_W, linp + qcoef[:, None] * quad)
    c0 = solution.p_vals - mean_wo_c0

    counts = np.bincount(mesh.tris.ravel(), minlength=mesh.n_vertices)
    sums = np.bincount(
        mesh.tris.ravel(),
        weights=np.repeat(solution.p_vals, 3),
        minlength=mesh.n_vertices,
    )
    vertex_values = sums / counts
    return Postprocessed(c0=c0, lin=lin, qcoef=qcoef, Sinv=var.Sinv,
                         vertex_values=vertex_values)


def l2_project(mesh: Mesh, fn, rule=None) -> np.ndarray:
    """Elementwise means of a function (projection onto piecewise constants)."""
    bary, wq = (TRI7_BARY, TRI7_W) if rule is None else rule
    pts = points_from_bary(mesh.verts[mesh.tris], bary)
    vals = np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float)
    return np.einsum("q,tq->t", wq, vals)


def conservation_defect(mesh: Mesh, spec: ProblemSpec, var: CoefficientVariants,
                        solution: MixedSolution) -> float:
    """Max elementwise defect of the discrete balance equation.

    Recomputed from the solution fields by quadrature (not from the matrix
    rows), normalized by max(1, |(f,1)_K|_inf).
    """
    a_u, b_u = solution_affine(mesh, solution)
    pts = points_from_bary(mesh.verts[mesh.tris], TRI7_BARY)
    u_h = a_u[:, None, :] + b_u[:, None, None] * pts
    sinv_u = np.einsum("tde,tqe->tqd", var.Sinv, u_h)
    conv = mesh.area * np.einsum("q,tqd,tqd->t", TRI7_W, sinv_u, var.w_at(pts))
    fq = np.asarray(spec.f(pts[..., 0], pts[..., 1]), dtype=float)
    f_int = mesh.area * np.einsum("q,tq->t", TRI7_W, fq)
    lhs = 2.0 * b_u * mesh.area - conv + (var.r + var.divw) * solution.p_vals * mesh.area
    scale = max(1.0, float(np.abs(f_int).max(initial=0.0)))
    return float(np.abs(lhs - f_int).max() / scale)
