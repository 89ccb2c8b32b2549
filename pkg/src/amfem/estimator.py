"""Weighted residual error indicators, oscillation, and diagnostics.

The elementwise indicator is

    eta_K^2 = D_K^2 h_K^2 |S^{-1} u_h|_K^2
            + alpha_K^2 h_K^2 |R_K|_K^2
            + sum_{edges of K} D_sigma^2 h_sigma |[gamma_t(S^{-1} u_h)]|_sigma^2

with the elementwise residual R_K = f - div(u_h) + (S^{-1}u_h).w
- (r + div w) p_h.  The edge sum runs over the interior sides of K: the
reported indicator values and the estimator-reduction argument both rest
on interior tangential jumps, and with inhomogeneous Dirichlet data a
one-sided boundary trace would measure boundary data rather than error.
`tangential_jump` itself is still defined on boundary edges (one-sided).
h_K is the square root of the element area and h_sigma the edge length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .mixed_fem import MixedSolution, l2_project, solution_affine
from .problem import CoefficientVariants, ProblemSpec, variants
from .quadrature import SEG2_W, SEG2_X, TRI7_BARY, TRI7_W, points_from_bary, seg_points


@dataclass(eq=False)
class EstimatorReport:
    """Per-element indicator decomposition and global aggregates."""

    term1: np.ndarray  # D_K^2 h_K^2 |S^{-1}u_h|^2
    term2: np.ndarray  # alpha_K^2 h_K^2 |R_K|^2
    term3: np.ndarray  # edge-jump sum
    eta_sq: np.ndarray
    osc_sq: np.ndarray
    edge_jump_sq: np.ndarray  # |[gamma_t(S^{-1}u_h)]|_sigma^2 per edge

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta_sq.sum()))

    @property
    def osc(self) -> float:
        return float(np.sqrt(self.osc_sq.sum()))


@dataclass(frozen=True)
class QuantityA:
    """Weighted diagnostic combining divergence error, estimator, data terms."""

    div_sq: float
    eta_sq: float
    data_sq: float
    weights: tuple
    total_sq: float

    @property
    def value(self) -> float:
        return float(np.sqrt(self.total_sq))


def _residual_values(mesh: Mesh, spec: ProblemSpec, var: CoefficientVariants,
                     solution: MixedSolution, bary, wq):
    """Residual at quadrature points of every element, with means."""
    a_u, b_u = solution_affine(mesh, solution)
    pts = points_from_bary(mesh.verts[mesh.tris], bary)
    u_h = a_u[:, None, :] + b_u[:, None, None] * pts
    sinv_u = np.einsum("tde,tqe->tqd", var.Sinv, u_h)
    fq = np.asarray(spec.f(pts[..., 0], pts[..., 1]), dtype=float)
    rq = (
        fq
        - 2.0 * b_u[:, None]
        + np.einsum("tqd,tqd->tq", sinv_u, var.w_at(pts))
        - ((var.r + var.divw) * solution.p_vals)[:, None]
    )
    rbar = np.einsum("q,tq->t", wq, rq)
    return rq, rbar, sinv_u, pts, (a_u, b_u)


def residual(mesh: Mesh, spec: ProblemSpec, solution: MixedSolution, tri: int):
    """Residual R_K of one element as a point evaluator, plus its mean."""
    var = variants(mesh, spec)
    a_u, b_u = solution_affine(mesh, solution)

    def evaluate(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u_h = a_u[tri] + b_u[tri] * pts
        sinv_u = u_h @ var.Sinv[tri].T
        w = var.w_a[tri] + var.w_b[tri] * pts
        return (
            np.asarray(spec.f(pts[:, 0], pts[:, 1]), dtype=float)
            - 2.0 * b_u[tri]
            + (sinv_u * w).sum(axis=1)
            - (var.r[tri] + var.divw[tri]) * solution.p_vals[tri]
        )

    rq, rbar, *_ = _residual_values(mesh, spec, var, solution, TRI7_BARY, TRI7_W)
    return evaluate, float(rbar[tri])


def _edge_jump_sq(mesh: Mesh, var: CoefficientVariants, a_u, b_u) -> np.ndarray:
    """Integral over each edge of the squared tangential jump of S^{-1} u_h.

    The trace is affine along the edge, so 2-point Gauss is exact; boundary
    edges use the one-sided trace.
    """
    va = mesh.verts[mesh.edges[:, 0]]
    vb = mesh.verts[mesh.edges[:, 1]]
    gp = seg_points(va, vb, SEG2_X)  # (ne, 2, 2)
    n = mesh.edge_normal
    tvec = np.column_stack([-n[:, 1], n[:, 0]])

    def side_trace(tids, points, tang):
        u = a_u[tids][:, None, :] + b_u[tids][:, None, None] * points
        sinv_u = np.einsum("eab,eqb->eqa", var.Sinv[tids], u)
        return np.einsum("eqa,ea->eq", sinv_u, tang)

    k0 = mesh.edge_tris[:, 0]
    k1 = mesh.edge_tris[:, 1]
    jump = side_trace(k0, gp, tvec)
    interior = k1 >= 0
    if interior.any():
        jump[interior] -= side_trace(k1[interior], gp[interior], tvec[interior])
    return 0.5 * mesh.edge_len * np.einsum("q,eq->e", SEG2_W, jump**2)


def tangential_jump(mesh: Mesh, spec: ProblemSpec, solution: MixedSolution,
                    edge: int) -> float:
    """Squared tangential-jump integral of S^{-1} u_h over one edge."""
    var = variants(mesh, spec)
    a_u, b_u = solution_affine(mesh, solution)
    return float(_edge_jump_sq(mesh, var, a_u, b_u)[edge])


def estimate(mesh: Mesh, spec: ProblemSpec, var: CoefficientVariants,
             solution: MixedSolution) -> EstimatorReport:
    """Elementwise indicators, their decomposition, and the oscillation."""
    rq, rbar, sinv_u, pts, (a_u, b_u) = _residual_values(
        mesh, spec, var, solution, TRI7_BARY, TRI7_W
    )
    h_sq = mesh.area  # h_K^2 = |K|
    norm_sinv_u_sq = mesh.area * np.einsum("q,tqd,tqd->t", TRI7_W, sinv_u, sinv_u)
    term1 = var.D_K_sq * h_sq * norm_sinv_u_sq

    norm_r_sq = mesh.area * np.einsum("q,tq,tq->t", TRI7_W, rq, rq)
    term2 = var.alpha**2 * h_sq * norm_r_sq

    jump_sq = _edge_jump_sq(mesh, var, a_u, b_u)
    edge_contrib = var.D_sigma_sq * mesh.edge_len * jump_sq
    edge_contrib[mesh.boundary_edge] = 0.0
    term3 = edge_contrib[mesh.tri_edges].sum(axis=1)

    dev = rq - rbar[:, None]
    osc_sq = h_sq * mesh.area * np.einsum("q,tq,tq->t", TRI7_W, dev, dev)

    return EstimatorReport(
        term1=term1,
        term2=term2,
        term3=term3,
        eta_sq=term1 + term2 + term3,
        osc_sq=osc_sq,
        edge_jump_sq=jump_sq,
    )


def oscillation(mesh: Mesh, spec: ProblemSpec, solution: MixedSolution):
    """Global oscillation and its per-element values."""
    var = variants(mesh, spec)
    rq, rbar, *_ = _residual_values(mesh, spec, var, solution, TRI7_BARY, TRI7_W)
    dev = rq - rbar[:, None]
    osc_sq = mesh.area * mesh.area * np.einsum("q,tq,tq->t", TRI7_W, dev, dev)
    return float(np.sqrt(osc_sq.sum())), np.sqrt(osc_sq)


def data_term_sq(mesh: Mesh, spec: ProblemSpec, var: CoefficientVariants,
                 solution: MixedSolution) -> float:
    """|f - f_h|^2 + |h grad_h(S^{-1} u_h . w)|^2 with f_h the elementwise mean."""
    pts = points_from_bary(mesh.verts[mesh.tris], TRI7_BARY)
    fq = np.asarray(spec.f(pts[..., 0], pts[..., 1]), dtype=float)
    fbar = np.einsum("q,tq->t", TRI7_W, fq)
    dev = fq - fbar[:, None]
    f_sq = float((mesh.area * np.einsum("q,tq,tq->t", TRI7_W, dev, dev)).sum())

    a_u, b_u = solution_affine(mesh, solution)
    u_h = a_u[:, None, :] + b_u[:, None, None] * pts
    sinv_u = np.einsum("tab,tqb->tqa", var.Sinv, u_h)
    sinv_w = np.einsum("tab,tqb->tqa", var.Sinv, var.w_at(pts))
    # grad(S^{-1}u_h . w) = b_u * S^{-1} w + (div w / 2) * S^{-1} u_h
    grad = b_u[:, None, None] * sinv_w + var.w_b[:, None, None] * sinv_u
    g_sq = float(
        (mesh.area**2 * np.einsum("q,tqd,tqd->t", TRI7_W, grad, grad)).sum()
    )
    return f_sq + g_sq


def quantity_a(mesh: Mesh, spec: ProblemSpec, solution: MixedSolution,
               report: EstimatorReport, weights=(1.0, 1.0, 1.0)) -> QuantityA:
    """Contraction diagnostic A_h^2 with user-set weights.

    weights = (divergence-error term, estimator term, data term).  The
    divergence term needs an exact solution; request it only when one is
    available.
    """
    w_div, w_eta, w_data = (float(w) for w in weights)
    div_sq = 0.0
    if w_div > 0.0:
        if spec.exact is None:
            raise ValueError("divergence term requested without an exact solution")
        from .problem import exact_error

        _, _, div_err = exact_error(mesh, spec, solution)
        div_sq = div_err**2
    var = variants(mesh, spec)
    data_sq = data_term_sq(mesh, spec, var, solution) if w_data > 0.0 else 0.0
    eta_sq = float(report.eta_sq.sum())
    total = w_div * div_sq + w_eta * eta_sq + w_data * data_sq
    return QuantityA(
        div_sq=div_sq,
        eta_sq=eta_sq,
        data_sq=data_sq,
        weights=(w_div, w_eta, w_data),
        total_sq=total,
    )
