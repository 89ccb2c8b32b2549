"""Problem data, benchmark definitions, coefficient bounds, exact errors.

Data (S, w, r) is piecewise constant per element of the initial mesh, so
it can be evaluated at centroids of any refined element: refinement never
crosses an initial-element boundary.  The velocity is stored as the
affine field w(x) = a + b*x of the lowest-order Raviart-Thomas space
(b = 0 in every benchmark).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mesh import Mesh
from .quadrature import TRI7_BARY, TRI7_W, points_from_bary

BENCHMARKS = ("lshape", "kellogg1", "kellogg2", "layer", "interior-layer")


class DataAssumptionError(Exception):
    """Problem data violates one of the admissibility assumptions."""


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form scalar solution with its gradient, flux, and flux divergence."""

    p: Callable
    grad_p: Callable
    u: Callable
    div_u: Callable


@dataclass(frozen=True)
class ProblemSpec:
    """Piecewise data of one convection-diffusion-reaction problem.

    The fields taking centroid arrays (S_fn, w_coeff_fn, r_fn) must be
    constant on each element of the initial mesh.  `w_bound_fn` returns the
    per-element sup of |w|; the default (|w| at the centroid) is exact for
    the constant velocities used by every benchmark.
    """

    name: str
    domain: str
    S_fn: Callable  # (x, y) -> (n, 2, 2)
    w_coeff_fn: Callable  # (x, y) -> (a: (n, 2), b: (n,))
    r_fn: Callable  # (x, y) -> (n,)
    f: Callable  # (x, y) -> (n,)
    g: Callable  # (x, y) -> (n,) Dirichlet data
    exact: Optional[ExactSolution] = None
    epsilon: Optional[float] = None
    w_bound_fn: Optional[Callable] = None
    default_theta: float = 0.5
    resolution: int = 1


@dataclass(eq=False)
class CoefficientVariants:
    """Derived per-element / per-edge coefficient bounds and weights.

    alpha = min(h_K / sqrt(c_S), 1 / sqrt(c_wr)) with the second argument
    treated as +inf when c_wr = 0.  D_K_sq and D_sigma_sq take their maxima
    over the vertex-touching neighborhoods of K and sigma.
    """

    S: np.ndarray
    Sinv: np.ndarray
    w_a: np.ndarray
    w_b: np.ndarray
    divw: np.ndarray
    r: np.ndarray
    c_S: np.ndarray
    C_S: np.ndarray
    C_w: np.ndarray
    c_wr: np.ndarray
    C_wr: np.ndarray
    alpha: np.ndarray
    D_K_sq: np.ndarray
    c_omega_sigma: np.ndarray
    D_sigma_sq: np.ndarray

    def w_at(self, pts: np.ndarray) -> np.ndarray:
        """Velocity at points pts (nt, m, 2) of each element."""
        return self.w_a[:, None, :] + self.w_b[:, None, None] * pts

    def S_inv_half(self) -> np.ndarray:
        """Matrix square root of S^{-1}, per element."""
        lam, vec = np.linalg.eigh(self.S)
        scale = 1.0 / np.sqrt(lam)
        return np.einsum("tik,tk,tjk->tij", vec, scale, vec)


def _vertex_max(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Per-vertex maximum of a per-triangle quantity."""
    out = np.zeros(mesh.n_vertices)
    np.maximum.at(out, mesh.tris.ravel(), np.repeat(values, 3))
    return out


def variants(mesh: Mesh, spec: ProblemSpec) -> CoefficientVariants:
    """Evaluate all coefficient variants on the current mesh.

    Raises DataAssumptionError if the data violates positivity of S, the
    sign condition on 0.5*div w + r, or the degeneracy coupling that a
    vanishing c_wr forces a vanishing C_wr.
    """
    cx, cy = mesh.centroid[:, 0], mesh.centroid[:, 1]
    S = np.asarray(spec.S_fn(cx, cy), dtype=float)
    if (np.abs(S[:, 0, 1] - S[:, 1, 0]) > 1e-12 * np.abs(S).max()).any():
        bad = int(np.argmax(np.abs(S[:, 0, 1] - S[:, 1, 0])))
        raise DataAssumptionError(f"S not symmetric on element {bad}")
    half_tr = 0.5 * (S[:, 0, 0] + S[:, 1, 1])
    disc = np.sqrt((0.5 * (S[:, 0, 0] - S[:, 1, 1])) ** 2 + S[:, 0, 1] ** 2)
    c_S = half_tr - disc
    C_S = half_tr + disc
    if (c_S <= 0).any():
        bad = int(np.argmax(c_S <= 0))
        raise DataAssumptionError(f"S not positive definite on element {bad}")
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    Sinv = np.empty_like(S)
    Sinv[:, 0, 0] = S[:, 1, 1] / det
    Sinv[:, 1, 1] = S[:, 0, 0] / det
    Sinv[:, 0, 1] = -S[:, 0, 1] / det
    Sinv[:, 1, 0] = -S[:, 1, 0] / det

    w_a, w_b = spec.w_coeff_fn(cx, cy)
    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    divw = 2.0 * w_b
    r = np.asarray(spec.r_fn(cx, cy), dtype=float)
    c_wr = 0.5 * divw + r
    C_wr = np.abs(divw + r)
    scale = max(1.0, float(np.abs(divw).max(initial=0.0) + np.abs(r).max(initial=0.0)))
    if (c_wr < -1e-12 * scale).any():
        bad = int(np.argmax(c_wr < 0))
        raise DataAssumptionError(f"0.5*div(w) + r < 0 on element {bad}")
    c_wr = np.maximum(c_wr, 0.0)
    zero = c_wr <= 1e-14 * scale
    if (zero & (C_wr > 1e-12 * scale)).any():
        bad = int(np.argmax(zero & (C_wr > 0)))
        raise DataAssumptionError(f"c_wr = 0 but C_wr > 0 on element {bad}")
    c_wr[zero] = 0.0
    C_wr[zero] = 0.0

    if spec.w_bound_fn is not None:
        C_w = np.asarray(spec.w_bound_fn(cx, cy), dtype=float)
    else:
        w_c = w_a + w_b[:, None] * mesh.centroid
        C_w = np.sqrt((w_c**2).sum(1))

    with np.errstate(divide="ignore"):
        inv_sqrt_cwr = np.where(c_wr > 0, 1.0 / np.sqrt(np.where(c_wr > 0, c_wr, 1.0)), np.inf)
    alpha = np.minimum(mesh.h / np.sqrt(c_S), inv_sqrt_cwr)

    # D_K^2: local terms plus vertex-neighborhood maxima
    ratio_div = np.where(c_wr > 0, divw**2 / np.where(c_wr > 0, c_wr, 1.0), 0.0)
    vmax_cwr = _vertex_max(mesh, c_wr)
    vmax_ratio = _vertex_max(mesh, ratio_div)
    nb_cwr = vmax_cwr[mesh.tris].max(axis=1)
    nb_ratio = vmax_ratio[mesh.tris].max(axis=1)
    D_K_sq = c_wr + C_wr**2 * alpha**2 + nb_cwr + nb_ratio

    # D_sigma^2 over triangles whose closure touches the closed edge
    ratio_cw = np.where(
        c_wr > 0,
        C_w**2 / np.where(c_wr > 0, c_wr, 1.0),
        np.where(C_w > 0, np.inf, 0.0),
    )
    ratio_cs = mesh.h**2 * C_w**2 / c_S
    vmax_CS = _vertex_max(mesh, C_S)
    vmax_rcw = _vertex_max(mesh, ratio_cw)
    vmax_rcs = _vertex_max(mesh, ratio_cs)
    e0, e1 = mesh.edges[:, 0], mesh.edges[:, 1]
    emax_CS = np.maximum(vmax_CS[e0], vmax_CS[e1])
    emax_rcw = np.maximum(vmax_rcw[e0], vmax_rcw[e1])
    emax_rcs = np.maximum(vmax_rcs[e0], vmax_rcs[e1])
    D_sigma_sq = 0.5 * emax_CS + 0.5 * np.minimum(emax_rcw, emax_rcs)

    inv_sqrt_cs = 1.0 / np.sqrt(c_S)
    adj = mesh.edge_tris
    c_os = inv_sqrt_cs[adj[:, 0]]
    has2 = adj[:, 1] >= 0
    c_os[has2] = np.maximum(c_os[has2], inv_sqrt_cs[adj[has2, 1]])

    return CoefficientVariants(
        S=S, Sinv=Sinv, w_a=w_a, w_b=w_b, divw=divw, r=r,
        c_S=c_S, C_S=C_S, C_w=C_w, c_wr=c_wr, C_wr=C_wr,
        alpha=alpha, D_K_sq=D_K_sq,
        c_omega_sigma=c_os, D_sigma_sq=D_sigma_sq,
    )


# -- benchmark problems --------------------------------------------------------

def _polar(x, y):
    rho = np.hypot(x, y)
    th = np.arctan2(y, x)
    th = np.where(th < 0, th + 2.0 * np.pi, th)
    return rho, th


def _const_tensor(s):
    def fn(x, y):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2, 2))
        out[..., 0, 0] = s
        out[..., 1, 1] = s
        return out

    return fn


def _const_velocity(wx, wy):
    def fn(x, y):
        x = np.asarray(x, dtype=float)
        a = np.empty(x.shape + (2,))
        a[..., 0] = wx
        a[..., 1] = wy
        return a, np.zeros(x.shape)

    return fn


def _zeros(x, y):
    return np.zeros(np.asarray(x, dtype=float).shape)


def _lshape_spec():
    k = 2.0 / 3.0

    def p(x, y):
        rho, th = _polar(x, y)
        return rho**k * np.sin(k * th)

    def grad_p(x, y):
        rho, th = _polar(x, y)
        safe = np.where(rho > 0, rho, 1.0)
        mag = k * safe ** (k - 1.0)
        er = np.stack([np.cos(th), np.sin(th)], axis=-1)
        et = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        g = mag[..., None] * (
            np.sin(k * th)[..., None] * er + np.cos(k * th)[..., None] * et
        )
        return np.where((rho > 0)[..., None], g, 0.0)

    def u(x, y):
        return -grad_p(x, y)

    exact = ExactSolution(p=p, grad_p=grad_p, u=u, div_u=_zeros)
    return ProblemSpec(
        name="lshape",
        domain="lshape",
        S_fn=_const_tensor(1.0),
        w_coeff_fn=_const_velocity(0.0, 0.0),
        r_fn=_zeros,
        f=_zeros,
        g=p,
        exact=exact,
        default_theta=0.5,
    )


# Quadrant coefficients of the checkerboard interface problem, indexed by
# quadrant 1..4 counterclockwise from the positive x axis.
_KELLOGG = {
    "kellogg1": dict(
        alpha=0.53544095,
        s=(5.0, 1.0, 5.0, 1.0),
        a=(0.44721360, -0.74535599, -0.94411759, -2.40170264),
        b=(1.00000000, 2.33333333, 0.55555555, -0.48148148),
        theta=0.7,
    ),
    "kellogg2": dict(
        alpha=0.12690207,
        s=(100.0, 1.0, 100.0, 1.0),
        a=(0.10000000, -9.60396040, -0.48035487, 7.70156488),
        b=(1.00000000, 2.96039604, -0.88275659, -6.45646175),
        theta=0.94,
    ),
}


def _kellogg_spec(name):
    tab = _KELLOGG[name]
    al = tab["alpha"]
    s_q = np.array(tab["s"])
    a_q = np.array(tab["a"])
    b_q = np.array(tab["b"])

    def quadrant(x, y):
        _, th = _polar(x, y)
        return np.minimum((th / (0.5 * np.pi)).astype(int), 3)

    def p(x, y):
        rho, th = _polar(x, y)
        q = quadrant(x, y)
        return rho**al * (a_q[q] * np.sin(al * th) + b_q[q] * np.cos(al * th))

    def grad_p(x, y):
        rho, th = _polar(x, y)
        q = quadrant(x, y)
        safe = np.where(rho > 0, rho, 1.0)
        mag = al * safe ** (al - 1.0)
        er = np.stack([np.cos(th), np.sin(th)], axis=-1)
        et = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        radial = a_q[q] * np.sin(al * th) + b_q[q] * np.cos(al * th)
        angular = a_q[q] * np.cos(al * th) - b_q[q] * np.sin(al * th)
        g = mag[..., None] * (radial[..., None] * er + angular[..., None] * et)
        return np.where((rho > 0)[..., None], g, 0.0)

    def u(x, y):
        q = quadrant(x, y)
        return -s_q[q][..., None] * grad_p(x, y)

    def S_fn(x, y):
        q = quadrant(x, y)
        out = np.zeros(np.asarray(x).shape + (2, 2))
        out[..., 0, 0] = s_q[q]
        out[..., 1, 1] = s_q[q]
        return out

    exact = ExactSolution(p=p, grad_p=grad_p, u=u, div_u=_zeros)
    return ProblemSpec(
        name=name,
        domain="square",
        S_fn=S_fn,
        w_coeff_fn=_const_velocity(0.0, 0.0),
        r_fn=_zeros,
        f=_zeros,
        g=p,
        exact=exact,
        default_theta=tab["theta"],
    )


def _layer_spec(eps):
    denom = np.expm1(-1.0 / eps)

    def X(t):
        return np.expm1((t - 1.0) / eps) / denom + t - 1.0

    def dX(t):
        return np.exp((t - 1.0) / eps) / (eps * denom) + 1.0

    def ddX(t):
        return np.exp((t - 1.0) / eps) / (eps**2 * denom)

    def p(x, y):
        return X(x) * X(y)

    def grad_p(x, y):
        return np.stack([dX(x) * X(y), X(x) * dX(y)], axis=-1)

    def u(x, y):
        return -eps * grad_p(x, y)

    def div_u(x, y):
        return -eps * (ddX(x) * X(y) + X(x) * ddX(y))

    def f(x, y):
        # -eps*lap(p) + w.grad(p) with w = (1, 1)
        return div_u(x, y) + dX(x) * X(y) + X(x) * dX(y)

    exact = ExactSolution(p=p, grad_p=grad_p, u=u, div_u=div_u)
    return ProblemSpec(
        name="layer",
        domain="unit-square",
        S_fn=_const_tensor(eps),
        w_coeff_fn=_const_velocity(1.0, 1.0),
        r_fn=_zeros,
        f=f,
        g=_zeros,
        exact=exact,
        epsilon=eps,
        default_theta=0.5,
    )


def _interior_layer_spec(eps):
    def g(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        # 100 on the right and bottom sides, 0 on the left and top
        return np.where((x > 1.0 - 1e-12) | (y < -1.0 + 1e-12), 100.0, 0.0)

    return ProblemSpec(
        name="interior-layer",
        domain="square",
        S_fn=_const_tensor(eps),
        w_coeff_fn=_const_velocity(2.0, 1.0),
        r_fn=_zeros,
        f=_zeros,
        g=g,
        exact=None,
        epsilon=eps,
        default_theta=0.5,
    )


def benchmark(name: str, epsilon: float | None = None) -> ProblemSpec:
    """Benchmark problem by name; epsilon applies to the layer problems."""
    if name == "lshape":
        return _lshape_spec()
    if name in ("kellogg1", "kellogg2"):
        return _kellogg_spec(name)
    if name == "layer":
        return _layer_spec(0.01 if epsilon is None else float(epsilon))
    if name == "interior-layer":
        return _interior_layer_spec(0.1 if epsilon is None else float(epsilon))
    raise ValueError(f"unknown benchmark {name!r}; expected one of {BENCHMARKS}")


# -- exact error ---------------------------------------------------------------

def exact_error(mesh: Mesh, spec: ProblemSpec, solution, rule=None):
    """Energy error (flux part plus weighted scalar part) and flux-divergence error.

    Returns (e_h, per-element E_K, div_error).  Integrals use the 7-point
    degree-5 rule unless another (bary, weights) rule is supplied.
    """
    if spec.exact is None:
        raise ValueError(f"benchmark {spec.name!r} has no exact solution")
    bary, wq = (TRI7_BARY, TRI7_W) if rule is None else rule
    var = variants(mesh, spec)
    from .mixed_fem import solution_affine  # local import to avoid a cycle

    a_u, b_u = solution_affine(mesh, solution)
    pts = points_from_bary(mesh.verts[mesh.tris], bary)
    x, y = pts[..., 0], pts[..., 1]

    u_ex = spec.exact.u(x, y)
    u_h = a_u[:, None, :] + b_u[:, None, None] * pts
    diff = u_ex - u_h
    sih = var.S_inv_half()
    sdiff = np.einsum("tde,tqe->tqd", sih, diff)
    ek_sq = mesh.area * np.einsum("q,tqd,tqd->t", wq, sdiff, sdiff)

    if (var.c_wr > 0).any():
        p_ex = spec.exact.p(x, y)
        pdiff = p_ex - solution.p_vals[:, None]
        ek_sq = ek_sq + var.c_wr * mesh.area * np.einsum("q,tq,tq->t", wq, pdiff, pdiff)

    ddiff = spec.exact.div_u(x, y) - 2.0 * b_u[:, None]
    div_sq = mesh.area * np.einsum("q,tq,tq->t", wq, ddiff, ddiff)

    e_h = float(np.sqrt(ek_sq.sum()))
    return e_h, np.sqrt(ek_sq), float(np.sqrt(div_sq.sum()))
