"""Quadrature rules on triangles and segments.

Triangle rules are given in barycentric coordinates with weights summing
to one, so an integral is `area * sum(w_q * f(x_q))`.  The default
interior rule is the classical 7-point degree-5 rule; `tri_rule` builds
collapsed Gauss-Legendre rules of arbitrary degree for cross checks.
"""

from __future__ import annotations

import numpy as np

_S15 = np.sqrt(15.0)
_B1 = (6.0 + _S15) / 21.0  # group near the centroid
_B2 = (6.0 - _S15) / 21.0  # group near the vertices

#: 7-point rule, exact for polynomials of degree 5.
TRI7_BARY = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [1.0 - 2.0 * _B1, _B1, _B1],
        [_B1, 1.0 - 2.0 * _B1, _B1],
        [_B1, _B1, 1.0 - 2.0 * _B1],
        [1.0 - 2.0 * _B2, _B2, _B2],
        [_B2, 1.0 - 2.0 * _B2, _B2],
        [_B2, _B2, 1.0 - 2.0 * _B2],
    ]
)
TRI7_W = np.array(
    [9.0 / 40.0]
    + [(155.0 + _S15) / 1200.0] * 3
    + [(155.0 - _S15) / 1200.0] * 3
)

#: 2-point Gauss nodes/weights on [-1, 1]; exact for cubics.
SEG2_X = np.array([-1.0, 1.0]) / np.sqrt(3.0)
SEG2_W = np.array([1.0, 1.0])

#: 3-point Gauss nodes/weights on [-1, 1]; exact for degree 5.
SEG3_X = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
SEG3_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def tri_rule(degree: int):
    """Collapsed (Duffy) Gauss-Legendre rule exact to `degree` on a triangle.

    Returns (bary, weights) with weights summing to 1.  Independent of the
    hard-coded 7-point table, which makes it usable as a quadrature oracle.
    """
    n = degree // 2 + 2
    x, wx = np.polynomial.legendre.leggauss(n)
    # map to [0, 1]
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wx
    uu, vv = np.meshgrid(u, u, indexing="ij")
    ww = np.outer(wu, wu) * (1.0 - uu)
    xs = uu.ravel()
    ys = (vv * (1.0 - uu)).ravel()
    bary = np.column_stack([1.0 - xs - ys, xs, ys])
    w = 2.0 * ww.ravel()  # reference triangle has area 1/2
    return bary, w


def points_from_bary(tri_coords: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Map barycentric points to physical coordinates.

    tri_coords: (nt, 3, 2) vertex coordinates; bary: (m, 3).
    Returns (nt, m, 2).
    """
    return np.einsum("qi,tid->tqd", bary, tri_coords)


def seg_points(a: np.ndarray, b: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Gauss points on segments a->b. a, b: (ne, 2); returns (ne, m, 2)."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid[:, None, :] + nodes[None, :, None] * half[:, None, :]
