"""Shared helpers and synthetic problem specs for the test suite."""

import numpy as np

from amfem.mesh import Mesh
from amfem.problem import ProblemSpec


def np_shape(x):
    return np.asarray(x, dtype=float).shape


def const_tensor_fn(mat):
    mat = np.asarray(mat, dtype=float)

    def fn(x, y):
        out = np.zeros(np_shape(x) + (2, 2))
        out[...] = mat
        return out

    return fn


def const_velocity_fn(wx, wy):
    def fn(x, y):
        a = np.zeros(np_shape(x) + (2,))
        a[..., 0] = wx
        a[..., 1] = wy
        return a, np.zeros(np_shape(x))

    return fn


def zeros_fn(x, y):
    return np.zeros(np_shape(x))


def ones_fn(x, y):
    return np.ones(np_shape(x))


def poisson_spec(f=ones_fn, g=zeros_fn):
    """-lap(p) = f with Dirichlet data g on the unit square."""
    return ProblemSpec(
        name="poisson", domain="unit-square",
        S_fn=const_tensor_fn(np.eye(2)),
        w_coeff_fn=const_velocity_fn(0.0, 0.0),
        r_fn=zeros_fn, f=f, g=g,
    )


def zero_data_spec():
    return poisson_spec(f=zeros_fn, g=zeros_fn)


def synthetic_spec():
    """Anisotropic diffusion, constant convection, positive reaction."""

    def f(x, y):
        return np.sin(np.pi * np.asarray(x, dtype=float)) * np.cos(np.asarray(y, dtype=float)) + 1.0

    def g(x, y):
        return 0.5 * np.asarray(x, dtype=float) - 0.25 * np.asarray(y, dtype=float)

    def r_fn(x, y):
        return np.full(np_shape(x), 1.5)

    return ProblemSpec(
        name="synthetic", domain="unit-square",
        S_fn=const_tensor_fn([[2.0, 0.3], [0.3, 1.0]]),
        w_coeff_fn=const_velocity_fn(1.0, 2.0),
        r_fn=r_fn, f=f, g=g,
    )


def two_triangle_square():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(verts, tris)


def reference_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def random_grid_mesh(rng, n=3):
    """Jittered n x n structured triangulation with random diagonals."""
    xs = np.linspace(0.0, 1.0, n + 1)
    grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
    jitter = (rng.random(grid.shape) - 0.5) * (0.4 / n)
    interior = np.zeros(grid.shape[:2], dtype=bool)
    interior[1:-1, 1:-1] = True
    grid = grid + jitter * interior[..., None]
    vid = lambda i, j: i * (n + 1) + j
    tris = []
    for i in range(n):
        for j in range(n):
            bl, br = vid(i, j), vid(i + 1, j)
            tl, tr = vid(i, j + 1), vid(i + 1, j + 1)
            if rng.random() < 0.5:
                tris.append((bl, br, tr))
                tris.append((bl, tr, tl))
            else:
                tris.append((bl, br, tl))
                tris.append((br, tr, tl))
    return Mesh(grid.reshape(-1, 2), np.array(tris))


def assert_conforming(mesh):
    """Edge-sharing counts: every edge borders one or two triangles."""
    raw = np.sort(
        np.stack(
            [mesh.tris[:, [1, 2]], mesh.tris[:, [2, 0]], mesh.tris[:, [0, 1]]],
            axis=1,
        ).reshape(-1, 2),
        axis=1,
    )
    _, counts = np.unique(raw, axis=0, return_counts=True)
    assert counts.min() >= 1 and counts.max() <= 2


def interp_loglog(ndof, values, target):
    nd = np.log(np.asarray(ndof, dtype=float))
    v = np.log(np.asarray(values, dtype=float))
    return float(np.exp(np.interp(np.log(float(target)), nd, v)))


def outflow_fraction(mesh, width=0.1):
    """Fraction of elements within `width` of {x=1} U {y=1} (closest point)."""
    vx = mesh.verts[mesh.tris]
    dmin = np.minimum(1.0 - vx[:, :, 0], 1.0 - vx[:, :, 1]).min(axis=1)
    return float((dmin <= width).mean())
