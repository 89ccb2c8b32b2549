"""Session-scoped benchmark runs shared between module and acceptance tests."""

import time

import numpy as np
import pytest

from amfem.adapt import StopRule, run_amfem, run_uniform, select_bulk
from amfem.problem import benchmark


@pytest.fixture(scope="session")
def kellogg1_main():
    """Checkerboard case 1, theta=0.7, run past 8e4 elements."""
    t0 = time.perf_counter()
    result = run_amfem(benchmark("kellogg1"), theta=0.7,
                       stop=StopRule(max_iters=45, max_dof=80_000))
    wall = time.perf_counter() - t0
    assert result.failure is None
    return result, wall


@pytest.fixture(scope="session")
def lshape_adaptive():
    result = run_amfem(benchmark("lshape"), theta=0.5,
                       stop=StopRule(max_iters=70, max_dof=13_000))
    assert result.failure is None
    return result


@pytest.fixture(scope="session")
def lshape_uniform():
    return run_uniform(benchmark("lshape"), levels=12)


@pytest.fixture(scope="session")
def kellogg2_main():
    """Checkerboard case 2 with per-iteration origin-capture fractions."""
    frac_all, frac_marked = {}, {}

    def cb(rec, mesh, sol, est):
        d = np.sqrt((mesh.centroid**2).sum(axis=1))
        marked = select_bulk(est.eta_sq, 0.94, "squared")
        frac_all[rec.k] = float((d <= 0.1).mean())
        frac_marked[rec.k] = float((d[marked] <= 0.1).mean()) if marked.size else 0.0

    result = run_amfem(benchmark("kellogg2"), theta=0.94,
                       stop=StopRule(max_iters=90, max_dof=12_000), callback=cb)
    assert result.failure is None
    return result, frac_all, frac_marked


@pytest.fixture(scope="session")
def layer001():
    """Boundary layer eps=0.01 with outflow-capture fractions."""
    from util import outflow_fraction

    fracs = {}

    def cb(rec, mesh, sol, est):
        fracs[rec.k] = outflow_fraction(mesh, width=0.1)

    result = run_amfem(benchmark("layer", 0.01), theta=0.5,
                       stop=StopRule(max_iters=16, max_dof=40_000), callback=cb)
    assert result.failure is None
    return result, fracs


@pytest.fixture(scope="session")
def layer001_res2():
    result = run_amfem(benchmark("layer", 0.01), theta=0.5, resolution=2,
                       stop=StopRule(max_iters=16, max_dof=200_000))
    assert result.failure is None
    return result


@pytest.fixture(scope="session")
def layer01():
    result = run_amfem(benchmark("layer", 0.1), theta=0.5,
                       stop=StopRule(max_iters=40, max_dof=20_000))
    assert result.failure is None
    return result


@pytest.fixture(scope="session")
def layer01_uniform():
    return run_uniform(benchmark("layer", 0.1), levels=11)


@pytest.fixture(scope="session")
def interior01():
    """Interior layer, reported-volume (linear) marking, 1e4-element budget."""
    result = run_amfem(benchmark("interior-layer", 0.1), theta=0.5,
                       marking="linear", stop=StopRule(max_iters=40, max_dof=10_000))
    assert result.failure is None
    return result


@pytest.fixture(scope="session")
def lshape_contraction():
    """Contraction diagnostic needs a fine enough initial mesh."""
    result = run_amfem(benchmark("lshape"), theta=0.5, resolution=4,
                       stop=StopRule(max_iters=24, max_dof=30_000))
    assert result.failure is None
    return result


@pytest.fixture(scope="session")
def kellogg1_contraction():
    result = run_amfem(benchmark("kellogg1"), theta=0.7, resolution=2,
                       stop=StopRule(max_iters=24, max_dof=30_000))
    assert result.failure is None
    return result
