import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fenelab import weights as wt
from fenelab.geometry import build_grid, build_radial_mesh, surface_integral, weighted_integral
from fenelab.weights import ModelParams


def radial_oracle(fn, b):
    """2 pi int_0^sqrt(b) fn(rho) r dr, substituting rho = b - r^2."""
    val, _ = quad(lambda rho: math.pi * fn(rho), 0.0, b, limit=200)
    return val


def test_uniform_nodes():
    mesh = build_radial_mesh(4.0, 4, 1.0)
    np.testing.assert_allclose(mesh.nodes, [0.0, 0.5, 1.0, 1.5, 2.0], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(b=st.floats(0.2, 12.0), n=st.integers(4, 40), g=st.floats(1.0, 3.5))
def test_mesh_invariants(b, n, g):
    mesh = build_radial_mesh(b, n, g)
    nodes = mesh.nodes
    assert nodes[0] == 0.0 and nodes[-1] == math.sqrt(b)
    assert np.all(np.diff(nodes) > 0)
    assert np.all(mesh.quad_rho > 0)
    w = np.diff(nodes)
    if g > 1:
        assert np.all(np.diff(w) < 1e-15 * math.sqrt(b))
    # mu* must be evaluable everywhere on the mesh
    assert np.all(np.isfinite(wt.mu_star(mesh.quad_rho, ModelParams(b=b))))


def test_graded_last_cell_smaller():
    w = np.diff(build_radial_mesh(4.0, 8, 2.0).nodes)
    assert w[-1] < w[0]


def test_rim_clearance_sub2():
    mesh = build_radial_mesh(1.0, 16, 2.0)
    gap = math.sqrt(1.0) - np.sqrt(1.0 - mesh.quad_rho).max()
    assert gap >= np.diff(mesh.nodes)[-1] / 10


@pytest.mark.parametrize("kw", [dict(n_cells=3), dict(n_cells=8, grading_exponent=0.5)])
def test_mesh_rejects(kw):
    with pytest.raises(ValueError):
        build_radial_mesh(4.0, **kw)


def test_weighted_integral_examples():
    g3 = build_grid(ModelParams(b=3.0), n_cells=48)
    assert weighted_integral(1.0, "mu", g3) == pytest.approx(2 * math.pi * math.sqrt(3), rel=1e-9)
    # independent oracle for the same number
    assert radial_oracle(lambda r: r ** 0.5, 3.0) == pytest.approx(2 * math.pi * math.sqrt(3), rel=1e-10)
    g4 = build_grid(ModelParams(b=4.0), n_cells=16)
    assert weighted_integral(1.0, "one", g4) == pytest.approx(4 * math.pi, rel=1e-12)
    g2 = build_grid(ModelParams(b=2.0), n_cells=48)
    rho = g2.quad_rho_2d
    assert weighted_integral(rho, "one", g2) == pytest.approx(2 * math.pi, rel=1e-10)
    assert radial_oracle(lambda r: r, 2.0) == pytest.approx(2 * math.pi, rel=1e-12)


@pytest.mark.parametrize("b", [1.0, 2.0, 4.0, 7.0])
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_rho_powers_and_harmonics(b, k):
    grid = build_grid(ModelParams(b=b), n_cells=32)
    rho = grid.quad_rho_2d
    _, th = grid.quad_mesh
    exact = math.pi * b ** (k + 1) / (k + 1)
    assert weighted_integral(rho ** k, "one", grid) == pytest.approx(exact, rel=1e-10)
    for j in (1, 2, 3):
        val = weighted_integral(rho ** k * np.cos(j * th), "one", grid)
        assert abs(val) <= 1e-10 * exact


@pytest.mark.parametrize("b,weight", [(3.0, "mu"), (1.0, "mu"), (5.0, "nu"), (2.0, "mu")])
def test_weighted_integral_vs_adaptive(b, weight):
    p = ModelParams(b=b)
    grid = build_grid(p, n_cells=48)
    r, _ = grid.quad_mesh
    g = lambda rr: np.cos(rr)  # smooth radial test field
    num = weighted_integral(g(r), weight, grid)
    fn = getattr(wt, weight)
    ref = radial_oracle(lambda rho: math.cos(math.sqrt(b - rho)) * float(fn(rho, p)), b)
    assert num == pytest.approx(ref, rel=1e-7)


def test_refinement_order():
    p = ModelParams(b=3.0)
    vals = []
    for n in (8, 16, 32, 64):
        grid = build_grid(p, n_cells=n, grading_exponent=1.0)
        r, _ = grid.quad_mesh
        vals.append(weighted_integral(np.exp(-r * r), "mu", grid))
    ref = radial_oracle(lambda rho: math.exp(rho - 3.0) * rho ** 0.5, 3.0)
    err = np.abs(np.array(vals) - ref)
    err = err[err > 1e-14]
    if len(err) >= 2:
        assert np.all(err[1:] <= err[:-1] / 2 ** 4 * 1.5) or err[-1] < 1e-12


def test_surface_integral():
    grid = build_grid(ModelParams(b=4.0), n_cells=8, n_angular=16)
    assert surface_integral(1.0, grid) == pytest.approx(4 * math.pi)
    assert abs(surface_integral(np.cos, grid)) < 1e-14
    assert surface_integral(2.5, grid) == pytest.approx(2.5 * 2 * math.pi * 2)
    # trig polynomials of degree < n_angular/2 are exact
    assert surface_integral(lambda t: np.cos(7 * t) ** 2, grid) == pytest.approx(math.pi * 2)


def test_unknown_count():
    grid = build_grid(ModelParams(b=4.0), n_cells=10, n_angular=8)
    # interior rings times modes, plus the centre's constant mode
    assert grid.n_unknowns == 9 * 8 + 1
