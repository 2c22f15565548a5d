import csv
import math

import numpy as np
import pytest
from scipy.integrate import quad

from fenelab import diagnostics as dg
from fenelab import fp_solver as fp
from fenelab.errors import DomainError, FitError, GridMismatch
from fenelab.fp_solver import BoundaryProfile
from fenelab.geometry import build_grid
from fenelab.weights import ModelParams


def disk_oracle(fn, b):
    return quad(lambda rho: math.pi * fn(rho), 0.0, b)[0]


def run(b, q, T=0.2, dt=0.02, n_cells=24, f0=None, n_angular=8):
    p = ModelParams(b=b)
    grid = build_grid(p, n_cells=n_cells, n_angular=n_angular)
    f0 = f0 or fp.equilibrium(p)
    w0 = fp.w0_from_f0(grid, f0, q)
    return fp.solve_fp(w0, q, None, T, dt, grid, p)


def test_mass_examples():
    g2 = build_grid(ModelParams(b=2.0), n_cells=32)
    assert dg.mass(g2.quad_rho_2d, g2) == pytest.approx(2 * math.pi, rel=1e-10)
    assert disk_oracle(lambda r: r, 2.0) == pytest.approx(2 * math.pi, rel=1e-12)
    assert dg.mass(0.0, g2) == 0.0
    g4 = build_grid(ModelParams(b=4.0), n_cells=32)
    assert dg.mass(g4.quad_rho_2d, g4) == pytest.approx(8 * math.pi, rel=1e-10)
    assert disk_oracle(lambda r: r, 4.0) == pytest.approx(8 * math.pi, rel=1e-12)


def test_flux_predicted_examples():
    p = ModelParams(b=4.0)
    g = build_grid(p, n_cells=8, n_angular=16)
    assert dg.flux_rate_predicted(BoundaryProfile.constant(1.0), p, g) == pytest.approx(16 * math.pi)
    assert dg.flux_rate_predicted(BoundaryProfile.zero(), p, g) == 0.0
    assert abs(dg.flux_rate_predicted(BoundaryProfile.angular(4.0, 1.0, 1), p, g)) < 1e-13
    assert dg.flux_rate_exact(BoundaryProfile.constant(1.0), p, g) == pytest.approx(8 * math.pi)
    p1 = ModelParams(b=1.0)
    with pytest.raises(DomainError):
        dg.flux_rate_predicted(BoundaryProfile.constant(1.0), p1, build_grid(p1, n_cells=8))


def test_flux_measured_stationary():
    traj = run(1.0, BoundaryProfile.equilibrium_ratio(ModelParams(b=1.0)))
    m = [r.mass for r in traj.diagnostics]
    assert abs(dg.flux_rate_measured(traj.times, m)) < 1e-10


def test_flux_measured_window():
    with pytest.raises(FitError):
        dg.flux_rate_measured([0.0, 1.0], [1.0, 1.0])
    assert dg.flux_rate_measured([0, 1, 2, 3], [1, 3, 5, 7]) == pytest.approx(2.0)


@pytest.mark.parametrize("b", [2.0, 4.0])
def test_flux_follows_boundary_rate(b):
    """Measured dM/dt against the rate of the equation as written (half of the C0 law)."""
    q = BoundaryProfile.constant(1.0)
    rates = []
    for n in (16, 32, 64):
        traj = run(b, q, T=0.1, dt=0.01, n_cells=n)
        m = [r.mass for r in traj.diagnostics]
        rates.append(dg.flux_rate_measured(traj.times[-5:], m[-5:]))
    p = ModelParams(b=b)
    exact = dg.flux_rate_exact(q, p, build_grid(p, n_cells=8))
    assert rates[-1] > 0
    assert rates[-1] == pytest.approx(exact, rel=0.05)


def test_flux_shell_estimate_b4():
    q = BoundaryProfile.constant(1.0)
    traj = run(4.0, q, T=0.1, dt=0.01, n_cells=64)
    est = dg.flux_rate_shell(traj.coeffs[-1], q, traj.times[-1], traj.grid, shell_cells=4)
    assert est == pytest.approx(8 * math.pi, rel=2e-2)


def test_richardson():
    hs = np.array([0.1, 0.05])
    vals = 3.0 + 2.0 * hs
    assert dg.richardson(vals, hs, order=1.0) == pytest.approx(3.0)


@pytest.mark.parametrize("b,power", [(1.0, 0.5), (4.0, 2.0)])
def test_decay_fit_power_laws(b, power):
    g = build_grid(ModelParams(b=b), n_cells=48)
    assert dg.decay_exponent_fit(g.quad_rho_2d ** power, g) == pytest.approx(power, abs=0.02 * power)


def test_decay_fit_on_run():
    traj = run(4.0, BoundaryProfile.zero(), T=0.5, dt=0.01, n_cells=48)
    f = fp.reconstruct_f(traj.final, traj.q, traj.grid, traj.params, where="quad")
    assert dg.decay_exponent_fit(f, traj.grid) >= 1.1


def test_decay_fit_rejects_nonpositive():
    g = build_grid(ModelParams(b=4.0), n_cells=16)
    with pytest.raises(FitError):
        dg.decay_exponent_fit(-g.quad_rho_2d, g)


def test_positivity_reports():
    q = BoundaryProfile.zero()
    p = ModelParams(b=4.0)
    rep = dg.positivity_report(run(4.0, q, f0=lambda r, th: (4 - r * r) * (1 + 0.9 * np.cos(th))))
    assert rep.ok and rep.min_f >= -1e-8 * rep.max_abs_f
    zero = dg.positivity_report(run(4.0, q, f0=lambda r, th: 0 * r))
    assert zero.min_f == 0.0
    bad = dg.positivity_report(run(4.0, q, f0=lambda r, th: (4 - r * r) * (np.cos(th) - 0.2)))
    assert not bad.ok and bad.first_violation == 0.0
    assert p.b == 4.0


def test_solution_distance():
    q = BoundaryProfile.zero()
    a = run(4.0, q)
    assert dg.solution_distance(a, a) == 0.0
    c = run(4.0, q, n_cells=16)
    with pytest.raises(GridMismatch):
        dg.solution_distance(a, c)
    with pytest.raises(GridMismatch):
        dg.solution_distance(a, run(4.0, q, T=0.4))


def test_distance_dt_halving_small():
    q = BoundaryProfile.zero()
    f0 = lambda r, th: (4 - r * r) ** 2 * (1 + 0.3 * np.cos(2 * th))
    runs = [run(4.0, q, T=0.2, dt=dt, f0=f0) for dt in (0.02, 0.01, 0.005)]
    for k in (1, 2):
        # compare on the shared time levels
        runs[k].coeffs, runs[k].times = runs[k].coeffs[::2 ** k], runs[k].times[::2 ** k]
    d1 = dg.solution_distance(runs[0], runs[1])
    d2 = dg.solution_distance(runs[1], runs[2])
    assert d1 <= 5e-3 * dg.sup_l2mu(runs[0])
    assert d2 < d1


def test_nonuniqueness_distance():
    f0 = fp.equilibrium(ModelParams(b=4.0))
    r0 = run(4.0, BoundaryProfile.zero(), T=0.5, dt=0.05, f0=f0)
    r1 = run(4.0, BoundaryProfile.constant(1.0), T=0.5, dt=0.05, f0=f0)
    d = dg.solution_distance(r0, r1)
    assert d >= 0.1 * dg.sup_l2mu(r1)


def test_records_and_csv(tmp_path):
    traj = run(4.0, BoundaryProfile.constant(1.0))
    recs = traj.diagnostics
    assert len(recs) == len(traj.times)
    for r in recs:
        if r.min_f >= 0:
            assert r.mass >= 0
    path = tmp_path / "d.csv"
    dg.export_diagnostics_csv(recs, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "mass", "min_f", "l2mu", "h1mu_semi", "flux_rate"]
    assert len(rows) == len(recs) + 1
