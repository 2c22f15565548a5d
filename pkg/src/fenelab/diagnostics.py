"""Observables of Fokker-Planck runs: mass and its boundary flux, positivity,
boundary decay rates, energy norms and distances between runs."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from fenelab import weights as wt
from fenelab.errors import DomainError, FitError, GridMismatch
from fenelab.geometry import ConfigGrid, field_on_quad, surface_integral, weighted_integral


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    min_f: float
    l2mu: float
    h1mu_semi: float
    flux_rate: float

    def __post_init__(self):
        vals = [self.t, self.mass, self.min_f, self.l2mu, self.h1mu_semi, self.flux_rate]
        if not all(np.isfinite(v) for v in vals):
            raise FitError(f"non-finite diagnostics at t={self.t}")


def mass(f_field, grid: ConfigGrid) -> float:
    return weighted_integral(f_field, "one", grid)


def state_mass(coeffs, q, t, grid: ConfigGrid) -> float:
    """int nu (w + q) dm for a discrete w."""
    r, th = grid.quad_mesh
    u = grid.to_quad(coeffs) + q.value(t, r, th)
    return weighted_integral(u, "nu", grid)


def _boundary_q(q, grid, t):
    return lambda th: q.value(t, np.sqrt(grid.b) * np.ones_like(th), th)


def flux_rate_predicted(q, params, grid: ConfigGrid, t: float = 0.0) -> float:
    """-C0 sqrt(b) int_{rim} q dS."""
    if params.b < 2:
        raise DomainError("no flux law is asserted for b < 2")
    return -wt.c0(params.b) * np.sqrt(params.b) * surface_integral(_boundary_q(q, grid, t), grid)


def flux_rate_exact(q, params, grid: ConfigGrid, t: float = 0.0) -> float:
    """Boundary flux of the equation as written, with its 1/2 on the diffusion.

    Equals half of ``flux_rate_predicted``: the rate nu/mu * mu' is C0/2 in
    absolute value, not C0.
    """
    return 0.5 * flux_rate_predicted(q, params, grid, t)


def flux_rate_measured(times, masses) -> float:
    """Mean central-difference slope of mass(t) over the window."""
    times = np.asarray(times, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if len(times) < 3 or len(times) != len(masses):
        raise FitError("flux measurement needs at least three snapshots")
    slopes = (masses[2:] - masses[:-2]) / (times[2:] - times[:-2])
    return float(np.mean(slopes))


def flux_rate_shell(coeffs, q, t, grid: ConfigGrid, kappa=None, shell_cells: int = 4) -> float:
    """Cutoff estimate of dM/dt from a single snapshot.

    phi is 1 inside r_{n-k}, decreases linearly in r to 0 on the rim, and
    d/dt int f phi is evaluated from the weak form of the equation for f:
    int f kappa m . grad phi - 1/2 int (grad f + f b m / rho) . grad phi.
    """
    from fenelab.weights import KappaMatrix

    kappa = kappa or KappaMatrix.zero()
    params = grid.params
    rad = grid.radial
    n = rad.n_cells
    r0 = rad.nodes[n - shell_cells]
    width = np.sqrt(grid.b) - r0
    r, th = grid.quad_mesh
    rho = grid.quad_rho_2d
    in_shell = (rad.quad_cells >= n - shell_cells)[:, None] * np.ones_like(th, dtype=bool)
    u = grid.to_quad(coeffs) + q.value(t, r, th)
    ur, ut = grid.grad_to_quad(coeffs)
    qr, qt = q.grad(t, r, th)
    ur, ut = ur + qr, ut + qt
    nu = wt.nu(rho, params)
    # d nu / dr = nu'(rho) (-2 r); nu'(rho) evaluated per regime
    b = params.b
    if b < 2:
        dnu = (b / 2) * rho ** (b / 2 - 1)
    elif b == 2:
        dnu = wt.log_e_over(rho) - 1.0
    else:
        dnu = np.ones_like(rho)
    f = nu * u
    fr = dnu * (-2 * r) * u + nu * ur
    # grad phi = -(1/width) e_r on the shell
    k11, k12, k21 = kappa.components
    a = k11 * np.cos(2 * th) + 0.5 * (k12 + k21) * np.sin(2 * th)
    radial_flux = f * r * a - 0.5 * (fr + f * b * r / rho)
    integrand = np.where(in_shell, radial_flux * (-1.0 / width), 0.0)
    return float(np.sum(integrand * grid.quad_weights_2d))


def richardson(values, hs, order=1.0) -> float:
    """Extrapolate values(h) to h -> 0 assuming error ~ h^order; uses the two finest."""
    v = np.asarray(values, dtype=float)
    h = np.asarray(hs, dtype=float)
    i = np.argsort(h)
    v, h = v[i], h[i]
    ratio = (h[1] / h[0]) ** order
    return float((ratio * v[0] - v[1]) / (ratio - 1.0))


def _window_cells(grid: ConfigGrid, window_fraction, skip_cells):
    n = grid.radial.n_cells
    n_win = max(1, int(np.ceil(window_fraction * n)))
    hi = n - skip_cells
    lo = max(0, hi - n_win)
    cells = grid.radial.quad_cells
    return (cells >= lo) & (cells < hi)


def window_values(values_quad, grid: ConfigGrid, window_fraction=0.15, skip_cells=2):
    """Values on the boundary-adjacent decay window, flattened, with rho."""
    sel = _window_cells(grid, window_fraction, skip_cells)
    vals = field_on_quad(values_quad, grid)[sel]
    rho = grid.quad_rho_2d[sel]
    return vals.reshape(-1), rho.reshape(-1)


def decay_exponent_fit(f_field, grid: ConfigGrid, window_fraction=0.15, skip_cells=2) -> float:
    """Slope of ln f against ln rho near the rim."""
    f, rho = window_values(f_field, grid, window_fraction, skip_cells)
    if np.any(f <= 0):
        raise FitError("f is not positive on the decay window")
    slope, _ = np.polyfit(np.log(rho), np.log(f), 1)
    return float(slope)


def window_mean(values, grid: ConfigGrid, window_fraction=0.15, skip_cells=2) -> float:
    v, _ = window_values(values, grid, window_fraction, skip_cells)
    return float(np.mean(v))


@dataclass
class PositivityReport:
    min_f: float
    max_abs_f: float
    first_violation: Optional[float]
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.first_violation is None


def positivity_report(traj, rel_tol=1e-8) -> PositivityReport:
    from fenelab.fp_solver import reconstruct_f

    if len(traj.times) == 0:
        raise FitError("empty trajectory")
    fs = [reconstruct_f(traj.coeffs[k], traj.q, traj.grid, traj.params, float(traj.times[k]))
          for k in range(len(traj.times))]
    max_abs = max(float(np.abs(f).max()) for f in fs)
    thresh = -rel_tol * max_abs
    mins = [float(f.min()) for f in fs]
    first = next((float(traj.times[k]) for k, m in enumerate(mins) if m < thresh), None)
    return PositivityReport(min(mins), max_abs, first, rel_tol)


def _l2mu_diff(grid, params, ca, qa, cb, qb, t):
    r, th = grid.quad_mesh
    d = grid.to_quad(ca - cb) + qa.value(t, r, th) - qb.value(t, r, th)
    return float(np.sqrt(weighted_integral(d * d, "mu_active", grid)))


def solution_distance(run_a, run_b) -> float:
    """sup_t || (w_a + q_a) - (w_b + q_b) ||_{L2_mu}, i.e. the distance of f/nu.

    With equal boundary data this is the plain distance of the w's.
    """
    if run_a.grid is not run_b.grid:
        ga, gb = run_a.grid, run_b.grid
        same = (ga.n_angular == gb.n_angular and ga.b == gb.b
                and np.array_equal(ga.radial.nodes, gb.radial.nodes))
        if not same:
            raise GridMismatch("runs use different grids")
    if len(run_a.times) != len(run_b.times) or not np.allclose(run_a.times, run_b.times, rtol=0, atol=1e-12):
        raise GridMismatch("runs use different time axes")
    grid = run_a.grid
    return max(_l2mu_diff(grid, run_a.params, run_a.coeffs[k], run_a.q, run_b.coeffs[k], run_b.q,
                          float(run_a.times[k])) for k in range(len(run_a.times)))


def sup_l2mu(traj, forms=None) -> float:
    from fenelab.fp_solver import assemble_forms

    forms = forms or assemble_forms(traj.grid, traj.params)
    M = forms.mass_mu
    return float(max(np.sqrt(c @ (M @ c)) for c in traj.coeffs))


def diagnostics_series(traj, forms) -> list:
    from fenelab.fp_solver import reconstruct_f

    M, G = forms.mass_mu, forms.gradient_gram
    times = traj.times
    masses = np.array([state_mass(c, traj.q, float(t), traj.grid) for c, t in zip(traj.coeffs, times)])
    if len(times) >= 2:
        flux = np.gradient(masses, times)
    else:
        flux = np.zeros(1)
    out = []
    for k, (c, t) in enumerate(zip(traj.coeffs, times)):
        f = reconstruct_f(c, traj.q, traj.grid, traj.params, float(t))
        out.append(DiagnosticsRecord(float(t), float(masses[k]), float(f.min()),
                                     float(np.sqrt(max(c @ (M @ c), 0.0))),
                                     float(np.sqrt(max(c @ (G @ c), 0.0))), float(flux[k])))
    return out


def export_diagnostics_csv(records, path):
    cols = ["t", "mass", "min_f", "l2mu", "h1mu_semi", "flux_rate"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for rec in records:
            d = asdict(rec)
            wr.writerow([f"{d[c]:.12e}" for c in cols])
