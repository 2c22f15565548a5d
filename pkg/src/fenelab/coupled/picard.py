"""The coupled map (u, varpi) -> (v, w), its weak norm, contraction measurements and
the full micro-macro evolution in Picard or splitting mode."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from fenelab.errors import FitError, GridMismatch, SolverError
from fenelab.fp_solver import BoundaryProfile, assemble_forms, interpolate, w0_from_f0
from fenelab.geometry import build_grid
from fenelab.weights import ModelParams
from fenelab.coupled.advection import advect_values
from fenelab.coupled.fields import (FieldStepper, WField, compute_stress, min_f, node_masses,
                                    stress_functionals)
from fenelab.coupled.spectral import FlowField, grid_points, kappa_field, nse_step


@dataclass(eq=False)
class CoupledProblem:
    """Discretization shared by every coupled computation: grids, forms, dt and q."""

    params: ModelParams
    n_x: int
    dt: float
    grid: object
    q: BoundaryProfile
    stepper: FieldStepper
    stress_L: np.ndarray
    threads: int = 1

    @classmethod
    def build(cls, params, n_x=32, n_cells=48, n_angular=16, dt=1e-3, q=None,
              grading_exponent=2.0, threads=1):
        q = q or BoundaryProfile.zero()
        grid = build_grid(params, n_cells=n_cells, n_angular=n_angular, grading_exponent=grading_exponent)
        forms = assemble_forms(grid, params)
        stepper = FieldStepper(grid, params, q, dt, forms=forms, threads=threads)
        return cls(params, n_x, dt, grid, q, stepper, stress_functionals(grid, params), threads)

    @property
    def forms(self):
        return self.stepper.forms

    @property
    def cell(self) -> float:
        """Area of one spatial grid cell."""
        return (2 * np.pi / self.n_x) ** 2

    def uniform_field(self, f0=None, t=0.0) -> WField:
        """w at every node from one configuration density (default: equilibrium)."""
        from fenelab.fp_solver import equilibrium

        f0 = f0 or equilibrium(self.params)
        w0 = w0_from_f0(self.grid, f0, self.q)
        return WField.uniform(w0, self.n_x, self.grid, self.q, t)

    def stress(self, W, t) -> np.ndarray:
        wf = W if isinstance(W, WField) else WField(W, self.grid, self.q, t)
        return compute_stress(wf, self.q, self.grid, self.params, t, self.stress_L).comps


# --- paths --------------------------------------------------------------------------

class Path:
    """Time-discrete path on t_k = t0 + k dt: flow and node-major w coefficients."""

    t0 = 0.0

    def velocity(self, k) -> FlowField:
        raise NotImplementedError

    def field(self, k) -> np.ndarray:
        raise NotImplementedError


@dataclass(eq=False)
class StoredPath(Path):
    vs: list
    ws: list
    t0: float = 0.0

    @property
    def n_levels(self):
        return len(self.vs)

    def velocity(self, k):
        return self.vs[k]

    def field(self, k):
        if self.ws[k] is None:
            raise GridMismatch("w was not stored on this path")
        return self.ws[k]


@dataclass(eq=False)
class ConstantPath(Path):
    v: FlowField
    w: np.ndarray
    t0: float = 0.0

    def velocity(self, k):
        return self.v

    def field(self, k):
        return self.w


@dataclass(eq=False)
class ShiftedPath(Path):
    """base + (dv, dw) with time-independent shifts."""

    base: Path
    dv: FlowField
    dw: np.ndarray

    @property
    def t0(self):
        return self.base.t0

    def velocity(self, k):
        v = self.base.velocity(k)
        return FlowField(v.vh + self.dv.vh, v.time)

    def field(self, k):
        return self.base.field(k) + self.dw


# --- one step of the map --------------------------------------------------------------

def map_step(prob: CoupledProblem, v: FlowField, W, u: FlowField, varpi, t):
    """Momentum step with stress from varpi advected by u, then transport of W by v and
    the local Fokker-Planck step with kappa = grad v (averaged over the step)."""
    dt = prob.dt
    tau = prob.stress(varpi, t)
    v_new = nse_step(v, tau, dt, u)
    v_new.time = t + dt
    vbar = 0.5 * (v.physical + v_new.physical)
    W_adv = advect_values(W, vbar, dt)
    kap = 0.5 * (kappa_field(v) + kappa_field(v_new))
    W_new = prob.stepper.step(W_adv, kap, t)
    return v_new, W_new


def _levels(prob, v0, W0, n_steps, u_path: Optional[Path] = None, varpi_path: Optional[Path] = None):
    """Yield (k, v_k, W_k); without input paths the step uses its own state (splitting)."""
    v, W = v0, np.asarray(W0, dtype=float)
    t0 = v0.time
    yield 0, v, W
    for k in range(n_steps):
        t = t0 + k * prob.dt
        u = v if u_path is None else u_path.velocity(k)
        varpi = W if varpi_path is None else varpi_path.field(k)
        v, W = map_step(prob, v, W, u, varpi, t)
        yield k + 1, v, W


def _n_steps(prob, T):
    n = int(round(T / prob.dt))
    if n < 1 or abs(n * prob.dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} must be a positive multiple of dt={prob.dt}")
    return n


def picard_map(prob: CoupledProblem, u_path: Path, varpi_path: Path, v0: FlowField, W0, T,
               store_w=True) -> StoredPath:
    """F(u, varpi) on [t0, t0 + T] from the data (v0, W0)."""
    vs, ws = [], []
    for _, v, W in _levels(prob, v0, W0, _n_steps(prob, T), u_path, varpi_path):
        vs.append(v)
        ws.append(W if store_w else None)
    return StoredPath(vs, ws, v0.time)


# --- weak norm -----------------------------------------------------------------------------

class _NormAccumulator:
    """Running sup_t |v|^2 + sup_t |w|^2_mu + 1/2 int |grad_m w|^2_mu dt (trapezoid)."""

    def __init__(self, prob: CoupledProblem):
        self.prob = prob
        self.M = prob.forms.mass_mu
        self.G = prob.forms.gradient_gram
        self.sup_v = 0.0
        self.sup_w = 0.0
        self.integral = 0.0
        self._last_grad = None

    def add(self, dv_phys, dW):
        h2 = self.prob.cell
        self.sup_v = max(self.sup_v, float(h2 * np.sum(dv_phys * dv_phys)))
        if dW is None:
            dW = np.zeros((1, self.M.shape[0]))
        self.sup_w = max(self.sup_w, float(h2 * np.sum(dW * (dW @ self.M.T))))
        g = float(h2 * np.sum(dW * (dW @ self.G.T)))
        if self._last_grad is not None:
            self.integral += 0.5 * self.prob.dt * (g + self._last_grad)
        self._last_grad = g

    @property
    def value(self):
        return self.sup_v + self.sup_w + 0.5 * self.integral


def weak_norm(prob: CoupledProblem, v_path, w_path) -> float:
    """||(v, w)||_M^2 for paths given as sequences of FlowField (or physical arrays) and
    node-major coefficient arrays on the common time axis."""
    if len(v_path) != len(w_path):
        raise GridMismatch("v and w paths have different time axes")
    acc = _NormAccumulator(prob)
    for v, W in zip(v_path, w_path):
        vp = v.physical if isinstance(v, FlowField) else np.asarray(v, dtype=float)
        if vp.shape != (2, prob.n_x, prob.n_x):
            raise GridMismatch("velocity does not live on the problem's x-grid")
        acc.add(vp, None if W is None else np.asarray(W, dtype=float))
    return acc.value


def path_distance(prob, a: Path, b: Path, n_levels) -> float:
    acc = _NormAccumulator(prob)
    for k in range(n_levels):
        acc.add(a.velocity(k).physical - b.velocity(k).physical, a.field(k) - b.field(k))
    return acc.value


@dataclass
class ContractionCurve:
    times: np.ndarray
    ratios: np.ndarray
    numerators: np.ndarray
    denominators: np.ndarray

    def at(self, T) -> float:
        k = int(np.argmin(np.abs(self.times - T)))
        if abs(self.times[k] - T) > 1e-9:
            raise ValueError(f"T={T} is not on the curve")
        return float(self.ratios[k])

    def threshold(self) -> Optional[float]:
        """First T with ratio = 1, linearly interpolated; None when not reached."""
        r, t = self.ratios, self.times
        above = np.nonzero(r >= 1.0)[0]
        if len(above) == 0:
            return None
        k = int(above[0])
        if k == 0:
            return float(t[0])
        return float(t[k - 1] + (1.0 - r[k - 1]) * (t[k] - t[k - 1]) / (r[k] - r[k - 1]))


def contraction_curve(prob: CoupledProblem, z1: Path, z2: Path, v0: FlowField, W0, T,
                      stop_above=None) -> ContractionCurve:
    """Ratio ||F z2 - F z1||^2_M / ||z2 - z1||^2_M on [0, t] for every grid time t <= T.

    Both maps are advanced in lockstep so no path is stored.  With ``stop_above``
    the sweep ends at the first time the ratio exceeds that value.
    """
    n = _n_steps(prob, T)
    num = _NormAccumulator(prob)
    den = _NormAccumulator(prob)
    times, nums, dens = [], [], []
    run1 = _levels(prob, v0, W0, n, z1, z1)
    run2 = _levels(prob, v0, W0, n, z2, z2)
    for (k, v1, W1), (_, v2, W2) in zip(run1, run2):
        num.add(v2.physical - v1.physical, W2 - W1)
        den.add(z2.velocity(k).physical - z1.velocity(k).physical, z2.field(k) - z1.field(k))
        if k > 0:
            times.append(k * prob.dt)
            nums.append(num.value)
            dens.append(den.value)
            if stop_above is not None and den.value > 0 and num.value / den.value > stop_above:
                break
    nums, dens = np.array(nums), np.array(dens)
    if not np.all(dens > 0):
        raise FitError("z1 and z2 coincide in the weak norm")
    return ContractionCurve(np.array(times), nums / dens, nums, dens)


def contraction_ratio(prob: CoupledProblem, z1: Path, z2: Path, v0: FlowField, W0, T) -> float:
    if z1 is z2:
        raise FitError("z1 and z2 coincide in the weak norm")
    return float(contraction_curve(prob, z1, z2, v0, W0, T).ratios[-1])


def standard_pair(prob: CoupledProblem, amplitude=0.1, eps=1e-2):
    """Near-equilibrium data and a perturbation pair around the constant path.

    Data: Taylor-Green velocity of the given amplitude, equilibrium w at every node.
    z1 is the constant path at the data; z2 adds eps (sin y, 0) to u and
    eps cos(y) rho r^2 sin(2 theta)/b to varpi, whose shear stress drives a
    divergence-free force (a stress varying only along its own normal would be
    a pure gradient and vanish under the projection).
    """
    n, b = prob.n_x, prob.params.b
    v0 = FlowField.taylor_green(n, amplitude)
    W0 = prob.uniform_field().coeffs
    X, Y = grid_points(n)
    dv = FlowField.from_physical(eps * np.stack([np.sin(Y), 0.0 * X]))
    phi = interpolate(prob.grid, lambda r, th: (b - r * r) * r * r * np.sin(2 * th) / b)
    dw = eps * np.cos(Y).reshape(-1)[:, None] * phi[None, :]
    z1 = ConstantPath(v0, W0)
    return v0, W0, z1, ShiftedPath(z1, dv, dw)


# --- full evolution ---------------------------------------------------------------------

@dataclass
class CoupledTrajectory:
    mode: str
    times: np.ndarray
    velocities: list
    masses: np.ndarray              # (levels, nodes)
    min_f: np.ndarray
    stresses: list
    picard_iterations: list = field(default_factory=list)
    final_w: Optional[WField] = None

    @property
    def mass_drift(self) -> float:
        m0 = self.masses[0]
        return float(np.max(np.abs(self.masses - m0[None, :])) / np.max(np.abs(m0)))


def solve_coupled(prob: CoupledProblem, v0: FlowField, W0, T, mode="splitting",
                  T_window=0.02, tol=1e-10, max_iters=40, track_min_f=True) -> CoupledTrajectory:
    """Evolve (v, w) to T.

    splitting: each step advects w, applies the local Fokker-Planck step with
    kappa = grad v and updates v with the stress of the current w.
    picard: on each window the map F is iterated from the frozen initial state
    until the weak-norm increment of successive iterates is below tol.
    """
    if mode not in ("splitting", "picard"):
        raise ValueError(f"unknown coupling mode {mode!r}")
    W0 = W0.coeffs if isinstance(W0, WField) else np.asarray(W0, dtype=float)
    n_total = _n_steps(prob, T)
    params, q, grid = prob.params, prob.q, prob.grid
    rec = dict(times=[], vs=[], masses=[], minf=[], tau=[])

    def record(v, W, t):
        wf = WField(W, grid, q, t)
        rec["times"].append(t)
        rec["vs"].append(v)
        rec["masses"].append(node_masses(wf, params, q, t, prob.forms))
        rec["minf"].append(min_f(wf, params, q, t) if track_min_f else np.nan)
        rec["tau"].append(prob.stress(W, t))

    iters = []
    if mode == "splitting":
        for k, v, W in _levels(prob, v0, W0, n_total):
            record(v, W, v0.time + k * prob.dt)
        W_last = W
    else:
        per = max(1, int(round(T_window / prob.dt)))
        v, W = v0, W0
        done = 0
        record(v, W, v0.time)
        while done < n_total:
            m = min(per, n_total - done)
            guess: Path = ConstantPath(v, W, v.time)
            prev = None
            for it in range(1, max_iters + 1):
                out = picard_map(prob, guess, guess, v, W, m * prob.dt)
                if prev is not None and path_distance(prob, out, prev, m + 1) < tol ** 2:
                    break
                prev, guess = out, out
            else:
                raise SolverError(f"Picard iteration did not converge in {max_iters} iterations "
                                  f"on the window starting at t={v.time:g}")
            iters.append(it)
            for k in range(1, m + 1):
                record(out.vs[k], out.ws[k], v0.time + (done + k) * prob.dt)
            v, W = out.vs[-1], out.ws[-1]
            done += m
        W_last = W
    return CoupledTrajectory(mode, np.array(rec["times"]), rec["vs"], np.array(rec["masses"]),
                             np.array(rec["minf"]), rec["tau"], iters,
                             WField(W_last, grid, q, v0.time + n_total * prob.dt))
