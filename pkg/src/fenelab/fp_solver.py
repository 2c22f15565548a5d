"""Galerkin discretization and Crank-Nicolson stepping of the transformed problem

    mu dw/dt + L[w] = mu h,   w = 0 on the rim,   f = nu (w + q).

Unknowns are coefficients of radial hats times real Fourier modes.  Rows of
every matrix are indexed by test functions and columns by trial functions.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fenelab import weights as wt
from fenelab.errors import AssemblyError, DomainError, SolverError
from fenelab.geometry import ConfigGrid
from fenelab.weights import KappaMatrix, ModelParams, WeightRegime

log = logging.getLogger(__name__)


@dataclass
class WState:
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if not np.all(np.isfinite(self.coeffs)):
            raise SolverError(f"non-finite coefficients at t={self.time}")


# --- boundary data ------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryProfile:
    """Boundary ratio q(t, r, theta), extended smoothly into the ball.

    ``grad_fn`` returns (dq/dr, (1/r) dq/dtheta); when absent it is obtained
    by central differences.
    """

    q_fn: Callable
    qt_fn: Optional[Callable] = None
    tag: str = "custom"
    grad_fn: Optional[Callable] = None
    time_dependent: bool = False

    def value(self, t, r, th):
        return np.broadcast_to(np.asarray(self.q_fn(t, r, th), dtype=float), np.broadcast(r, th).shape)

    def dt(self, t, r, th):
        if self.qt_fn is None:
            return np.zeros(np.broadcast(r, th).shape)
        return np.broadcast_to(np.asarray(self.qt_fn(t, r, th), dtype=float), np.broadcast(r, th).shape)

    def grad(self, t, r, th):
        shape = np.broadcast(r, th).shape
        if self.grad_fn is not None:
            gr, gt = self.grad_fn(t, r, th)
            return np.broadcast_to(gr, shape), np.broadcast_to(gt, shape)
        h = 1e-6
        gr = (self.value(t, r + h, th) - self.value(t, r - h, th)) / (2 * h)
        gt = (self.value(t, r, th + h) - self.value(t, r, th - h)) / (2 * h * r)
        return gr, gt

    @property
    def is_zero(self) -> bool:
        return self.tag == "zero"

    # presets
    @classmethod
    def zero(cls):
        return cls(lambda t, r, th: 0.0, tag="zero",
                   grad_fn=lambda t, r, th: (0.0, 0.0))

    @classmethod
    def constant(cls, c=1.0):
        c = float(c)
        return cls(lambda t, r, th: c, tag=f"constant({c:g})",
                   grad_fn=lambda t, r, th: (0.0, 0.0))

    @classmethod
    def angular(cls, b, c=1.0, j=1):
        """c (r/sqrt b)^j cos(j theta): a smooth extension of c cos(j theta)."""
        sb, c, j = np.sqrt(b), float(c), int(j)
        if j == 0:
            return cls.constant(c)

        def q(t, r, th):
            return c * (r / sb) ** j * np.cos(j * th)

        def g(t, r, th):
            return (c * j * r ** (j - 1) / sb ** j * np.cos(j * th),
                    -c * j * r ** (j - 1) / sb ** j * np.sin(j * th))

        return cls(q, tag=f"angular({c:g},{j})", grad_fn=g)

    @classmethod
    def equilibrium_ratio(cls, params: ModelParams):
        """rho^{b/2} / nu; identically 1 when b < 2."""
        if params.b < 2:
            return cls(lambda t, r, th: 1.0, tag="equilibrium_ratio",
                       grad_fn=lambda t, r, th: (0.0, 0.0))
        b = params.b
        return cls(lambda t, r, th: _eq_ratio(b - r * r, params), tag="equilibrium_ratio")

    @classmethod
    def series(cls, b, coeffs):
        """sum_j c_j (r/sqrt b)^|j| trig(j theta); negative j means sine."""
        terms = [(int(j), float(c)) for j, c in dict(coeffs).items()]
        sb = np.sqrt(b)

        def q(t, r, th):
            out = 0.0
            for j, c in terms:
                k = abs(j)
                trig = np.sin(k * th) if j < 0 else np.cos(k * th)
                out = out + c * (r / sb) ** k * trig
            return out

        def g(t, r, th):
            gr, gt = 0.0, 0.0
            for j, c in terms:
                k = abs(j)
                if k == 0:
                    continue
                rad = c * k * r ** (k - 1) / sb ** k
                if j < 0:
                    gr = gr + rad * np.sin(k * th)
                    gt = gt + rad * np.cos(k * th)
                else:
                    gr = gr + rad * np.cos(k * th)
                    gt = gt - rad * np.sin(k * th)
            return gr, gt

        return cls(q, tag="series", grad_fn=g)


def _eq_ratio(rho, params):
    rho = np.asarray(rho, dtype=float)
    safe = np.where(rho > 0, rho, 1.0)
    return np.where(rho > 0, safe ** (params.b / 2) / wt.nu(safe, params), 0.0)


# --- assembly -------------------------------------------------------------------

def _angular_factors(grid: ConfigGrid):
    """Trapezoid-exact angular matrices for the radial/angular split of kappa m."""
    th = grid.theta
    c2, s2 = np.cos(2 * th), np.sin(2 * th)
    one = np.ones_like(th)
    # a = e_r.kappa e_r and b = e_theta.kappa e_r, each linear in (k11, k12, k21)
    a_parts = [c2, 0.5 * s2, 0.5 * s2]
    b_parts = [-s2, -0.5 * (one - c2), 0.5 * (one + c2)]
    Ea = [grid.angular_gram(a) for a in a_parts]
    Eb = [grid.angular_gram(bp, d_left=True) for bp in b_parts]
    return Ea, Eb


def _radial(phi_l, w, phi_r):
    return sp.csr_matrix(phi_l.T @ (w[:, None] * phi_r))


@dataclass(eq=False)
class DiscreteForms:
    grid: ConfigGrid
    params: ModelParams
    mass_mu: sp.csr_matrix
    stiffness: sp.csr_matrix
    base_reaction: sp.csr_matrix          # kappa-free part of -int K phi phi
    drift_basis: list                     # linear in (k11, k12, k21)
    reaction_basis: list
    first_order: Optional[sp.csr_matrix] = None
    kappa: KappaMatrix = field(default_factory=KappaMatrix.zero)

    def _combine(self, mats, kappa):
        out = sp.csr_matrix(self.mass_mu.shape)
        for c, m in zip(kappa.components, mats):
            if c != 0.0:
                out = out + c * m
        return out

    @property
    def drift(self) -> sp.csr_matrix:
        return self._combine(self.drift_basis, self.kappa)

    @property
    def reaction(self) -> sp.csr_matrix:
        return self.base_reaction + self._combine(self.reaction_basis, self.kappa)

    @property
    def kappa_basis(self) -> list:
        """B(kappa) = B(0) + sum_k kappa_k * kappa_basis[k]."""
        return [d + r for d, r in zip(self.drift_basis, self.reaction_basis)]

    @property
    def bilinear_zero(self) -> sp.csr_matrix:
        out = self.stiffness + self.base_reaction
        if self.first_order is not None:
            out = out + self.first_order
        return out.tocsr()

    @property
    def bilinear(self) -> sp.csr_matrix:
        """Matrix B with phi^T B w = B[w, phi] for the current kappa."""
        return (self.bilinear_zero + self._combine(self.kappa_basis, self.kappa)).tocsr()

    @property
    def gradient_gram(self) -> sp.csr_matrix:
        """int grad w . grad phi mu, i.e. twice the stiffness."""
        return 2.0 * self.stiffness

    def with_kappa(self, kappa: KappaMatrix) -> "DiscreteForms":
        return replace(self, kappa=kappa)

    @property
    def mass_vector(self) -> np.ndarray:
        """Coefficients c with c^T M w = int nu w (b >= 2 only)."""
        return mass_functional(self.grid)


def mass_functional(grid: ConfigGrid) -> np.ndarray:
    if wt.regime(grid.params) is WeightRegime.SUB2:
        raise DomainError("nu/mu is not in the discrete space for b < 2")
    full = np.zeros(grid.dof_mask.shape)
    full[:, 0] = grid.radial.s_nodes
    return full.reshape(-1)[grid.dof_index]


def _check_params(grid: ConfigGrid, params: ModelParams):
    if params.n_conf != 2:
        raise AssemblyError("the discrete solver is built for n_conf = 2")
    if params.b != grid.b or params.theta != grid.params.theta:
        raise AssemblyError("grid was built for different model parameters")


def assemble_forms(grid: ConfigGrid, params: ModelParams, kappa: KappaMatrix = None) -> DiscreteForms:
    _check_params(grid, params)
    kappa = KappaMatrix.zero() if kappa is None else kappa
    rad = grid.radial
    rho = rad.quad_rho
    if np.any(rho <= 0):
        raise AssemblyError("quadrature point with rho <= 0")
    r, A = rad.quad_points, rad.area_weights
    phi, dphi = rad.basis_s          # derivative weights below carry ds/dr
    AJ, muAJ2 = rad.area_jac, rad.mu_area_jac2
    mu = wt.mu_active(rho, params)
    E00 = sp.csr_matrix(grid.angular_gram())
    E11 = sp.csr_matrix(grid.angular_gram(d_left=True, d_right=True))
    Ea, Eb = _angular_factors(grid)
    idx = grid.dof_index

    def kr(R, E):
        # trapezoid Grams of Fourier modes are exactly sparse; drop the round-off
        E = E.toarray() if sp.issparse(E) else np.asarray(E)
        E = np.where(np.abs(E) > 1e-13 * max(np.abs(E).max(), 1e-300), E, 0.0)
        return sp.kron(R, sp.csr_matrix(E), format="csr")[idx][:, idx]

    mass = kr(_radial(phi, mu * A, phi), E00)
    stiff = 0.5 * (kr(_radial(dphi, muAJ2, dphi), E00) + kr(_radial(phi, mu * A / r ** 2, phi), E11))
    Rd1 = _radial(dphi, mu * r * AJ, phi)
    Rd2 = _radial(phi, mu * A, phi)
    drift_basis = [-(kr(Rd1, Ea[k]) + kr(Rd2, Eb[k])) for k in range(3)]

    reg = wt.regime(params)
    if reg is WeightRegime.SUB2:
        zero = sp.csr_matrix(mass.shape)
        base = zero
        reaction_basis = [zero, zero, zero]
    else:
        c1, c2 = wt.reaction_parts(rho, params)
        base = -kr(_radial(phi, c1 * A, phi), E00)
        Rr = _radial(phi, 2 * c2 * r ** 2 * A, phi)
        reaction_basis = [-kr(Rr, Ea[k]) for k in range(3)]
    first = None
    if reg is WeightRegime.ALT_THETA:
        c = 2 - params.b / 2 - params.theta
        first = kr(_radial(phi, c * rho ** (params.theta - 1) * r * AJ, dphi), E00)
    forms = DiscreteForms(grid, params, mass, stiff, base, drift_basis, reaction_basis, first, kappa)
    for m in [mass, stiff, base, first] + drift_basis + reaction_basis:
        if m is not None and not np.all(np.isfinite(m.data)):
            raise AssemblyError("non-finite entries in the assembled forms")
    return forms


# --- direct quadrature of the bilinear form -----------------------------------

def _fields_from_polar(grid, vals, gr, gt):
    r, th = grid.quad_mesh
    c, s = np.cos(th), np.sin(th)
    gx = gr * c - gt * s
    gy = gr * s + gt * c
    m = np.stack([r * c, r * s], axis=-1)
    return m, vals, np.stack([gx, gy], axis=-1)


def coeff_field(grid: ConfigGrid, coeffs):
    """(values, d/dr, (1/r) d/dtheta) of a discrete function on the quad mesh."""
    vals = grid.to_quad(coeffs)
    gr, gt = grid.grad_to_quad(coeffs)
    return vals, gr, gt


def bilinear_direct(grid: ConfigGrid, params: ModelParams, kappa: KappaMatrix, w_field, phi_field) -> float:
    """B[w, phi] by quadrature of the pointwise integrand in Cartesian form.

    Each field is (values, d/dr, (1/r) d/dtheta) on the quadrature mesh.
    """
    m, w, gw = _fields_from_polar(grid, *w_field)
    _, p, gp = _fields_from_polar(grid, *phi_field)
    rho = grid.quad_rho_2d
    mu = wt.mu_active(rho, params)
    km = m @ kappa.entries.T
    reg = wt.regime(params)
    if reg is WeightRegime.ALT_THETA:
        K = wt.k0_coeff(m, kappa, params, rho_val=rho)
    else:
        K = wt.k_coeff(m, kappa, params, rho_val=rho)
    # multiply mu in first: near the rim at b = 2 the hat gradients are huge
    integrand = 0.5 * np.sum((mu[..., None] * gw) * gp, -1) - w * mu * np.sum(km * gp, -1) - K * w * p
    if reg is WeightRegime.ALT_THETA:
        c = 2 - params.b / 2 - params.theta
        integrand = integrand + c * rho ** (params.theta - 1) * np.sum(m * gw, -1) * p
    return float(np.sum(integrand * grid.quad_weights_2d))


def _project_terms(grid, val, dr_part=None, dt_part=None):
    """Entries sum_quad (val phi + dr_part phi_r + dt_part phi_theta / r) for every basis function."""
    rad = grid.radial
    phi, dphi = rad.basis_s
    e, de = grid.angular_basis
    W = grid.quad_weights_2d
    out = phi.T @ (W * val) @ e
    if dr_part is not None:
        WJ = rad.area_jac[:, None] * grid.dtheta
        out = out + dphi.T @ (WJ * dr_part) @ e
    if dt_part is not None:
        r = grid.radial.quad_points[:, None]
        out = out + phi.T @ (W * dt_part / r) @ de
    return out.reshape(-1)[grid.dof_index]


def form_against_basis(grid: ConfigGrid, params: ModelParams, kappa: KappaMatrix,
                       vals, gr, gt) -> np.ndarray:
    """Vector with entries B[u, phi_i] for a field u given on the quad mesh."""
    r, th = grid.quad_mesh
    rho = grid.quad_rho_2d
    mu = wt.mu_active(rho, params)
    k11, k12, k21 = kappa.components
    a = k11 * np.cos(2 * th) + 0.5 * (k12 + k21) * np.sin(2 * th)
    bb = -k11 * np.sin(2 * th) - 0.5 * k12 * (1 - np.cos(2 * th)) + 0.5 * k21 * (1 + np.cos(2 * th))
    reg = wt.regime(params)
    if reg is WeightRegime.SUB2:
        K = np.zeros_like(rho)
    else:
        c1, c2 = wt.reaction_parts(rho, params)
        K = c1 + 2 * c2 * r * r * a
    val = -K * vals
    if reg is WeightRegime.ALT_THETA:
        c = 2 - params.b / 2 - params.theta
        val = val + c * rho ** (params.theta - 1) * r * gr
    dr_part = 0.5 * mu * gr - vals * mu * r * a
    dt_part = 0.5 * mu * gt - vals * mu * bb * r
    return _project_terms(grid, val, dr_part, dt_part)


def source_from_q(grid: ConfigGrid, params: ModelParams, kappa: KappaMatrix, q: BoundaryProfile, t: float) -> np.ndarray:
    """Dual vector h_i = -int q_t phi_i mu - B[q, phi_i]."""
    if q.is_zero:
        return np.zeros(grid.n_unknowns)
    r, th = grid.quad_mesh
    vals = q.value(t, r, th)
    gr, gt = q.grad(t, r, th)
    qt = q.dt(t, r, th)
    mu = wt.mu_active(grid.quad_rho_2d, params)
    h = -form_against_basis(grid, params, kappa, vals, gr, gt)
    if np.any(qt != 0):
        h = h - _project_terms(grid, qt * mu)
    return h


# --- initial data ----------------------------------------------------------------

def interpolate(grid: ConfigGrid, fn) -> np.ndarray:
    """Nodal interpolation in r, discrete Fourier projection in theta.

    The rim node is dropped, so data that does not vanish there is cut off.
    """
    rn = grid.radial.nodes[:-1]
    th = grid.theta
    vals = np.asarray(fn(rn[:, None], th[None, :]), dtype=float) * np.ones((len(rn), len(th)))
    e, _ = grid.angular_basis
    norms = np.sum(e * e, axis=0)
    coef = vals @ e / norms
    full = np.zeros(grid.dof_mask.shape)
    full[:-1] = coef
    return full.reshape(-1)[grid.dof_index]


def project(grid: ConfigGrid, fn, forms: DiscreteForms = None) -> np.ndarray:
    """L2_mu projection onto the discrete space."""
    forms = forms or assemble_forms(grid, grid.params)
    r, th = grid.quad_mesh
    mu = wt.mu_active(grid.quad_rho_2d, grid.params)
    rhs = _project_terms(grid, np.asarray(fn(r, th), dtype=float) * mu)
    return spla.spsolve(forms.mass_mu.tocsc(), rhs)


def w0_from_f0(grid: ConfigGrid, f0, q: BoundaryProfile, method="interpolate") -> np.ndarray:
    """Initial coefficients for w0 = f0/nu - q(0)."""
    params = grid.params

    def u(r, th):
        rho = np.maximum(grid.b - r * r, 0.0)
        safe = np.where(rho > 0, rho, 1.0)
        f = np.asarray(f0(r, th), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rho > 0, f / wt.nu(safe, params), 0.0)
        return ratio - q.value(0.0, r, th)

    if method == "interpolate":
        return interpolate(grid, u)
    if method == "project":
        return project(grid, u)
    raise ValueError(f"unknown initialization method {method!r}")


def equilibrium(params: ModelParams):
    """f_eq = rho^{b/2} as a callable of (r, theta)."""
    b = params.b
    return lambda r, th: np.maximum(b - r * r, 0.0) ** (b / 2) + 0.0 * th


# --- time stepping -------------------------------------------------------------------

class _Factor:
    """Cached factorization of M + dt/2 B."""

    def __init__(self, forms: DiscreteForms, dt: float):
        self.dt = dt
        self.kappa = forms.kappa
        self.B = forms.bilinear
        self.M = forms.mass_mu
        self.A = (self.M + 0.5 * dt * self.B).tocsc()
        try:
            self.lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed ({exc}); condition ~ {_cond(self.A):.3e}") from exc

    def solve(self, rhs):
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"linear solve produced non-finite values; condition ~ {_cond(self.A):.3e}")
        return x


def _cond(A):
    if A.shape[0] > 4000:
        return float("nan")
    return float(np.linalg.cond(A.toarray()))


def step(w: WState, dt: float, forms: DiscreteForms, h_prev, h_next, factor: _Factor = None) -> WState:
    """One Crank-Nicolson step with the trapezoidal source average."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    fac = factor if factor is not None else _Factor(forms, dt)
    rhs = fac.M @ w.coeffs - 0.5 * dt * (fac.B @ w.coeffs) + 0.5 * dt * (h_prev + h_next)
    return WState(fac.solve(rhs), w.time + dt)


def _euler_halves(w: WState, dt, fac: _Factor, h_mid, h_next) -> WState:
    """Two implicit-Euler half steps; share the Crank-Nicolson matrix."""
    half = 0.5 * dt
    x = fac.solve(fac.M @ w.coeffs + half * h_mid)
    x = fac.solve(fac.M @ x + half * h_next)
    return WState(x, w.time + dt)


@dataclass
class StepLog:
    kind: str            # "cn" or "euler2"
    dt: float
    kappa: KappaMatrix


@dataclass
class Trajectory:
    grid: ConfigGrid
    params: ModelParams
    q: BoundaryProfile
    times: np.ndarray
    coeffs: np.ndarray                   # (n_times, n_unknowns)
    diagnostics: list
    steps: list                          # StepLog per step
    sources: np.ndarray                  # h at each time level, (n_times, n_unknowns)

    def state(self, k) -> WState:
        return WState(self.coeffs[k], float(self.times[k]))

    @property
    def final(self) -> WState:
        return self.state(-1)


def _as_path(kappa_path):
    if kappa_path is None:
        return lambda t: KappaMatrix.zero()
    if isinstance(kappa_path, KappaMatrix):
        return lambda t: kappa_path
    return kappa_path


def solve_fp(w0, q: BoundaryProfile, kappa_path, T, dt, grid: ConfigGrid, params: ModelParams,
             *, startup_steps=2, forms: DiscreteForms = None, diagnostics=True) -> Trajectory:
    """Integrate from w0 to T.

    ``startup_steps`` Crank-Nicolson steps at the start are replaced by pairs of
    implicit-Euler half steps, which damps the stiff modes excited by data that
    is incompatible with the boundary condition.
    """
    from fenelab import diagnostics as dg

    if T < 0:
        raise ValueError("T must be nonnegative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = q if q is not None else BoundaryProfile.zero()
    path = _as_path(kappa_path)
    w = w0 if isinstance(w0, WState) else WState(np.asarray(w0, dtype=float), 0.0)
    if w.coeffs.shape != (grid.n_unknowns,):
        raise ValueError(f"w0 has {w.coeffs.shape} coefficients, grid expects {grid.n_unknowns}")
    base = forms if forms is not None else assemble_forms(grid, params)
    n_steps = int(round(T / dt))
    if n_steps and abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a multiple of dt")
    t0 = w.time

    h_cache: dict = {}

    def source(t, kap):
        key = (None if not q.time_dependent else round(t, 12), kap.components)
        if key not in h_cache:
            if len(h_cache) > 8:
                h_cache.clear()
            h_cache[key] = source_from_q(grid, params, kap, q, t)
        return h_cache[key]

    times = [t0]
    coeffs = [w.coeffs.copy()]
    sources = [source(t0, path(t0))]
    steps = []
    fac = None
    for k in range(n_steps):
        t = t0 + k * dt
        kap = path(t + 0.5 * dt)
        if fac is None or not fac.kappa.close_to(kap):
            fac = _Factor(base.with_kappa(kap), dt)
        if k < startup_steps:
            w = _euler_halves(w, dt, fac, source(t + 0.5 * dt, kap), source(t + dt, kap))
            kind = "euler2"
        else:
            w = step(w, dt, None, source(t, kap), source(t + dt, kap), factor=fac)
            kind = "cn"
        w.time = t0 + (k + 1) * dt
        times.append(w.time)
        coeffs.append(w.coeffs.copy())
        sources.append(source(w.time, kap))
        steps.append(StepLog(kind, dt, kap))
    times = np.array(times)
    coeffs = np.array(coeffs)
    traj = Trajectory(grid, params, q, times, coeffs, [], steps, np.array(sources))
    if diagnostics:
        traj.diagnostics = dg.diagnostics_series(traj, base)
    return traj


def reconstruct_f(w, q: BoundaryProfile, grid: ConfigGrid, params: ModelParams, t: float = None, where="nodes"):
    """f = nu (w + q) on interior nodes x quadrature angles (or the quad mesh)."""
    coeffs = w.coeffs if isinstance(w, WState) else np.asarray(w, dtype=float)
    if t is None:
        t = w.time if isinstance(w, WState) else 0.0
    q = q if q is not None else BoundaryProfile.zero()
    if where == "nodes":
        r = grid.radial.nodes[:-1][:, None]
        rho = grid.radial.rho_nodes[:-1][:, None]
        th = grid.theta[None, :]
        wv = grid.to_nodes(coeffs)
    elif where == "quad":
        r, th = grid.quad_mesh
        rho = grid.quad_rho_2d
        wv = grid.to_quad(coeffs)
    else:
        raise ValueError(f"unknown location set {where!r}")
    return wt.nu(rho, params) * (wv + q.value(t, r, th))


def export_trajectory_csv(traj: Trajectory, path, every: int = 1):
    """Snapshots as rows (t, r, theta, w, f) on interior nodes."""
    grid = traj.grid
    r = grid.radial.nodes[:-1]
    th = grid.theta
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "r", "theta", "w", "f"])
        for k in range(0, len(traj.times), every):
            t = float(traj.times[k])
            wv = grid.to_nodes(traj.coeffs[k])
            fv = reconstruct_f(traj.coeffs[k], traj.q, grid, traj.params, t)
            for i in range(len(r)):
                for j in range(len(th)):
                    wr.writerow([f"{t:.12g}", f"{r[i]:.12g}", f"{th[j]:.12g}",
                                 f"{wv[i, j]:.12e}", f"{fv[i, j]:.12e}"])
