"""Per-node Fokker-Planck fields, polymer stress and the batched local step."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from fenelab import weights as wt
from fenelab.errors import GridMismatch, SolverError
from fenelab.fp_solver import (BoundaryProfile, DiscreteForms, _project_terms, assemble_forms,
                               source_from_q)
from fenelab.geometry import ConfigGrid
from fenelab.coupled.spectral import FlowField
from fenelab.weights import KappaMatrix, ModelParams


@dataclass
class WField:
    """Coefficients of w at every spatial node: shape (n_x * n_x, n_unknowns), row = node."""

    coeffs: np.ndarray
    grid: ConfigGrid
    q: BoundaryProfile
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2 or self.coeffs.shape[1] != self.grid.n_unknowns:
            raise GridMismatch("WField coefficients do not match the configuration grid")
        if not np.all(np.isfinite(self.coeffs)):
            raise SolverError(f"non-finite w at t={self.time}")

    @property
    def n_nodes(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_x(self) -> int:
        return int(round(np.sqrt(self.n_nodes)))

    @classmethod
    def uniform(cls, w0, n_x, grid, q, time=0.0):
        w0 = np.asarray(w0, dtype=float)
        return cls(np.tile(w0, (n_x * n_x, 1)), grid, q, time)

    def replace(self, coeffs, time=None):
        return WField(coeffs, self.grid, self.q, self.time if time is None else time)


@dataclass
class StressField:
    """Components (11, 12, 22) per node, shape (3, n_x, n_x); tau_21 = tau_12 by storage."""

    comps: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.comps)):
            raise SolverError("non-finite stress")

    def tensor(self) -> np.ndarray:
        c = self.comps
        return np.array([[c[0], c[1]], [c[1], c[2]]])


@dataclass
class CoupledState:
    v: FlowField
    w: WField
    t: float

    def __post_init__(self):
        if not (np.isclose(self.v.time, self.t, atol=1e-12) and np.isclose(self.w.time, self.t, atol=1e-12)):
            raise ValueError("component times differ")


def stress_functionals(grid: ConfigGrid, params: ModelParams):
    """Vectors L (n_unknowns, 3) with tau_ij = b int m_i m_j w nu/rho dm = (w @ L)_ij."""
    r, th = grid.quad_mesh
    rho = grid.quad_rho_2d
    dens = params.b * wt.nu(rho, params) / rho * r * r
    trig = [np.cos(th) ** 2, np.cos(th) * np.sin(th), np.sin(th) ** 2]
    return np.stack([_project_terms(grid, dens * t) for t in trig], axis=1)


def _stress_of_q(grid, params, q, t):
    if q.is_zero:
        return np.zeros(3)
    r, th = grid.quad_mesh
    rho = grid.quad_rho_2d
    dens = params.b * wt.nu(rho, params) / rho * r * r * q.value(t, r, th)
    trig = [np.cos(th) ** 2, np.cos(th) * np.sin(th), np.sin(th) ** 2]
    W = grid.quad_weights_2d
    return np.array([float(np.sum(W * dens * tr)) for tr in trig])


def compute_stress(w: WField, q, grid, params, t, functionals=None) -> StressField:
    L = stress_functionals(grid, params) if functionals is None else functionals
    n = w.n_x
    tau = w.coeffs @ L + _stress_of_q(grid, params, q, t)[None, :]
    return StressField(tau.T.reshape(3, n, n))


class _BlockSolver:
    """Solver for many right-hand sides of a matrix that splits into small coupled blocks.

    The kappa-free operator couples only equal angular modes, so each block is one
    mode's radial system and applying dense block inverses beats a sparse LU here.
    """

    max_block = 1500

    def __init__(self, A):
        A = A.tocsr()
        n_comp, labels = connected_components(A, directed=False)
        sizes = np.bincount(labels)
        self.lu = None
        if sizes.max() > self.max_block:
            self.lu = spla.splu(A.tocsc())
            return
        self.blocks = []
        for c in range(n_comp):
            idx = np.nonzero(labels == c)[0]
            self.blocks.append((idx, np.linalg.inv(A[idx][:, idx].toarray())))

    def solve(self, R):
        if self.lu is not None:
            return self.lu.solve(R)
        out = np.empty_like(R)
        for idx, inv in self.blocks:
            out[idx] = inv @ R[idx]
        return out


class FieldStepper:
    """Crank-Nicolson step of the w-problem at every node with its own kappa.

    Solves (M + dt/2 B(kappa_x)) w' = (M - dt/2 B(kappa_x)) w + dt h(kappa_x) with
    B(kappa) = B0 + sum_k kappa_k B_k.  The kappa-free matrix is factored once; the
    kappa terms are handled by a Richardson iteration that falls back to a direct
    per-node solve when it stalls.
    """

    def __init__(self, grid: ConfigGrid, params: ModelParams, q: BoundaryProfile, dt: float,
                 forms: DiscreteForms = None, threads: int = 1, tol=1e-12, max_iter=60):
        self.grid, self.params, self.q, self.dt = grid, params, q, dt
        self.forms = forms or assemble_forms(grid, params)
        self.M = self.forms.mass_mu.tocsr()
        self.B0 = self.forms.bilinear_zero.tocsr()
        self.Bk = [m.tocsr() for m in self.forms.kappa_basis]
        self.A0 = (self.M + 0.5 * dt * self.B0).tocsc()
        self.lu = _BlockSolver(self.A0)
        self.threads = max(1, int(threads))
        self.tol, self.max_iter = tol, max_iter
        self.fallbacks = 0
        self._src_cache = {}

    def sources(self, t):
        """(h0, H) with h(kappa) = h0 + kappa @ H at time t."""
        if self.q.is_zero:
            z = np.zeros(self.grid.n_unknowns)
            return z, np.zeros((3, len(z)))
        if not self.q.time_dependent and self._src_cache:
            return self._src_cache["v"]
        g, p = self.grid, self.params
        h0 = source_from_q(g, p, KappaMatrix.zero(), self.q, t)
        unit = [KappaMatrix.from_components(1.0, 0.0, 0.0), KappaMatrix.from_components(0.0, 1.0, 0.0),
                KappaMatrix.from_components(0.0, 0.0, 1.0)]
        H = np.stack([source_from_q(g, p, k, self.q, t) - h0 for k in unit])
        if not self.q.time_dependent:
            self._src_cache["v"] = (h0, H)
        return h0, H

    def _apply_kappa(self, X, kap):
        """Columns sum_k kappa_k(x) B_k x_x for unknown-major X (n_unk, n_nodes)."""
        out = np.zeros_like(X)
        for k in range(3):
            if np.any(kap[:, k]):
                tmp = self.Bk[k] @ X
                tmp *= kap[None, :, k]
                out += tmp
        return out

    def step(self, W, kap, t):
        """Advance node-major coefficients W (n_nodes, n_unk) from t to t + dt."""
        dt = self.dt
        h0p, Hp = self.sources(t)
        h0n, Hn = self.sources(t + dt)
        Wt = np.ascontiguousarray(W.T)
        hbar = 0.5 * (h0p + h0n)[:, None] + (0.5 * (Hp + Hn)).T @ kap.T
        rhs = self.M @ Wt - 0.5 * dt * (self.B0 @ Wt + self._apply_kappa(Wt, kap)) + dt * hbar
        X = self.lu.solve(rhs)
        if np.any(kap):
            scale = max(float(np.max(np.abs(rhs))), 1e-300)
            done = False
            for _ in range(self.max_iter):
                Xn = self.lu.solve(rhs - 0.5 * dt * self._apply_kappa(X, kap))
                change = float(np.max(np.abs(Xn - X)))
                X = Xn
                if change <= self.tol * max(scale, float(np.max(np.abs(X)))):
                    done = True
                    break
            if not done:
                X = self._direct(rhs.T, kap).T
        if not np.all(np.isfinite(X)):
            raise SolverError(f"batched field step produced non-finite values at t={t + dt:g}")
        return np.ascontiguousarray(X.T)

    def _direct(self, rhs, kap):
        self.fallbacks += 1
        dt = self.dt

        def one(i):
            A = self.A0 + 0.5 * dt * sum(kap[i, k] * self.Bk[k] for k in range(3))
            return spla.splu(A.tocsc()).solve(rhs[i])

        if self.threads == 1:
            rows = [one(i) for i in range(rhs.shape[0])]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                rows = list(ex.map(one, range(rhs.shape[0])))
        return np.array(rows)


def node_masses(w: WField, params: ModelParams, q, t, forms: DiscreteForms):
    """Per-node int f dm = psi^T M w_x + int nu q (b >= 2)."""
    g = w.grid
    psi = forms.mass_vector
    Mpsi = forms.mass_mu.T @ psi
    base = 0.0
    if not q.is_zero:
        r, th = g.quad_mesh
        base = float(np.sum(g.quad_weights_2d * wt.nu(g.quad_rho_2d, params) * q.value(t, r, th)))
    return w.coeffs @ Mpsi + base


def min_f(w: WField, params: ModelParams, q, t) -> float:
    """Smallest f over interior radial nodes x quadrature angles x spatial nodes."""
    g = w.grid
    r = g.radial.nodes[:-1][:, None]
    th = g.theta[None, :]
    rho = g.radial.rho_nodes[:-1][:, None]
    nu = wt.nu(rho, params)
    qv = q.value(t, r, th) * np.ones((len(r), len(g.theta)))
    full = np.zeros((w.n_nodes, g.dof_mask.size))
    full[:, g.dof_index] = w.coeffs
    e, _ = g.angular_basis
    vals = full.reshape(w.n_nodes, *g.dof_mask.shape)[:, :-1, :] @ e.T
    return float(np.min(nu[None] * (vals + qv[None])))
