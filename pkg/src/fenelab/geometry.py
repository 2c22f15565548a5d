"""Radial meshes, angular Fourier modes and quadrature on the disk B(0, sqrt(b)).

Radial hats are piecewise linear in a *working coordinate*.  For b < 2 that
coordinate is r itself.  For b >= 2 it is s = nu/mu_active(rho), a monotone
function of rho.  Since nu/mu is then a single hat combination, the discrete
mass functional is exact and discrete mass conservation holds to round-off.

Gauss points are placed per cell in the working coordinate, so no quadrature
point ever lies on the circle r = sqrt(b).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from fenelab import weights as wt
from fenelab.errors import DomainError
from fenelab.weights import ModelParams, WeightRegime


@dataclass(frozen=True, eq=False)
class RadialMesh:
    b: float
    nodes: np.ndarray            # r values, ascending, nodes[-1] == sqrt(b)
    dist: np.ndarray             # sqrt(b) - r, computed without cancellation
    grading_exponent: float
    coordinate: str              # "r" or "s"
    params: ModelParams
    n_gauss: int = 4
    quad_points: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x, wg = np.polynomial.legendre.leggauss(self.n_gauss)
        x = 0.5 * (x + 1.0)
        wg = 0.5 * wg
        n = self.n_cells
        if self.coordinate == "r":
            cell = np.repeat(np.arange(n), self.n_gauss)
            xl = np.tile(x, n)
            h = (self.nodes[1:] - self.nodes[:-1])[cell]
            d_q = self.dist[1:][cell] + h * (1.0 - xl)
            r_q = self.nodes[:-1][cell] + h * xl
            rho_q = d_q * (2 * np.sqrt(self.b) - d_q)
            dr = h * np.tile(wg, n)
            area = r_q * dr
            s_q = r_q
            ds_dr = np.ones_like(r_q)
        else:
            cell, s_q, ws = self._s_rule(x, wg)
            sl, sr = self.s_nodes[:-1][cell], self.s_nodes[1:][cell]
            xl = (s_q - sl) / (sr - sl)
            rho_q = wt.rho_from_nu_over_mu(s_q, self.params)
            # area element r dr = |d rho| / 2
            area = 0.5 * wt.d_rho_d_ratio(s_q, self.params) * ws
            r_q = np.sqrt(np.maximum(self.b - rho_q, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                dr = np.where(r_q > 0, area / np.where(r_q > 0, r_q, 1.0), 0.0)
            ds_dr = wt.d_nu_over_mu(rho_q, self.params) * (-2.0 * r_q)
        if np.any(rho_q <= 0):
            raise DomainError("quadrature point on the boundary")
        object.__setattr__(self, "quad_points", r_q)
        object.__setattr__(self, "quad_weights", dr)
        object.__setattr__(self, "_area", area)
        object.__setattr__(self, "_rho", rho_q)
        object.__setattr__(self, "_s", s_q)
        object.__setattr__(self, "_ds_dr", ds_dr)
        object.__setattr__(self, "_cell", cell)
        object.__setattr__(self, "_xloc", xl)
        # A * ds/dr and mu * A * (ds/dr)^2 in overflow-free form
        if self.coordinate == "r":
            aj = area
            mu_aj2 = wt.mu_active(rho_q, self.params) * area
        else:
            aj = -r_q * ws
            mu_aj2 = 2.0 * r_q ** 2 * ws * wt.mu_times_ratio_slope(self.params)
        object.__setattr__(self, "_area_jac", aj)
        object.__setattr__(self, "_mu_area_jac2", mu_aj2)

    # Boundary cell in the s coordinate: hats are still linear in s, but the
    # map rho(s) is not polynomial there (exp(1 - 1/s) at b = 2), so the cell
    # is split into pieces geometric in rho before applying Gauss.
    _LOG_STEP = 0.5
    _LOG_DEPTH = 40.0
    _RHO_FLOOR = np.exp(-40.0)
    _RHO_TINY = 1e-280

    def _s_rule(self, x, wg):
        n = self.n_cells
        sn, rn = self.s_nodes, self.rho_nodes
        # s ~ rho^p near the rim; keep both ratios per piece below e^step
        prm = self.params
        p = {WeightRegime.SUPER2: prm.b / 2 - 1,
             WeightRegime.ALT_THETA: 1 - (prm.theta or 0.0)}.get(wt.regime(prm), 1.0)
        step = self._LOG_STEP / max(1.0, p)
        cells, lo, hi = [], [], []
        for i in range(n):
            if i == n - 1:
                k = int(round(self._LOG_DEPTH / step))
                rc = rn[i] * np.exp(-step * np.arange(k + 1))
                # at b = 2, s -> 0 only logarithmically; stop the cuts before
                # exp(1 - 1/s) underflows at the Gauss nodes of the last piece
                rc = np.append(rc[rc >= self._RHO_FLOOR] if rc[0] >= self._RHO_FLOOR else rc[:1], 0.0)
            else:
                k = max(1, int(np.ceil(np.log(rn[i] / rn[i + 1]) / step)))
                rc = rn[i] * (rn[i + 1] / rn[i]) ** (np.arange(k + 1) / k)
            sc = wt.nu_over_mu(rc, self.params)
            sc[0], sc[-1] = sn[i], sn[i + 1]
            cells.append(np.full(len(sc) - 1, i))
            lo.append(sc[1:])
            hi.append(sc[:-1])
        cell, lo, hi = np.concatenate(cells), np.concatenate(lo), np.concatenate(hi)
        # for b just above 2 (s = rho^p, p tiny) the Gauss nodes of the last
        # piece map to rho below the double range; cut that piece off there
        last = len(lo) - 1
        s_tiny = float(wt.nu_over_mu(self._RHO_TINY, self.params))
        if lo[last] == 0.0 and hi[last] * x[0] < s_tiny:
            lo[last] = s_tiny
        keep = hi > lo
        cell, lo, hi = cell[keep], lo[keep], hi[keep]
        s_q = lo[:, None] + (hi - lo)[:, None] * x[None, :]
        ws = (hi - lo)[:, None] * wg[None, :]
        return np.repeat(cell, len(x)), s_q.reshape(-1), ws.reshape(-1)

    @property
    def n_cells(self) -> int:
        return len(self.nodes) - 1

    @property
    def n_quad(self) -> int:
        return len(self.quad_points)

    @cached_property
    def rho_nodes(self) -> np.ndarray:
        return self.dist * (2 * np.sqrt(self.b) - self.dist)

    @cached_property
    def s_nodes(self) -> np.ndarray:
        if self.coordinate == "r":
            return self.nodes.copy()
        return wt.nu_over_mu(self.rho_nodes, self.params)

    @property
    def quad_rho(self) -> np.ndarray:
        return self._rho

    @property
    def area_weights(self) -> np.ndarray:
        """Weights for integrals of the form int g(r) r dr."""
        return self._area

    @property
    def quad_cells(self) -> np.ndarray:
        return self._cell

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def ds_dr(self) -> np.ndarray:
        return self._ds_dr

    @property
    def area_jac(self) -> np.ndarray:
        """area weight times ds/dr."""
        return self._area_jac

    @property
    def mu_area_jac2(self) -> np.ndarray:
        """mu_active times area weight times (ds/dr)^2."""
        return self._mu_area_jac2

    @cached_property
    def basis_s(self) -> tuple[np.ndarray, np.ndarray]:
        """Hat values and derivatives in the working coordinate, (n_quad, n_nodes)."""
        nq, nn = self.n_quad, self.n_cells + 1
        phi = np.zeros((nq, nn))
        dphi = np.zeros((nq, nn))
        idx = np.arange(nq)
        c = self._cell
        x = self._xloc
        phi[idx, c] = 1.0 - x
        phi[idx, c + 1] = x
        slope = 1.0 / (self.s_nodes[c + 1] - self.s_nodes[c])
        dphi[idx, c] = -slope
        dphi[idx, c + 1] = slope
        return phi, dphi

    @cached_property
    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Hat values and r-derivatives at quadrature points."""
        phi, dphi_s = self.basis_s
        return phi, dphi_s * self._ds_dr[:, None]

    def eval_hats(self, r) -> np.ndarray:
        """Hat values at arbitrary radii, shape (len(r), n_nodes)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0) or np.any(r > np.sqrt(self.b) * (1 + 1e-14)):
            raise DomainError("radius outside [0, sqrt(b)]")
        if self.coordinate == "r":
            s, sn = r, self.nodes
        else:
            rho = np.maximum(self.b - r * r, 0.0)
            s, sn = wt.nu_over_mu(rho, self.params), self.s_nodes
        c = np.clip(np.searchsorted(self.nodes, r, side="right") - 1, 0, self.n_cells - 1)
        x = (s - sn[c]) / (sn[c + 1] - sn[c])
        out = np.zeros((len(r), self.n_cells + 1))
        out[np.arange(len(r)), c] = 1.0 - x
        out[np.arange(len(r)), c + 1] = x
        return out


def build_radial_mesh(b, n_cells, grading_exponent=2.0, *, theta=None, n_gauss=None,
                      coordinate="auto") -> RadialMesh:
    if int(n_cells) != n_cells or n_cells < 4:
        raise ValueError(f"n_cells must be an integer >= 4, got {n_cells}")
    if grading_exponent < 1:
        raise ValueError(f"grading_exponent must be >= 1, got {grading_exponent}")
    params = ModelParams(b=b, theta=theta)
    if coordinate == "auto":
        coordinate = "r" if wt.regime(params) is WeightRegime.SUB2 else "s"
    if coordinate not in ("r", "s"):
        raise ValueError(f"unknown coordinate {coordinate!r}")
    if coordinate == "s" and wt.regime(params) is WeightRegime.SUB2:
        raise ValueError("the nu/mu coordinate is degenerate for b < 2")
    if n_gauss is None:
        # 3 points keep the outermost node > width/10 from the rim for b < 2
        n_gauss = 3 if coordinate == "r" else 4
        if coordinate == "s" and (b > 4 or theta is not None):
            # rho(s) = s^(2/(b-2)) is far from polynomial; 4 points miss 1e-10
            n_gauss = 6
    n = int(n_cells)
    sb = np.sqrt(b)
    dist = sb * (1.0 - np.arange(n + 1) / n) ** grading_exponent
    nodes = sb - dist
    nodes[0] = 0.0
    nodes[-1] = sb
    dist[-1] = 0.0
    return RadialMesh(b=float(b), nodes=nodes, dist=dist, grading_exponent=float(grading_exponent),
                      coordinate=coordinate, params=params, n_gauss=n_gauss)


# --- angular modes ------------------------------------------------------------

def angular_modes(n_angular: int):
    """(kind, k) pairs: constant, then cos k / sin k pairs, ending with cos K."""
    K = n_angular // 2
    kinds, ks = [0], [0]
    for k in range(1, K):
        kinds += [0, 1]
        ks += [k, k]
    kinds.append(0)
    ks.append(K)
    return np.array(kinds), np.array(ks)


def eval_modes(kinds, ks, theta):
    theta = np.asarray(theta, dtype=float)[:, None]
    val = np.where(kinds == 0, np.cos(ks * theta), np.sin(ks * theta))
    der = np.where(kinds == 0, -ks * np.sin(ks * theta), ks * np.cos(ks * theta))
    return val, der


@dataclass(frozen=True, eq=False)
class ConfigGrid:
    radial: RadialMesh
    n_angular: int = 16
    n_theta: Optional[int] = None

    def __post_init__(self):
        if self.n_angular < 2 or self.n_angular % 2:
            raise ValueError(f"n_angular must be an even integer >= 2, got {self.n_angular}")
        if self.n_theta is None:
            object.__setattr__(self, "n_theta", 2 * self.n_angular + 8)

    @property
    def params(self) -> ModelParams:
        return self.radial.params

    @property
    def b(self) -> float:
        return self.radial.b

    @cached_property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def dtheta(self) -> float:
        return 2 * np.pi / self.n_theta

    @cached_property
    def modes(self):
        return angular_modes(self.n_angular)

    @cached_property
    def angular_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Mode values and theta-derivatives at the quadrature angles."""
        kinds, ks = self.modes
        return eval_modes(kinds, ks, self.theta)

    def angular_gram(self, weight=None, d_left=False, d_right=False) -> np.ndarray:
        """int wgt(theta) e'_a e'_b dtheta by the (exact) trapezoid rule."""
        e, de = self.angular_basis
        left = de if d_left else e
        right = de if d_right else e
        wgt = np.ones(self.n_theta) if weight is None else np.asarray(weight, float)
        return (left * (wgt * self.dtheta)[:, None]).T @ right

    @cached_property
    def dof_mask(self) -> np.ndarray:
        """Boolean (n_nodes, n_angular): which (node, mode) pairs are unknowns."""
        nn = self.radial.n_cells + 1
        mask = np.ones((nn, self.n_angular), dtype=bool)
        mask[-1, :] = False       # homogeneous Dirichlet at r = sqrt(b)
        mask[0, 1:] = False       # only the constant mode is single-valued at r = 0
        return mask

    @cached_property
    def dof_index(self) -> np.ndarray:
        return np.flatnonzero(self.dof_mask.reshape(-1))

    @property
    def n_unknowns(self) -> int:
        return len(self.dof_index)

    # --- evaluation helpers ---
    def coeff_matrix(self, coeffs) -> np.ndarray:
        """Scatter unknowns into the full (n_nodes, n_angular) table."""
        full = np.zeros(self.dof_mask.size)
        full[self.dof_index] = coeffs
        return full.reshape(self.dof_mask.shape)

    def to_quad(self, coeffs) -> np.ndarray:
        """Values at (radial quad point, theta) pairs."""
        phi, _ = self.radial.basis
        e, _ = self.angular_basis
        return phi @ self.coeff_matrix(coeffs) @ e.T

    def grad_to_quad(self, coeffs):
        """(d/dr, (1/r) d/dtheta) at quadrature points."""
        phi, dphi = self.radial.basis
        e, de = self.angular_basis
        c = self.coeff_matrix(coeffs)
        dr = dphi @ c @ e.T
        dth = (phi @ c @ de.T) / self.radial.quad_points[:, None]
        return dr, dth

    def to_nodes(self, coeffs) -> np.ndarray:
        """Values at interior radial nodes (incl. r=0) times quadrature angles."""
        e, _ = self.angular_basis
        return (self.coeff_matrix(coeffs) @ e.T)[:-1]

    @cached_property
    def quad_mesh(self):
        r = self.radial.quad_points[:, None] * np.ones(self.n_theta)[None, :]
        th = np.ones(self.radial.n_quad)[:, None] * self.theta[None, :]
        return r, th

    @cached_property
    def quad_weights_2d(self) -> np.ndarray:
        return self.radial.area_weights[:, None] * self.dtheta * np.ones(self.n_theta)[None, :]

    @cached_property
    def quad_rho_2d(self) -> np.ndarray:
        return self.radial.quad_rho[:, None] * np.ones(self.n_theta)[None, :]


def build_grid(params: ModelParams, n_cells=48, n_angular=16, grading_exponent=2.0, **kw) -> ConfigGrid:
    n_theta = kw.pop("n_theta", None)
    mesh = build_radial_mesh(params.b, n_cells, grading_exponent, theta=params.theta, **kw)
    return ConfigGrid(mesh, n_angular=n_angular, n_theta=n_theta)


WeightSpec = Union[str, Callable]


def weight_values(weight: WeightSpec, rho_val, params: ModelParams):
    if callable(weight):
        return np.asarray(weight(rho_val), dtype=float)
    table = {
        "one": lambda r: np.ones_like(r),
        "mu": lambda r: wt.mu(r, params),
        "nu": lambda r: wt.nu(r, params),
        "mu_star": lambda r: wt.mu_star(r, params),
        "mu0": lambda r: wt.mu0(r, params),
        "mu_active": lambda r: wt.mu_active(r, params),
    }
    if weight not in table:
        raise ValueError(f"unknown weight {weight!r}")
    return table[weight](rho_val)


def field_on_quad(g, grid: ConfigGrid) -> np.ndarray:
    """Accepts a callable g(r, theta), a constant, or an array on the quad mesh."""
    shape = (grid.radial.n_quad, grid.n_theta)
    if callable(g):
        r, th = grid.quad_mesh
        return np.broadcast_to(np.asarray(g(r, th), dtype=float), shape)
    g = np.asarray(g, dtype=float)
    return np.broadcast_to(g, shape)


def weighted_integral(g, weight: WeightSpec, grid: ConfigGrid) -> float:
    vals = field_on_quad(g, grid)
    wv = weight_values(weight, grid.radial.quad_rho, grid.params)[:, None]
    return float(np.sum(vals * wv * grid.quad_weights_2d))


def surface_integral(g, grid: ConfigGrid) -> float:
    """Trapezoid rule on the circle r = sqrt(b) with n_angular points."""
    n = grid.n_angular
    th = 2 * np.pi * np.arange(n) / n
    vals = g(th) if callable(g) else np.broadcast_to(np.asarray(g, float), th.shape)
    return float(np.sqrt(grid.b) * 2 * np.pi / n * np.sum(vals))
