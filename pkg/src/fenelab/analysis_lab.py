"""Numerical checks of the weighted functional inequalities behind the
well-posedness theory.

An inequality "holds with constant C" is operationalized as a constant fitted
on a family of test functions, or over the whole discrete space via a
generalized eigenproblem, that stays stable under mesh refinement.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from fenelab import weights as wt
from fenelab.errors import FitError, RegimeError
from fenelab.geometry import ConfigGrid, weighted_integral
from fenelab.weights import ModelParams, WeightRegime


# --- test functions -----------------------------------------------------------------

@dataclass(frozen=True)
class TestFn:
    """A field on the ball with its polar gradient (d/dr, (1/r) d/dtheta)."""

    value: Callable
    grad: Callable
    label: str = ""

    __test__ = False  # not a pytest class

    def on(self, grid: ConfigGrid):
        r, th = grid.quad_mesh
        shape = r.shape
        v = np.broadcast_to(np.asarray(self.value(r, th), dtype=float), shape)
        gr, gt = self.grad(r, th)
        return v, np.broadcast_to(gr, shape), np.broadcast_to(gt, shape)


@dataclass(frozen=True)
class TestFunctionFamily:
    generator: Callable          # index -> TestFn
    tag: str                     # "zero_trace" or "nonzero_trace"
    count: int

    __test__ = False

    def __post_init__(self):
        if self.tag not in ("zero_trace", "nonzero_trace"):
            raise ValueError(f"unknown family tag {self.tag!r}")

    def __iter__(self):
        return (self.generator(i) for i in range(self.count))

    def __len__(self):
        return self.count


def rho_power(b, k, j=0, kind="cos"):
    """rho^k (r/sqrt b)^j trig(j theta); smooth in the ball, zero trace for k > 0."""
    sb = np.sqrt(b)

    def trig(th):
        if j == 0:
            return np.ones_like(th)
        return np.cos(j * th) if kind == "cos" else np.sin(j * th)

    def dtrig(th):
        if j == 0:
            return np.zeros_like(th)
        return -j * np.sin(j * th) if kind == "cos" else j * np.cos(j * th)

    def val(r, th):
        return (b - r * r) ** k * (r / sb) ** j * trig(th)

    def grad(r, th):
        rho = b - r * r
        rad = (r / sb) ** j
        drad = j * r ** (j - 1) / sb ** j if j > 0 else 0.0 * r
        dr = (k * rho ** (k - 1) * (-2 * r) * rad + rho ** k * drad) * trig(th) if k > 0 else drad * trig(th)
        dt = rho ** k * rad / np.where(r > 0, r, 1.0) * dtrig(th)
        return dr, dt

    return TestFn(val, grad, f"rho^{k}" + (f"*r^{j}{kind}{j}" if j else ""))


def radial_bump(b, center, width):
    """Smooth compactly supported bump in r centred at ``center``."""

    def core(r):
        z = (r - center) / width
        inside = np.abs(z) < 1
        zz = np.where(inside, z, 0.0)
        return inside, zz

    def val(r, th):
        inside, z = core(r)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - z * z)), 0.0) + 0.0 * th

    def grad(r, th):
        inside, z = core(r)
        e = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - z * z)), 0.0)
        de = np.where(inside, e * (-2 * z) / (1 - z * z) ** 2 / width, 0.0)
        return de + 0.0 * th, 0.0 * r * th

    return TestFn(val, grad, f"bump({center:.3g},{width:.3g})")


def constant_fn(c=1.0):
    return TestFn(lambda r, th: c + 0.0 * r * th, lambda r, th: (0.0 * r * th, 0.0 * r * th), f"const({c:g})")


def shifted(fn: TestFn, c=1.0):
    return TestFn(lambda r, th: fn.value(r, th) + c, fn.grad, f"{fn.label}+{c:g}")


def standard_family(b, tag="zero_trace", max_power=5):
    """Radial powers, angular products and rim-approaching bumps.

    For the nonzero-trace family adds constants and rho^k + 1.
    """
    sb = np.sqrt(b)
    members = [rho_power(b, k) for k in range(1, max_power + 1)]
    members += [rho_power(b, k, j) for k in (1, 2) for j in (1, 2, 3)]
    members += [rho_power(b, 1, 2, "sin")]
    for dist in (0.5, 0.25, 0.12):
        w = 0.45 * dist * sb
        members.append(radial_bump(b, sb * (1 - dist), w))
    if tag == "nonzero_trace":
        members += [constant_fn(1.0)] + [shifted(rho_power(b, k), 1.0) for k in (1, 2, 3)]
    return TestFunctionFamily(lambda i: members[i], tag, len(members))


def power_family(b, powers=(1, 2, 3, 4, 5)):
    ms = [rho_power(b, k) for k in powers]
    return TestFunctionFamily(lambda i: ms[i], "zero_trace", len(ms))


# --- reports ---------------------------------------------------------------------

@dataclass
class InequalityReport:
    inequality: str
    ratios: list                          # (member id, ratio)
    fitted_constant: float
    resolution: Optional[int] = None
    extras: dict = field(default_factory=dict)
    passed: Optional[bool] = None

    @property
    def max_ratio(self) -> float:
        return max((r for _, r in self.ratios), default=float("nan"))


def refinement_drift(constants) -> float:
    """Largest relative change between consecutive refinement levels."""
    c = np.asarray(constants, dtype=float)
    return float(np.max(np.abs(np.diff(c)) / np.abs(c[:-1])))


def export_reports_csv(reports, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["inequality", "member", "ratio", "fitted_constant", "resolution"])
        for rep in reports:
            for member, ratio in rep.ratios:
                wr.writerow([rep.inequality, member, f"{ratio:.12e}", f"{rep.fitted_constant:.12e}",
                             rep.resolution if rep.resolution is not None else ""])


# --- embedding and Hardy -------------------------------------------------------------

def _fn_values(phi, grid):
    if isinstance(phi, TestFn):
        return phi.on(grid)
    return phi


def embedding_ratio(phi, params: ModelParams, grid: ConfigGrid, delta=None, theta=None) -> float:
    """int phi^2 mu* / int (phi^2 + |grad phi|^2) mu.

    With ``delta`` and ``theta`` given: int phi^2 rho^{-1+delta} over the same
    energy with weight rho^theta.
    """
    v, gr, gt = _fn_values(phi, grid)
    grad2 = gr * gr + gt * gt
    if delta is None:
        num = weighted_integral(v * v, "mu_star", grid)
        den = weighted_integral(v * v + grad2, "mu", grid)
    else:
        if delta <= 0 or theta is None or theta > 1:
            raise ValueError("the rho^theta variant needs delta > 0 and theta <= 1")
        num = weighted_integral(v * v, lambda r: r ** (-1.0 + delta), grid)
        den = weighted_integral(v * v + grad2, lambda r: r ** theta, grid)
    if den == 0.0 or not np.any(v):
        raise FitError("zero test function")
    return num / den


def embedding_suite(params: ModelParams, grid: ConfigGrid, family=None) -> InequalityReport:
    family = family or standard_family(params.b)
    ratios = [(fn.label, embedding_ratio(fn, params, grid)) for fn in family]
    return InequalityReport("embedding", ratios, max(r for _, r in ratios), grid.radial.n_cells)


def hardy_ratio(g: Callable) -> float:
    """int_0^1 (int_0^x g)^2 / x dx  over  int_0^1 g^2 x ln^2 x dx."""
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=200)

    def G(x):
        return integrate.quad(g, 0.0, x, **opts)[0]

    left = integrate.quad(lambda x: G(x) ** 2 / x, 0.0, 1.0, **opts)[0]
    right = integrate.quad(lambda x: g(x) ** 2 * x * np.log(x) ** 2, 0.0, 1.0, **opts)[0]
    if right == 0.0:
        raise FitError("zero denominator in the Hardy ratio")
    return left / right


def hardy_suite(powers=(0, 1, 2, 3, 4)) -> InequalityReport:
    ratios = [(f"x^{k}", hardy_ratio(lambda x, k=k: x ** k)) for k in powers]
    return InequalityReport("hardy", ratios, max(r for _, r in ratios))


# --- coercivity and the a-priori envelope -----------------------------------------------

def _dense(m):
    return m.toarray() if hasattr(m, "toarray") else np.asarray(m)


def _lambda_max(A, M):
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    return float(sla.eigh(A, M, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


def coercivity_fit(grid: ConfigGrid, params: ModelParams, kappa_samples, w_samples=None,
                   forms=None, exhaustive=True) -> InequalityReport:
    """Fit C in 1/4 int |grad w|^2 mu <= B[w, w] + C (1 + |kappa|^2) int w^2 mu.

    Sample ratios use the given vectors; with ``exhaustive`` the sup over the
    whole discrete space comes from a generalized eigenproblem.  C is clipped
    at 0 from below.
    """
    from fenelab.fp_solver import assemble_forms

    forms = forms or assemble_forms(grid, params)
    M = _dense(forms.mass_mu)
    G = _dense(forms.gradient_gram)
    ratios, eig = [], []
    for ik, kap in enumerate(kappa_samples):
        B = _dense(forms.with_kappa(kap).bilinear)
        scale = 1.0 + kap.norm ** 2
        if w_samples is not None:
            for iw, w in enumerate(w_samples):
                num = 0.25 * w @ G @ w - w @ B @ w
                ratios.append((f"k{ik}w{iw}", float(num / (scale * (w @ M @ w)))))
        if exhaustive:
            eig.append(_lambda_max(0.25 * G - B, M) / scale)
    cands = [r for _, r in ratios] + eig
    C = max(0.0, max(cands))
    return InequalityReport("coercivity", ratios, C, grid.radial.n_cells,
                            extras={"eig_per_kappa": eig})


def apriori_envelope(traj, forms, C):
    """Discrete Gronwall check along a trajectory.

    Returns (lhs, envelope) per time level where
    lhs_n = |w_n|^2 + 1/4 sum_j dt |w_j|^2_{H1_mu} (w_j the step's implicit state)
    and the envelope follows the recursion
        CN:       E' = ((1 + l) E + 4 dt |h|^2_*) / (1 - l),  l = dt (2C + 1/2)(1 + |k|^2) / 2
        2 Euler:  per half step tau = dt/2, E' = (E + 4 tau |h|^2_*) / (1 - tau (2C + 1/2)(1 + |k|^2)).
    It is a provable upper bound for the scheme whenever C is a valid coercivity constant.
    """
    from scipy.sparse.linalg import splu

    from fenelab.fp_solver import _Factor, source_from_q

    M = forms.mass_mu
    G = forms.gradient_gram
    H = (M + G).tocsc()
    Hlu = splu(H)

    def dual2(h):
        return float(h @ Hlu.solve(h))

    def h1(w):
        return float(w @ (H @ w))

    c = traj.coeffs
    E = float(c[0] @ (M @ c[0]))
    D = 0.0
    lhs, env = [E], [E]
    for k, st in enumerate(traj.steps):
        dt = st.dt
        kap2 = st.kappa.norm ** 2
        w0, w1 = c[k], c[k + 1]
        if st.kind == "cn":
            lam = dt * (2 * C + 0.5) * (1 + kap2) / 2
            if lam >= 1:
                raise FitError("time step too large for the envelope recursion")
            hbar = 0.5 * (traj.sources[k] + traj.sources[k + 1])
            E = ((1 + lam) * E + 4 * dt * dual2(hbar)) / (1 - lam)
            D += 0.25 * dt * h1(0.5 * (w0 + w1))
        else:
            # the half-step state is not stored; recompute it so the
            # dissipation term is the one the scheme actually produced
            half = 0.5 * dt
            lam = half * (2 * C + 0.5) * (1 + kap2)
            if lam >= 1:
                raise FitError("time step too large for the envelope recursion")
            fac = _Factor(forms.with_kappa(st.kappa), dt)
            h_mid = source_from_q(traj.grid, traj.params, st.kappa, traj.q, traj.times[k] + half)
            wm = fac.solve(fac.M @ w0 + half * h_mid)
            for h, wn in ((h_mid, wm), (traj.sources[k + 1], w1)):
                E = (E + 4 * half * dual2(h)) / (1 - lam)
                D += 0.25 * half * h1(wn)
        lhs.append(float(w1 @ (M @ w1)) + D)
        env.append(E)
    return np.array(lhs), np.array(env)


# --- stress bounds ------------------------------------------------------------------

def stress_density(rho_val, params: ModelParams):
    """nu / rho, the kernel of the stress functional."""
    return wt.nu(rho_val, params) / rho_val


def mu_inverse_integral(params: ModelParams) -> float:
    """Closed form of int mu^{-1} dm for b > 2 and N = 2: pi b^{b/2-1} / (b/2 - 1)."""
    if params.b <= 2:
        raise RegimeError("int mu^{-1} dm is finite only for b > 2")
    p = params.b / 2 - 1
    return float(np.pi * params.b ** p / p)


def stress_functional_vector(grid: ConfigGrid, params: ModelParams) -> np.ndarray:
    """g_i = int phi_i nu rho^{-1} dm over the discrete basis."""
    from fenelab.fp_solver import _project_terms

    return _project_terms(grid, stress_density(grid.quad_rho_2d, params))


def stress_bound_check(phi_family, params: ModelParams, grid: ConfigGrid, eps_list,
                       forms=None, discrete=True) -> list:
    """Per epsilon, fit C_eps in |int phi nu/rho|^2 <= C_eps int phi^2 mu + eps int |grad phi|^2 mu.

    Family members give sample ratios.  With ``discrete`` the sup over the
    zero-trace discrete space is added: lambda_max(g g^T - eps G, M), and the
    eps -> 0 limit g^T M^{-1} g is stored in ``extras['eps0']``.
    """
    from fenelab.fp_solver import assemble_forms

    if phi_family is not None and phi_family.tag != "zero_trace":
        raise ValueError("the epsilon form of the stress bound needs a zero-trace family")
    kern = stress_density(grid.quad_rho_2d, params)
    pieces = []
    if phi_family is not None:
        for fn in phi_family:
            v, gr, gt = fn.on(grid)
            s = weighted_integral(v * kern, "one", grid)
            l2 = weighted_integral(v * v, "mu", grid)
            h1 = weighted_integral(gr * gr + gt * gt, "mu", grid)
            pieces.append((fn.label, s * s, l2, h1))
    if discrete:
        forms = forms or assemble_forms(grid, params)
        M = _dense(forms.mass_mu)
        G = _dense(forms.gradient_gram)
        g = stress_functional_vector(grid, params)
        eps0 = float(g @ np.linalg.solve(M, g))
    reports = []
    for eps in eps_list:
        # phi = 0 makes both sides vanish: it holds for every C
        ratios = [(lab, (s2 - eps * h1) / l2 if l2 > 0 else 0.0) for lab, s2, l2, h1 in pieces]
        cands = [r for _, r in ratios]
        extras = {"eps": eps}
        if discrete:
            lam = _lambda_max(np.outer(g, g) - eps * G, M)
            extras.update(discrete_sup=lam, eps0=eps0)
            cands.append(lam)
        reports.append(InequalityReport(f"stress_eps={eps:g}", ratios, max(0.0, max(cands)),
                                        grid.radial.n_cells, extras))
    return reports


def weak_stress_bound(phi_family, params: ModelParams, grid: ConfigGrid) -> InequalityReport:
    """|int phi nu/rho|^2 <= C |phi|^2_{H1_mu} for members with any trace."""
    kern = stress_density(grid.quad_rho_2d, params)
    ratios = []
    for fn in phi_family:
        v, gr, gt = fn.on(grid)
        s = weighted_integral(v * kern, "one", grid)
        h1 = weighted_integral(v * v + gr * gr + gt * gt, "mu", grid)
        ratios.append((fn.label, s * s / h1 if h1 > 0 else 0.0))
    return InequalityReport("stress_weak", ratios, max(r for _, r in ratios), grid.radial.n_cells)


# --- the b >= 6 sign functional ---------------------------------------------------------------

def sign_value(w, params: ModelParams, grid: ConfigGrid, forms=None) -> float:
    """int (2 - b/2 - theta) (m . grad w) w rho^{theta-1} dm.

    ``w`` is a TestFn (quadrature of the analytic integrand) or a coefficient
    vector (quadratic form of the assembled first-order matrix).
    """
    if wt.regime(params) is not WeightRegime.ALT_THETA:
        raise RegimeError("the sign functional concerns the theta variant (b >= 6)")
    c = 2 - params.b / 2 - params.theta
    if isinstance(w, TestFn):
        v, gr, _ = w.on(grid)
        r = grid.quad_mesh[0]
        return weighted_integral(c * r * gr * v, lambda rho: rho ** (params.theta - 1), grid)
    from fenelab.fp_solver import assemble_forms

    forms = forms or assemble_forms(grid, params)
    w = np.asarray(w, dtype=float)
    return float(w @ (forms.first_order @ w))


def sign_check(w_samples, params: ModelParams, grid: ConfigGrid, forms=None):
    """Minimum of the sign functional over samples plus the normalized margin."""
    from fenelab.fp_solver import assemble_forms

    forms = forms or assemble_forms(grid, params)
    vals, normed = [], []
    for w in w_samples:
        v = sign_value(w, params, grid, forms)
        if isinstance(w, TestFn):
            vv = w.on(grid)[0]
            n2 = weighted_integral(vv * vv, "mu_active", grid)
        else:
            n2 = float(w @ (forms.mass_mu @ w))
        vals.append(v)
        normed.append(v / n2 if n2 > 0 else 0.0)
    return min(vals), min(normed)


def random_zero_trace(grid: ConfigGrid, n, rng, decay=1.0):
    """Random discrete functions with coefficients damped in the mode number."""
    kinds, ks = grid.modes
    scale = 1.0 / (1.0 + ks) ** decay
    full_scale = np.broadcast_to(scale, grid.dof_mask.shape).reshape(-1)[grid.dof_index]
    return [rng.standard_normal(grid.n_unknowns) * full_scale for _ in range(n)]
