"""Scenario runners: each one builds its solves from a ScenarioConfig, writes CSV data
and returns the checks it evaluated together with their margins."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from fenelab import analysis_lab as lab
from fenelab import diagnostics as dg
from fenelab import weights as wt
from fenelab.config import ScenarioConfig, kappa_from
from fenelab.fp_solver import (BoundaryProfile, assemble_forms, equilibrium, reconstruct_f, solve_fp,
                               w0_from_f0, export_trajectory_csv)
from fenelab.geometry import build_grid
from fenelab.weights import KappaMatrix, ModelParams


# --- checks ---------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    bound: float
    op: str
    passed: bool
    margin: float
    note: str = ""


def _clean(x):
    x = float(x)
    return x if np.isfinite(x) else None


def check_le(name, value, bound, note="") -> Check:
    value, bound = float(value), float(bound)
    ok = bool(np.isfinite(value) and value <= bound)
    return Check(name, value, bound, "<=", ok, bound - value, note)


def check_ge(name, value, bound, note="") -> Check:
    value, bound = float(value), float(bound)
    ok = bool(np.isfinite(value) and value >= bound)
    return Check(name, value, bound, ">=", ok, value - bound, note)


def check_true(name, cond, note="") -> Check:
    cond = bool(cond)
    return Check(name, float(cond), 1.0, "true", cond, 0.0 if cond else -1.0, note)


@dataclass
class ScenarioResult:
    kind: str
    checks: list
    data: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> dict:
        checks = []
        for c in self.checks:
            d = asdict(c)
            d["value"], d["bound"], d["margin"] = _clean(c.value), _clean(c.bound), _clean(c.margin)
            checks.append(d)
        return {"kind": self.kind, "passed": self.passed, "checks": checks,
                "artifacts": [str(a) for a in self.artifacts], "runtime_s": round(self.runtime, 3)}


# --- builders --------------------------------------------------------------------

def q_from(spec: dict, params: ModelParams) -> BoundaryProfile:
    preset = spec.get("preset", "zero")
    if preset == "zero":
        return BoundaryProfile.zero()
    if preset == "constant":
        return BoundaryProfile.constant(spec.get("c", 1.0))
    if preset == "angular":
        return BoundaryProfile.angular(params.b, spec.get("c", 1.0), spec.get("j", 1))
    if preset == "equilibrium_ratio":
        return BoundaryProfile.equilibrium_ratio(params)
    return BoundaryProfile.series(params.b, spec["coeffs"])


def f0_from(spec: dict, params: ModelParams) -> Callable:
    """Initial density: equilibrium, a perturbation of it that vanishes on the rim, or
    rho^{b/2} times a polynomial in |m|^2/b with the given coefficients."""
    b = params.b
    kind = spec.get("kind", "equilibrium")
    eq = equilibrium(params)
    if kind == "equilibrium":
        return eq
    if kind == "perturbed":
        a, j = spec.get("amplitude", 0.3), spec.get("mode", 2)
        return lambda r, th: eq(r, th) * (1 + a * (np.maximum(b - r * r, 0) / b) * np.cos(j * th))
    coeffs = spec["coeffs"]
    return lambda r, th: eq(r, th) * sum(c * (r * r / b) ** k for k, c in enumerate(coeffs)) + 0.0 * th


def _grid(cfg: ScenarioConfig, n_cells=None, params=None):
    res = cfg.resolution
    return build_grid(params or cfg.params, n_cells=n_cells or res["n_cells"], n_angular=res["n_angular"],
                      grading_exponent=res["grading"])


def _levels(cfg, default):
    return cfg.resolution.get("levels", default)


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([f"{v:.15e}" if isinstance(v, float) else v for v in row])
    return path


def _relative_drift(masses):
    m = np.asarray(masses, dtype=float)
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))


def _run(cfg, grid, q, kappa, f0=None, params=None):
    params = params or cfg.params
    f0 = f0 or f0_from(cfg.f0, params)
    w0 = w0_from_f0(grid, f0, q)
    return solve_fp(w0, q, kappa, cfg.T, cfg.dt, grid, params, diagnostics=False)


def _masses(traj):
    return np.array([dg.state_mass(c, traj.q, float(t), traj.grid) for c, t in zip(traj.coeffs, traj.times)])


# --- Fokker-Planck scenarios ------------------------------------------------------------

def run_fp_single(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    params = cfg.params
    grid = _grid(cfg)
    q = q_from(cfg.q, params)
    kap = kappa_from(cfg.kappa)
    forms = assemble_forms(grid, params)
    traj = _run(cfg, grid, q, kap)
    recs = dg.diagnostics_series(traj, forms)
    art = [out / "diagnostics.csv", out / "trajectory.csv"]
    dg.export_diagnostics_csv(recs, art[0])
    export_trajectory_csv(traj, art[1], every=max(1, len(traj.times) // 10))
    masses = np.array([r.mass for r in recs])
    drift = _relative_drift(masses)
    pos = dg.positivity_report(traj)
    checks = []
    if q.is_zero and params.b >= 2:
        checks.append(check_le("mass_drift", drift, cfg.option("mass_tol", 1e-6)))
    checks.append(check_ge("min_f_relative", pos.min_f / pos.max_abs_f, -1e-8))
    return ScenarioResult(cfg.kind, checks, {"mass_drift": drift, "masses": masses, "traj": traj}, art)


def run_mass_flux_study(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    """dM/dt against the constant-times-trace law on a sequence of meshes."""
    params = cfg.params
    q = q_from(cfg.q, params)
    kap = kappa_from(cfg.kappa)
    levels = _levels(cfg, [24, 48, 96])
    skip = int(cfg.option("skip_steps", 4))
    rows, measured, predicted, exact, shell = [], [], [], [], []
    for n in levels:
        grid = _grid(cfg, n)
        traj = _run(cfg, grid, q, kap)
        M = _masses(traj)
        rate = dg.flux_rate_measured(traj.times[skip:], M[skip:])
        pred = dg.flux_rate_predicted(q, params, grid)
        ex = dg.flux_rate_exact(q, params, grid)
        sh = dg.flux_rate_shell(traj.coeffs[-1], q, float(traj.times[-1]), grid, kap)
        measured.append(rate)
        predicted.append(pred)
        exact.append(ex)
        shell.append(sh)
        rows.append([n, rate, pred, ex, sh])
    art = [_write_rows(out / "flux.csv", ["n_cells", "measured", "predicted", "exact_half", "shell"], rows)]
    tol = float(cfg.option("rel_tol", 0.05 if params.b > 2 else 0.10))
    rel_pred = abs(measured[-1] / predicted[-1] - 1)
    errs = np.abs(np.array(measured) - np.array(predicted))
    hs = 1.0 / np.array(levels, dtype=float)
    if len(levels) >= 2 and np.all(errs > 0):
        order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    else:
        order = float("inf")
    checks = [check_le("rate_vs_predicted_rel", rel_pred, tol)]
    if params.b > 2:
        checks.append(check_ge("convergence_order", order, float(cfg.option("min_order", 1.0))))
    else:
        checks.append(check_ge("rate_positive", measured[-1], 0.0))
    checks.append(check_le("rate_vs_exact_rel", abs(measured[-1] / exact[-1] - 1), tol,
                           "boundary law with the 1/2 of the diffusion term kept"))
    data = dict(levels=levels, measured=measured, predicted=predicted, exact=exact, shell=shell, order=order)
    return ScenarioResult(cfg.kind, checks, data, art)


def run_decay_study(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    params = cfg.params
    b = params.b
    q = q_from(cfg.q, params)
    kap = kappa_from(cfg.kappa)
    levels = _levels(cfg, [24, 48, 96])
    wf = float(cfg.option("window_fraction", 0.15))
    skip = int(cfg.option("skip_cells", 2))
    rows, exps, ratios = [], [], []
    for n in levels:
        grid = _grid(cfg, n)
        traj = _run(cfg, grid, q, kap)
        f = reconstruct_f(traj.final, q, grid, params, where="quad")
        ex = dg.decay_exponent_fit(f, grid, wf, skip)
        ratio = dg.window_mean(f / wt.nu(grid.quad_rho_2d, params), grid, wf, skip)
        exps.append(ex)
        ratios.append(ratio)
        rows.append([n, ex, ratio])
    art = [_write_rows(out / "decay.csv", ["n_cells", "exponent", "f_over_nu_window"], rows)]
    checks = []
    if b < 2:
        checks.append(check_le("exponent_error", abs(exps[-1] - b / 2), float(cfg.option("tol", 0.02))))
    elif b == 2:
        dec = all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))
        checks.append(check_true("f_over_nu_window_decreasing", dec))
    elif q.is_zero:
        checks.append(check_ge("exponent", exps[-1], float(cfg.option("min_exponent", 1.1))))
    return ScenarioResult(cfg.kind, checks, dict(levels=levels, exponents=exps, window_ratios=ratios), art)


def run_nonuniqueness_demo(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    """Same f0, two boundary traces: distance of the solutions and their rim behaviour."""
    params = cfg.params
    q1 = BoundaryProfile.zero()
    q2 = q_from(cfg.q, params) if cfg.raw.get("q") else BoundaryProfile.constant(1.0)
    kap = kappa_from(cfg.kappa)
    n = cfg.resolution["n_cells"]
    levels = _levels(cfg, [n, 2 * n])
    wf = float(cfg.option("window_fraction", 0.15))
    rows, dists, norms, rims = [], [], [], []
    for lv in levels:
        grid = _grid(cfg, lv)
        runs = [_run(cfg, grid, q, kap) for q in (q1, q2)]
        d = dg.solution_distance(*runs)
        nrm = dg.sup_l2mu(runs[1])
        rim = []
        for tr in runs:
            f = reconstruct_f(tr.final, tr.q, grid, params, where="quad")
            rho = grid.quad_rho_2d
            rim.append(dg.window_mean(f * np.sqrt(rho) / wt.nu(rho, params), grid, wf))
        dists.append(d)
        norms.append(nrm)
        rims.append(rim)
        rows.append([lv, d, nrm, rim[0], rim[1]])
    art = [_write_rows(out / "nonuniqueness.csv", ["n_cells", "distance", "sup_norm_w2", "rim_q1", "rim_q2"], rows)]
    checks = [check_ge("distance_over_norm", dists[-1] / norms[-1], float(cfg.option("min_ratio", 0.1))),
              check_le("distance_refinement_change", abs(dists[-1] / dists[0] - 1), float(cfg.option("stab_tol", 0.1)))]
    for i, lab_ in enumerate(("q1", "q2")):
        seq = [r[i] for r in rims]
        checks.append(check_true(f"rim_decay_{lab_}", all(b_ < a_ for a_, b_ in zip(seq, seq[1:]))))
    return ScenarioResult(cfg.kind, checks, dict(levels=levels, distances=dists, norms=norms, rims=rims), art)


def run_probability_criterion(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    """With q = 0 mass is conserved and f stays nonnegative; a nonzero trace moves mass."""
    params = cfg.params
    grid = _grid(cfg)
    kap = kappa_from(cfg.kappa)
    tol = float(cfg.option("mass_tol", 1e-6))
    q_alt = q_from(cfg.q, params) if cfg.q.get("preset", "zero") != "zero" else BoundaryProfile.constant(1.0)
    rows, checks = [], []
    for label, q in (("zero", BoundaryProfile.zero()), ("nonzero", q_alt)):
        traj = _run(cfg, grid, q, kap)
        M = _masses(traj)
        drift = _relative_drift(M)
        pos = dg.positivity_report(traj)
        rows.append([label, drift, pos.min_f, pos.max_abs_f])
        if label == "zero":
            checks.append(check_le("mass_drift_q0", drift, tol))
            checks.append(check_ge("min_f_relative_q0", pos.min_f / pos.max_abs_f, -1e-8))
        else:
            checks.append(check_ge("mass_change_q_nonzero", drift, 100 * tol))
    art = [_write_rows(out / "probability.csv", ["q", "mass_drift", "min_f", "max_abs_f"], rows)]
    return ScenarioResult(cfg.kind, checks, {"rows": rows}, art)


# --- inequality suites --------------------------------------------------------------------

def run_embedding_suite(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    params = cfg.params
    levels = _levels(cfg, [16, 32, 64])
    fitted, rows = [], []
    for n in levels:
        grid = _grid(cfg, n)
        rep = lab.embedding_suite(params, grid)
        fitted.append(rep.fitted_constant)
        rows += [[n, lbl, r] for lbl, r in rep.ratios]
    hardy = lab.hardy_suite()
    rows += [["hardy", lbl, r] for lbl, r in hardy.ratios]
    art = [_write_rows(out / "embedding.csv", ["n_cells", "member", "ratio"], rows)]
    drift = lab.refinement_drift(fitted)
    hr = dict(hardy.ratios)
    checks = [check_le("embedding_drift", drift, float(cfg.option("drift_tol", 0.05))),
              check_true("embedding_finite", all(np.isfinite(fitted)) and min(fitted) > 0),
              check_le("hardy_sup", hardy.max_ratio, float(cfg.option("hardy_bound", 4.0)),
                       "single constant over x^k, k=0..4"),
              check_le("hardy_const_error", abs(hr["x^0"] - 2), 1e-6),
              check_le("hardy_linear_error", abs(hr["x^1"] - 2), 1e-6)]
    return ScenarioResult(cfg.kind, checks, dict(levels=levels, fitted=fitted, hardy=hardy.ratios), art)


def _random_f0(rng, b):
    a = rng.uniform(0.0, 0.5)
    j = int(rng.integers(1, 4))
    ph = rng.uniform(0, 2 * np.pi)
    return lambda r, th: np.maximum(b - r * r, 0) ** (b / 2) * (1 + a * np.cos(j * th + ph))


def run_coercivity_suite(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    """Fit C on each run's kappa, then run the discrete Gronwall monitor."""
    rng = np.random.default_rng(int(cfg.option("seed", 0)))
    n_runs = int(cfg.option("n_runs", 5))
    b_list = cfg.option("b_list", [cfg.params.b])
    kmax = float(cfg.option("kappa_max", 1.0))
    rows, margins, later = [], [], []
    for i in range(n_runs):
        b = float(b_list[i % len(b_list)])
        params = ModelParams(b=b)
        grid = _grid(cfg, params=params)
        forms = assemble_forms(grid, params)
        kap = KappaMatrix.from_components(*rng.uniform(-kmax, kmax, 3))
        C = lab.coercivity_fit(grid, params, [kap], forms=forms).fitted_constant
        if b >= 2:
            q = BoundaryProfile.constant(float(rng.uniform(0, 1)))
        else:
            q = BoundaryProfile.equilibrium_ratio(params)
        f0 = _random_f0(rng, b)
        traj = solve_fp(w0_from_f0(grid, f0, q), q, kap, cfg.T, cfg.dt, grid, params, forms=forms,
                        diagnostics=False)
        lhs, env = lab.apriori_envelope(traj, forms, C)
        m = float(np.min(env - lhs))
        margins.append(m)
        # step 0 is an identity (env == lhs); the relative slack afterwards is informative
        later.append(float(np.min((env - lhs)[1:] / env[1:])) if len(env) > 1 else m)
        rows.append([i, b, *kap.components, C, m])
    art = [_write_rows(out / "coercivity.csv", ["run", "b", "k11", "k12", "k21", "C", "min_margin"], rows)]
    checks = [check_ge(f"envelope_margin_run{i}", m, 0.0) for i, m in enumerate(margins)]
    p1 = ModelParams(b=1.0)
    g1 = _grid(cfg, params=p1)
    c_sub = lab.coercivity_fit(g1, p1, [KappaMatrix.zero()]).extras["eig_per_kappa"][0]
    checks.append(check_le("sub2_kappa0_eig", c_sub, 1e-10, "B = 1/2 |grad w|^2 for b < 2, kappa = 0"))
    return ScenarioResult(cfg.kind, checks, dict(margins=margins, later_rel_margins=later, rows=rows), art)


def run_stress_bound_suite(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    params = cfg.params
    eps_list = [float(e) for e in cfg.option("eps_list", [0.1, 0.01])]
    rows, checks = [], []
    if params.b > 2:
        grid = _grid(cfg)
        reps = lab.stress_bound_check(lab.power_family(params.b, (1, 2, 3, 4)), params, grid, eps_list)
        eps0 = reps[0].extras["eps0"]
        closed = lab.mu_inverse_integral(params)
        rows += [[grid.radial.n_cells, r.extras["eps"], r.fitted_constant, eps0, closed] for r in reps]
        checks.append(check_le("eps0_vs_closed_form_rel", abs(eps0 / closed - 1), float(cfg.option("tol", 0.01))))
        data = dict(eps0=eps0, closed=closed)
    else:
        levels = _levels(cfg, [16, 32, 64])
        fam = lab.power_family(params.b, (1, 2, 3, 4))
        per_eps = {e: [] for e in eps_list}
        for n in levels:
            grid = _grid(cfg, n)
            for r in lab.stress_bound_check(fam, params, grid, eps_list, discrete=False):
                per_eps[r.extras["eps"]].append(r.fitted_constant)
                rows.append([n, r.extras["eps"], r.fitted_constant, float("nan"), float("nan")])
        for e, cs in per_eps.items():
            checks.append(check_true(f"C_eps={e:g}_finite", all(np.isfinite(cs))))
            checks.append(check_le(f"C_eps={e:g}_drift", lab.refinement_drift(cs), float(cfg.option("drift_tol", 0.05))))
        data = dict(levels=levels, constants=per_eps)
    art = [_write_rows(out / "stress_bound.csv", ["n_cells", "eps", "C_eps", "eps0", "closed_form"], rows)]
    return ScenarioResult(cfg.kind, checks, data, art)


def sign_closed_form(params: ModelParams) -> float:
    """Sign functional at w = rho: -2 pi c b^{theta+2} / ((theta+1)(theta+2)), c = 2 - b/2 - theta."""
    b, th = params.b, params.theta
    c = 2 - b / 2 - th
    return float(-2 * np.pi * c * b ** (th + 2) / ((th + 1) * (th + 2)))


def run_sign_lemma_suite(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    params = cfg.params
    grid = _grid(cfg)
    forms = assemble_forms(grid, params)
    rng = np.random.default_rng(int(cfg.option("seed", 0)))
    samples = lab.random_zero_trace(grid, int(cfg.option("n_samples", 100)), rng)
    vmin, nmin = lab.sign_check(samples, params, grid, forms)
    val = lab.sign_value(lab.rho_power(params.b, 1), params, grid)
    closed = sign_closed_form(params)
    art = [_write_rows(out / "sign.csv", ["min_value", "min_normalized", "rho_value", "rho_closed_form"],
                       [[vmin, nmin, val, closed]])]
    checks = [check_ge("min_normalized_sign", nmin, -1e-8),
              check_le("rho_closed_form_rel", abs(val / closed - 1), 1e-6)]
    return ScenarioResult(cfg.kind, checks, dict(min_value=vmin, min_normalized=nmin, rho_value=val,
                                                 closed=closed), art)


# --- coupled scenarios ----------------------------------------------------------------------

def _coupled_problem(cfg: ScenarioConfig, res=None):
    from fenelab.coupled import CoupledProblem

    res = dict(cfg.resolution, **(res or {}))
    q = q_from(cfg.q, cfg.params)
    return CoupledProblem.build(cfg.params, n_x=res["n_x"], n_cells=res["n_cells"], n_angular=res["n_angular"],
                                dt=float(res.get("dt", cfg.dt)), q=q, grading_exponent=res["grading"],
                                threads=int(cfg.option("threads", 1)))


def export_coupled(traj, prob, out: Path, every=1):
    """CSV per snapshot (velocity, per-node mass, stress) plus run metadata."""
    from fenelab.coupled.spectral import grid_points

    X, Y = grid_points(prob.n_x)
    paths = []
    for k in range(0, len(traj.times), every):
        v = traj.velocities[k].physical
        tau = traj.stresses[k]
        rows = zip(X.reshape(-1), Y.reshape(-1), v[0].reshape(-1), v[1].reshape(-1), traj.masses[k],
                   tau[0].reshape(-1), tau[1].reshape(-1), tau[2].reshape(-1))
        p = out / f"snapshot_{k:05d}.csv"
        _write_rows(p, ["x", "y", "v1", "v2", "mass", "tau11", "tau12", "tau22"],
                    [[float(c) for c in row] for row in rows])
        paths.append(p)
    return paths


def run_coupled_demo(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    from fenelab.coupled import FlowField, solve_coupled

    prob = _coupled_problem(cfg)
    amp = float(cfg.option("amplitude", 1.0))
    v0 = FlowField.taylor_green(prob.n_x, amp)
    W0 = prob.uniform_field(f0_from(cfg.f0, cfg.params)).coeffs
    mode = cfg.option("mode", "both")
    tol = float(cfg.option("picard_tol", 1e-10))
    window = float(cfg.option("T_window", 0.02))
    runs = {}
    for m in (("splitting", "picard") if mode == "both" else (mode,)):
        runs[m] = solve_coupled(prob, v0, W0, cfg.T, mode=m, T_window=window, tol=tol)
    checks = []
    first = next(iter(runs.values()))
    if prob.q.is_zero:
        for m, tr in runs.items():
            checks.append(check_le(f"node_mass_drift_{m}", tr.mass_drift, float(cfg.option("mass_tol", 1e-5))))
    for m, tr in runs.items():
        checks.append(check_ge(f"min_f_{m}", float(np.min(tr.min_f)), -1e-6))
    agree = None
    if len(runs) == 2:
        a, b = runs["splitting"], runs["picard"]
        dv = max(float(np.max(np.abs(x.physical - y.physical))) for x, y in zip(a.velocities, b.velocities))
        dw = float(np.max(np.abs(a.final_w.coeffs - b.final_w.coeffs)))
        scale = max(1.0, float(np.max(np.abs(a.final_w.coeffs))))
        agree = max(dv, dw / scale)
        combined = float(cfg.option("agree_tol", 10 * tol))
        checks.append(check_le("picard_vs_splitting", agree, combined,
                               "max abs difference of v and relative difference of w"))
    every = max(1, len(first.times) // int(cfg.option("snapshots", 5)))
    art = export_coupled(first, prob, out, every)
    meta = {"n_x": prob.n_x, "n_cells": prob.grid.radial.n_cells, "n_angular": prob.grid.n_angular,
            "b": cfg.params.b, "theta": cfg.params.theta, "dt": prob.dt, "T": cfg.T,
            "modes": list(runs), "picard_iterations": runs["picard"].picard_iterations if "picard" in runs else [],
            "seeds": None}
    mp = out / "coupled_meta.json"
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True))
    art.append(mp)
    data = dict(runs=runs, agreement=agree, problem=prob)
    return ScenarioResult(cfg.kind, checks, data, art)


def run_contraction_study(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    """Ratio-vs-T curve of the coupled map for the standard perturbation pair, at the
    base resolution and one refinement; the threshold is where the ratio reaches 1."""
    from fenelab.coupled import contraction_curve, standard_pair

    T_list = [float(t) for t in cfg.option("T_list", [0.05, 0.1, 0.2, 0.4])]
    refine = cfg.option("refine", {"n_x": 48, "n_cells": 64})
    amp = float(cfg.option("amplitude", 0.1))
    eps = float(cfg.option("eps", 1e-2))
    curves, rows = {}, []
    for label, res in (("base", {}), ("refined", refine)):
        prob = _coupled_problem(cfg, res)
        v0, W0, z1, z2 = standard_pair(prob, amp, eps)
        stop = None if label == "base" else 1.05
        cur = contraction_curve(prob, z1, z2, v0, W0, max(T_list), stop_above=stop)
        curves[label] = cur
        for t, r in zip(cur.times, cur.ratios):
            rows.append([label, float(t), float(r)])
    art = [_write_rows(out / "contraction.csv", ["resolution", "T", "ratio"], rows)]
    base = curves["base"]
    at = [base.at(t) for t in T_list]
    thr = [curves[k].threshold() for k in ("base", "refined")]
    checks = [check_le("ratio_at_first_T", at[0], 1.0 - 1e-12, f"T={T_list[0]}"),
              check_true("monotone_in_T", all(b_ >= a_ for a_, b_ in zip(at, at[1:]))),
              check_true("threshold_found", all(t is not None for t in thr))]
    if all(t is not None for t in thr):
        checks.append(check_le("threshold_refinement_change", abs(thr[1] / thr[0] - 1),
                               float(cfg.option("stab_tol", 0.2))))
    data = dict(T_list=T_list, ratios=at, thresholds=thr, curves=curves)
    return ScenarioResult(cfg.kind, checks, data, art)


RUNNERS = {
    "fp_single": run_fp_single,
    "mass_flux_study": run_mass_flux_study,
    "decay_study": run_decay_study,
    "nonuniqueness_demo": run_nonuniqueness_demo,
    "probability_criterion": run_probability_criterion,
    "embedding_suite": run_embedding_suite,
    "coercivity_suite": run_coercivity_suite,
    "stress_bound_suite": run_stress_bound_suite,
    "sign_lemma_suite": run_sign_lemma_suite,
    "coupled_demo": run_coupled_demo,
    "contraction_study": run_contraction_study,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> ScenarioResult:
    """Run, write artifacts and summary.json into the output directory, return the result."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = RUNNERS[cfg.kind](cfg, out)
    res.runtime = time.perf_counter() - t0
    summ = res.summary()
    summ["config"] = {"params": {"b": cfg.params.b, "n_conf": cfg.params.n_conf, "theta": cfg.params.theta},
                      "resolution": cfg.resolution, "time": cfg.time, "q": _jsonable(cfg.q), "f0": cfg.f0,
                      "kappa": cfg.kappa, "options": _jsonable(cfg.options)}
    sp = out / "summary.json"
    sp.write_text(json.dumps(summ, indent=2, sort_keys=True))
    res.artifacts.append(sp)
    return res


def _jsonable(d):
    if isinstance(d, dict):
        return {str(k): _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    return d
