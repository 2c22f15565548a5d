"""Exit criteria at desk scale; every test prints one ``ACn PASS|FAIL`` line.

Run alone with ``pytest -m acceptance -s``.  The contraction study (AC10) takes several
minutes; the rest finish in seconds.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from fenelab import diagnostics as dg
from fenelab import fp_solver as fp
from fenelab.config import load_config
from fenelab.fp_solver import BoundaryProfile
from fenelab.geometry import build_grid
from fenelab.scenarios import run_scenario, sign_closed_form
from fenelab.weights import KappaMatrix, ModelParams

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def scenario(name, tmp_path, *overrides):
    cfg = load_config(CONFIGS / f"{name}.toml", list(overrides))
    t0 = time.perf_counter()
    res = run_scenario(cfg, tmp_path)
    return res, time.perf_counter() - t0


def failed(res):
    return ", ".join(f"{c.name}={c.value:.4g} (bound {c.bound:.4g})" for c in res.checks if not c.passed)


def test_ac1_mass_conservation(tmp_path, ac_report):
    drifts, elapsed = [], 0.0
    for b in (2, 4):
        for kap in ("zero", "shear"):
            res, dt = scenario("fp_single", tmp_path / f"{b}_{kap}", f"params.b={b}", f"kappa.kind={kap}")
            assert res.check("mass_drift").bound == 1e-6
            drifts.append(res.data["mass_drift"])
            elapsed += dt
    ok = max(drifts) <= 1e-6 and elapsed <= 60
    ac_report("AC1", ok, f"max relative mass drift {max(drifts):.2e} (<= 1e-6) over 4 runs at 96 cells, "
                         f"{elapsed:.1f} s (<= 60 s)")
    assert ok


def test_ac2_flux_law(tmp_path, ac_report):
    r4, _ = scenario("mass_flux", tmp_path / "b4")
    r2, _ = scenario("mass_flux", tmp_path / "b2", "params.b=2")
    m4, p4 = r4.data["measured"][-1], r4.data["predicted"][-1]
    m2, p2 = r2.data["measured"][-1], r2.data["predicted"][-1]
    assert p4 == pytest.approx(16 * math.pi)
    rel4, rel2 = abs(m4 / p4 - 1), abs(m2 / p2 - 1)
    order = r4.data["order"]
    ok = rel4 <= 0.05 and order >= 1 and m2 > 0 and rel2 <= 0.10
    ac_report("AC2", ok, f"b=4: dM/dt={m4:.5g} vs 16pi={p4:.5g} (rel {rel4:.3f}, <= 0.05), order {order:.3g} (>= 1); "
                         f"b=2: {m2:.5g} vs {p2:.5g} (rel {rel2:.3f}, <= 0.10), positive={m2 > 0}")
    assert ok, f"b=4 {failed(r4)}; b=2 {failed(r2)}"


def test_ac3_positivity(ac_report):
    rng = np.random.default_rng(2024)
    worst = np.inf
    bs = [1.0, 2.0, 4.0]
    for i in range(10):
        b = bs[i % 3]
        p = ModelParams(b=b)
        grid = build_grid(p, n_cells=32, n_angular=8)
        kap = KappaMatrix.from_components(*rng.uniform(-0.5, 0.5, 3))
        if b < 2:
            q = BoundaryProfile.equilibrium_ratio(p)
        else:
            c0 = rng.uniform(0.0, 1.0)
            q = BoundaryProfile.series(b, {0: c0, 2: rng.uniform(-c0, c0)})
        a, j, ph = rng.uniform(0, 0.9), int(rng.integers(1, 4)), rng.uniform(0, 2 * np.pi)
        f0 = lambda r, th: ((b - r * r) ** (b / 2) * (1 + a * np.cos(j * th + ph)) * (1 + 0.5 * r * r / b))
        traj = fp.solve_fp(fp.w0_from_f0(grid, f0, q), q, kap, 1.0, 0.01, grid, p, diagnostics=False)
        rep = dg.positivity_report(traj)
        worst = min(worst, rep.min_f / rep.max_abs_f)
    ok = worst >= -1e-8
    ac_report("AC3", ok, f"min f / max f over 10 randomized runs = {worst:.3e} (>= -1e-8)")
    assert ok


def test_ac4_decay(tmp_path, ac_report):
    r1, _ = scenario("decay", tmp_path / "b1")
    r4, _ = scenario("decay", tmp_path / "b4", "params.b=4", "q.preset=zero")
    r2, _ = scenario("decay", tmp_path / "b2", "params.b=2", "q.preset=zero")
    e1, e4 = r1.data["exponents"][-1], r4.data["exponents"][-1]
    w2 = r2.data["window_ratios"]
    ok = abs(e1 - 0.5) <= 0.02 and e4 >= 1.1 and all(b < a for a, b in zip(w2, w2[1:]))
    ac_report("AC4", ok, f"b=1 exponent {e1:.4f} (0.5 +- 0.02); b=4 exponent {e4:.4f} (>= 1.1); "
                         f"b=2 window f/nu {', '.join(f'{v:.3f}' for v in w2)} (decreasing)")
    assert ok


def test_ac5_nonuniqueness(tmp_path, ac_report):
    res, _ = scenario("nonuniqueness", tmp_path)
    d, n = res.data["distances"], res.data["norms"]
    ratio = d[-1] / n[-1]
    change = abs(d[-1] / d[-2] - 1)
    rims = np.array(res.data["rims"])
    rim_ok = bool(np.all(np.diff(rims, axis=0) < 0))
    ok = ratio >= 0.1 and change <= 0.1 and rim_ok
    ac_report("AC5", ok, f"distance / sup|w2| = {ratio:.4f} (>= 0.1), change under refinement {change:.2e} "
                         f"(<= 0.1), rim f rho^0.5/nu decreasing for both runs: {rim_ok}")
    assert ok


def test_ac6_embedding(tmp_path, ac_report):
    drifts, hardy, errs = [], [], []
    for b in (1, 2, 4):
        res, _ = scenario("embedding", tmp_path / str(b), f"params.b={b}")
        drifts.append(res.check("embedding_drift").value)
        hardy.append(res.check("hardy_sup").value)
        errs += [res.check("hardy_const_error").value, res.check("hardy_linear_error").value]
        assert res.check("embedding_finite").passed
    ok = max(drifts) <= 0.05 and max(hardy) < np.inf and max(errs) <= 1e-6
    ac_report("AC6", ok, f"max constant drift {max(drifts):.2e} (<= 0.05), Hardy sup {max(hardy):.4f}, "
                         f"closed-form error {max(errs):.1e} (<= 1e-6)")
    assert ok


def test_ac7_coercivity_envelope(tmp_path, ac_report):
    res, _ = scenario("coercivity", tmp_path)
    margins = res.data["margins"]
    ok = len(margins) == 5 and min(margins) >= 0
    ac_report("AC7", ok, f"Gronwall margin min over 5 randomized runs = {min(margins):.3e} (>= 0 at every step; "
                         f"smallest relative slack after t=0: {min(res.data['later_rel_margins']):.3e})")
    assert ok


def test_ac8_stress_bound(tmp_path, ac_report):
    r3, _ = scenario("stress_bound", tmp_path / "b3")
    r1, _ = scenario("stress_bound", tmp_path / "b1", "params.b=1", "resolution.grading=2.0",
                     "resolution.levels=[16, 32, 64]")
    rel = r3.check("eps0_vs_closed_form_rel").value
    drifts = [c.value for c in r1.checks if c.name.endswith("_drift")]
    finite = all(c.passed for c in r1.checks if c.name.endswith("_finite"))
    ok = rel <= 0.01 and finite and max(drifts) <= 0.05
    ac_report("AC8", ok, f"b=3 C vs closed form rel {rel:.2e} (<= 0.01); b=1 C_eps finite={finite}, "
                         f"drift {max(drifts):.2e} for eps in (0.1, 0.01)")
    assert ok


def test_ac9_sign_lemma(tmp_path, ac_report):
    mins = []
    for b, th in ((6, 0.0), (7, 0.5), (6, -0.5)):
        res, _ = scenario("sign_lemma", tmp_path / f"{b}_{th}", f"params.b={b}", f"params.theta={th}")
        mins.append(res.data["min_normalized"])
        if (b, th) == (6, 0.0):
            val = res.data["rho_value"]
    assert sign_closed_form(ModelParams(b=6.0, theta=0.0)) == pytest.approx(36 * math.pi)
    err = abs(val / (36 * math.pi) - 1)
    ok = min(mins) >= -1e-8 and err <= 1e-6
    ac_report("AC9", ok, f"min normalized sign functional {min(mins):.4g} (>= -1e-8) over 3 x 100 samples; "
                         f"36pi example rel error {err:.1e} (<= 1e-6)")
    assert ok


def test_ac10_contraction(tmp_path, ac_report):
    res, elapsed = scenario("contraction", tmp_path)
    r = res.data["ratios"]
    thr = res.data["thresholds"]
    mono = all(b >= a for a, b in zip(r, r[1:]))
    stable = None not in thr and abs(thr[1] / thr[0] - 1) <= 0.2
    ok = r[0] < 1 and mono and stable and elapsed <= 600
    thr_txt = ", ".join("none" if t is None else f"{t:.4f}" for t in thr)
    ac_report("AC10", ok, f"ratios at T=0.05..0.4: {', '.join(f'{v:.3f}' for v in r)} (first < 1, non-decreasing); "
                          f"threshold base/refined {thr_txt} (within 20%); {elapsed:.0f} s (<= 600 s)")
    assert ok


def test_ac11_coupled_consistency(tmp_path, ac_report):
    res, elapsed = scenario("coupled", tmp_path)
    agree = res.check("picard_vs_splitting")
    drift = max(res.data["runs"][m].mass_drift for m in ("splitting", "picard"))
    ok = agree.passed and drift <= 1e-5
    ac_report("AC11", ok, f"Picard vs splitting difference {agree.value:.2e} (<= {agree.bound:.0e}); "
                          f"per-node mass drift {drift:.2e} (<= 1e-5), T=0.5, {elapsed:.0f} s")
    assert ok
