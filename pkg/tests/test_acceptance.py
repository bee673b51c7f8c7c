"""Acceptance criteria 1 to 11, each at its stated tolerance and runtime.

Every test records one PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion also fails the suite.
"""
import filecmp
import math
import os
import time
from fractions import Fraction as F

import numpy as np

from conftest import ACCEPTANCE
from jarnik.cli import main
from jarnik.counting import (AuditGrid, calibrate_c, covering_count_audit, default_ball,
                             eta_for, global_counting_audit, local_counting_audit,
                             nondivergence_audit, ubiquity_audit, ubiquity_ball_depth)
from jarnik.formulas import (admissible_region, general_branch, lower_dim_general,
                             lower_dim_special, middle_third_kappa_requirement,
                             special_branch, special_tau_bound, upper_dim)
from jarnik.fourier import dim_l1_estimate
from jarnik.fractal import DigitSystem, hausdorff_dim
from jarnik.geometry import five_r_cover, random_rect_family, simplex_trials
from jarnik.limsup import (box_dim_estimate, build_finite_stage, nu_restricted_audit,
                           product_ball_depth, product_construction_audit, product_etas)
from jarnik.regions import build_AQ, build_Aq_single
from oracles import brute_intervals, lebesgue_union_length

CANTOR = DigitSystem(3, ((0, 2),))
K5 = DigitSystem(5, ((0, 1, 2, 3),))
FULL5 = DigitSystem.full(5)
PLANE = DigitSystem(5, ((0, 1, 2, 3), (0, 1, 2, 3, 4)))
DELTA5 = math.log(4) / math.log(5)


def record(k, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed <= limit
    ACCEPTANCE[k] = (ok, f"{detail}; {elapsed:.1f}s (limit {limit:g}s)")
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {ACCEPTANCE[k][1]}")
    return ok


def test_criterion_01_formula_fidelity():
    t0 = time.perf_counter()
    classical = all(upper_dim(1, 1, tau) == F(2, 1 + tau) for tau in (1, 2, 3))
    dim = abs(hausdorff_dim(CANTOR) - 0.63093) <= 1e-5
    kappa = abs(middle_third_kappa_requirement() - 1.1699) <= 1e-4
    limit_ok = True
    for kappa_v in (F(1, 2), F(2), F(7, 3)):
        hi = admissible_region("self-similar", kappa=kappa_v,
                               alpha=1 + F(1, 10 ** 12)).intervals["beta"].hi
        limit_ok &= abs(float(hi) - float(2 * kappa_v / (2 + kappa_v))) <= 1e-9
    el = time.perf_counter() - t0
    ok = classical and dim and kappa and limit_ok
    assert record(1, ok, f"classical={classical} dim={dim} kappa={kappa} beta_sup={limit_ok}",
                  el, 1)


def test_criterion_02_ordering():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    violations = strict_fail = n = 0
    while n < 10 ** 4:
        delta = float(rng.uniform(0.01, 1.0))
        top = special_tau_bound(1, delta)
        tau = float(rng.uniform(1.0, min(top, 50.0)))
        beta = float(rng.uniform(0.01, 0.99))
        if not (delta < 1 and tau < top):
            continue
        n += 1
        g = lower_dim_general(1, delta, tau, beta)
        s = lower_dim_special(1, delta, tau, beta)
        u = upper_dim(1, delta, tau)
        violations += not (g <= s <= u)
        if tau > 1:
            strict_fail += not (general_branch(1, delta, tau, beta)
                                < special_branch(1, delta, tau, beta))
    el = time.perf_counter() - t0
    assert record(2, violations == 0 and strict_fail == 0,
                  f"{n} points, {violations} order violations, {strict_fail} strictness failures",
                  el, 5)


def test_criterion_03_simplex_lemma():
    t0 = time.perf_counter()
    viol = multi = trials = 0
    for d in (1, 2):
        # 10^4 boxes spread evenly over Q = 1..20, then 10^4 more at Q = 20
        for Q, n in [(Q, 500) for Q in range(1, 21)] + [(20, 10 ** 4)]:
            r = simplex_trials(d, Q, n, seed=3 + n)
            viol += r.violations
            multi += r.multi_point
            trials += r.trials
    el = time.perf_counter() - t0
    assert record(3, viol == 0,
                  f"{trials} boxes, {viol} violations ({multi} with d+1 or more points)",
                  el, 60)


def test_criterion_04_region_oracle():
    t0 = time.perf_counter()
    bad = checked = 0
    for theta in (F(0), F(1, 2), F(1, 7)):
        for eta in (F(1, 10), F(1, 100), F(1, 1000)):
            for Q in range(1, 51):
                want = lebesgue_union_length(brute_intervals(range(Q, 2 * Q), [eta] * Q, theta))
                bad += build_AQ(Q, eta, theta).volume() != want
                want1 = lebesgue_union_length(brute_intervals([Q], [eta], theta))
                bad += build_Aq_single(Q, eta, theta).volume() != want1
                checked += 2
    el = time.perf_counter() - t0
    assert record(4, bad == 0, f"{checked} exact comparisons, {bad} discrepancies", el, 60)


def test_criterion_05_lebesgue_sanity():
    t0 = time.perf_counter()
    g_rng, c_rng = [math.inf, -math.inf], [math.inf, -math.inf]
    ok = True
    for tau in (1, 1.05, 1.2):
        for k in range(6, 15):
            Q = 2 ** k
            eta = eta_for(Q, tau)
            r = covering_count_audit(FULL5, Q, eta)
            # the cover pass also yields the global union; check it against a direct run
            if k == 6:
                g = global_counting_audit(FULL5, Q, eta)
                ok &= abs(g.ratio - r.global_ratio) <= g.err + 1e-12
            g_rng = [min(g_rng[0], r.global_ratio), max(g_rng[1], r.global_ratio)]
            c_rng = [min(c_rng[0], r.ratio), max(c_rng[1], r.ratio)]
    el = time.perf_counter() - t0
    ok &= 0.5 <= g_rng[0] and g_rng[1] <= 3 and 1 / 5 <= c_rng[0] and c_rng[1] <= 10
    assert record(5, ok, f"global ratios [{g_rng[0]:.4f}, {g_rng[1]:.4f}], "
                  f"cover ratios [{c_rng[0]:.4f}, {c_rng[1]:.4f}]", el, 120)


def test_criterion_06_local_counting_stability():
    t0 = time.perf_counter()
    ok = True
    parts = []
    for theta in (F(0), F(1, 7)):
        grid = AuditGrid(tuple(2 ** k for k in range(8, 15)), (1.02, 1.1), theta, beta=0.2)
        rep = local_counting_audit(K5, grid)
        worst = max(s["spread"] for s in rep.by_Q().values())
        tr = rep.spread_trend()
        # the slope must be consistent with |slope| <= 0.05 at two standard errors
        trend_ok = abs(tr["slope"]) - 2 * tr["stderr"] <= 0.05
        ok &= worst <= 10 and trend_ok
        parts.append(f"theta={theta}: max spread {worst:.3f}, slope "
                     f"{tr['slope']:+.4f}±{2 * tr['stderr']:.4f}")
    el = time.perf_counter() - t0
    assert record(6, ok, "; ".join(parts), el, 600)


def test_criterion_07_fourier_threshold():
    t0 = time.perf_counter()
    p5 = dim_l1_estimate(K5, [5 ** k for k in range(5, 10)])
    p3 = dim_l1_estimate(CANTOR, [3 ** k for k in range(7, 14)])
    el = time.perf_counter() - t0
    ok = p5.estimate > 0.5 and p5.spread <= 0.1 and p3.estimate <= 0.64
    assert record(7, ok, f"5-ary estimate {p5.estimate:.4f} spread {p5.spread:.4f}; "
                  f"middle-third estimate {p3.estimate:.4f}", el, 300)


def test_criterion_08_box_dimension():
    t0 = time.perf_counter()
    tau = 1.2
    stage = build_finite_stage(K5, tau, 0, 2 ** 6, 2 ** 13, materialize=False)
    res = box_dim_estimate(K5, stage, range(6, 11))
    target = DELTA5 + 2 / (1 + tau) - 1
    base = DELTA5 / (1 + tau)
    el = time.perf_counter() - t0
    ok = abs(res.slope - target) <= 0.10 and res.slope > base
    assert record(8, ok, f"slope {res.slope:.4f} vs target {target:.4f}, baseline {base:.4f}",
                  el, 600)


def test_criterion_09_nu_holder_stability():
    t0 = time.perf_counter()
    tau = 1.2
    s = DELTA5 + 2 / (1 + tau) - 1 - 0.02
    audits = [nu_restricted_audit(K5, (0,), 2 ** k, tau, F(1, 4), s, 10 ** 4, seed=0)
              for k in (10, 12, 14)]
    el = time.perf_counter() - t0
    ok = True
    growth = 0.0
    for a in audits:
        ok &= a.nu_total == 1
        ok &= all(math.isfinite(c.sup_ratio) and c.sup_ratio >= 0 for c in a.cases.values())
    for a, b in zip(audits, audits[1:]):
        doublings = math.log2(b.Q / a.Q)
        for name, cb in b.cases.items():
            ca = a.cases[name]
            if ca.sup_ratio > 0 and cb.sup_ratio > 0:
                g = (cb.sup_ratio / ca.sup_ratio) ** (1 / doublings)
                growth = max(growth, g)
    ok &= growth < 2
    fr = [a.F_ratio for a in audits]
    window = max(fr) / min(fr)
    ok &= window <= 8
    assert record(9, ok, f"max sup growth per doubling {growth:.3f}; "
                  f"F ratios {[round(x, 4) for x in fr]} (window {window:.3f})", el, 600)


def test_criterion_10_planar_pipeline():
    t0 = time.perf_counter()
    tau = 0.6
    Qs = [2 ** k for k in range(8, 13)]
    nd, ub, cnt = [], [], []
    cover_ok = True
    for Q in Qs:
        etas = product_etas(Q, tau)
        w = default_ball(PLANE, ubiquity_ball_depth(5, Q), 0)
        nd.append(nondivergence_audit(PLANE, w, Q, etas).ratio)
        c, _ = calibrate_c(PLANE, w, Q, etas)
        u = ubiquity_audit(PLANE, w, Q, etas, c)
        ub.append(u.ratio - u.err)
        wp = default_ball(PLANE, product_ball_depth(5, Q, tau), 0)
        a = product_construction_audit(PLANE, wp, Q, tau, n_samples=1000)
        cnt.append(a.count_ratio)
        cover_ok &= a.disjoint and a.covered
    # the generic 5r-cover on random planar families with the same exponents
    rng = np.random.default_rng(10)
    u_vec = (1 + tau, 2 - tau)
    for i in range(50):
        res = five_r_cover(random_rect_family(40, u_vec, rng, centers=4 * (i % 2)), u_vec)
        cover_ok &= res.disjoint and res.covered
    el = time.perf_counter() - t0
    from scipy.stats import linregress
    fit = linregress(np.log(Qs), np.log(nd))
    nd_spread = max(nd) / min(nd)
    no_upward = fit.slope - 2 * fit.stderr <= 0
    cnt_window = max(cnt) / min(cnt)
    ok = (nd_spread <= 10 and no_upward and min(ub) >= 0.2 and cnt_window <= 8
          and cover_ok)
    assert record(10, ok, f"nondiv spread {nd_spread:.3f} slope {fit.slope:+.4f}; "
                  f"ubiquity min {min(ub):.3f}; count window {cnt_window:.3f}; "
                  f"cover exact {cover_ok}", el, 900)


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    runs = [
        ["audit-counting", "Q=2^6,2^7", "tau=1.02", "max_balls=2", "digits=0,1,2,3"],
        ["formulas", "upper-dim", "d=1", "delta=0.63093", "tau=3"],
        ["nu-audit", "Q=2^10", "samples=500"],
    ]
    same = True
    for i, args in enumerate(runs):
        dirs = [tmp_path / f"{i}a", tmp_path / f"{i}b"]
        for d in dirs:
            assert main(["--out-dir", str(d), "--seed", "7", *args]) == 0
        names = sorted(n for n in os.listdir(dirs[0]) if n.endswith((".csv", ".json")))
        _, mism, err = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
        same &= bool(names) and not mism and not err
    el = time.perf_counter() - t0
    assert record(11, same, "CSV/JSON byte-identical across reruns", el, 60)

