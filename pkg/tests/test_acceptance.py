"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import json

import numpy as np

from conftest import ACCEPTANCE_LINES
from gdconj.bounded import bounded_linear, bounded_nonlinear
from gdconj.cli import main
from gdconj.conjugacy import (
    ConjugacyEngine,
    continuity_modulus,
    gamma_bound,
    gamma_spread,
    gronwall_bound,
    holder_params,
    verify_equivalence,
    verify_flow_identity,
)
from gdconj.dichotomy import alpha_rejection_scan, n_operator, verify_gdd
from gdconj.linsys import Perturbation, Window, constant_system, propagate, sup_deviation
from gdconj.dichotomy import DichotomyCertificate
from gdconj.scenarios import make_scenario, oracle_bounded
from gdconj.sequences import constant

LN2 = np.log(2.0)
DELTAS = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]


def verdict(k: str, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_gdd_certification():
    sc = make_scenario("paper_diag", {"c": 1.0, "window": [-30, 30]})
    rep = verify_gdd(sc.sys, sc.cert)
    verdict("1", rep.max_violation <= 1e-12, f"max relative violation {rep.max_violation:.2e} (<= 1e-12)")


def test_criterion_2_ed_rejection():
    sc = make_scenario("paper_diag", {"c": 1.0, "window": [-30, 30]})
    rows = alpha_rejection_scan(sc.cert, [0.5, 0.3, 0.2], sc.window)
    detail = ", ".join(f"alpha={r.alpha}: [{r.m},{r.m + r.T}] avg {r.average:.3f}" for r in rows if r.found)
    verdict("2", all(r.found for r in rows), detail)


def test_criterion_3_bounded_linear():
    sys = constant_system([[0.5]], Window(-200, 200))
    cert = DichotomyCertificate.alpha_ed([[1.0]], 1.0, LN2)
    sol = bounded_linear(sys, cert, lambda n: 1.0)
    inner = sol.interior
    closed = max(abs(sol.at(n)[0] - 2.0) for n in inner.indices)

    sc = make_scenario("paper_diag", {"c": 1.0})
    w = sc.window
    rng = np.random.default_rng(2024)
    worst_ratio = 0.0
    ok = closed <= 1e-10
    for _ in range(20):
        table = rng.uniform(-1.0, 1.0, (2 * w.size, 2))
        q = lambda n, t=table: t[n - w.n_min + w.size // 2]
        s = bounded_linear(sc.sys, sc.cert, q, q_tail_bound=1.0)
        ref = oracle_bounded(sc.sys, sc.cert, q)
        lo, hi = w.idx(s.interior.n_min), w.idx(s.interior.n_max)
        gap = float(np.abs(s.values - ref)[lo:hi + 1].max())
        ok &= gap <= s.tail_budget
        worst_ratio = max(worst_ratio, gap / s.tail_budget)
    verdict("3", ok, f"closed-form error {closed:.1e}; worst oracle gap / tail_budget {worst_ratio:.3f} over 20 forcings")


def test_criterion_4_picard_contraction():
    sc = make_scenario("const_alpha", {"alpha": LN2})
    r = 0.2
    q = Perturbation(lambda n, z: r * np.sin(z) + 1.0, constant(r + 1.0), constant(r), "q",
                     lambda ns, Z: r * np.sin(Z) + 1.0)
    theta = sum(n_operator(sc.cert, r, 0, sc.window))
    sol = bounded_nonlinear(sc.sys, sc.cert, q, q.bound, q.lip, eps=1e-12)
    ratio = max(sol.ratios)
    ok = ratio <= 0.35 and sol.residual <= 1e-8
    verdict("4", ok, f"N(n,r) = {theta:.4f}, max successive ratio {ratio:.4f} (<= 0.35), "
                     f"interior residual {sol.residual:.1e} over {sol.picard_iters} iterations")


def test_criterion_5_conjugacy_properties():
    sc = make_scenario("paper_diag", {"c": 1.0})
    eng = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g)
    rng = np.random.default_rng(5)
    inner = eng.interior
    points = [(int(rng.integers(inner.n_min, inner.n_max + 1)), rng.uniform(-2, 2, 2)) for _ in range(100)]
    sols = [(int(rng.integers(inner.n_min, inner.n_max + 1)), rng.uniform(-2, 2, 2)) for _ in range(10)]
    rep = verify_equivalence(eng, sols, points, tol=1e-6)
    flow = []
    for _ in range(20):
        m = int(rng.integers(inner.n_min + 5, inner.n_max - 4))
        flow.append((m + int(rng.integers(-5, 6)), m, rng.uniform(-2, 2, 2)))
    rep.extend(verify_flow_identity(eng, flow, tol=1e-6))
    w = rep.worst()
    detail = (f"theta {eng.theta:.3f}; round trip {max(w['round_trip_LH']['measured'], w['round_trip_HL']['measured']):.1e}; "
              f"|H-id| {w['bound_H']['measured']:.3f} <= {w['bound_H']['bound']:.3f}; "
              f"solution map {w['solution_map_H']['measured']:.1e}; flow {w['flow_identity_chi']['measured']:.1e}")
    verdict("5", eng.theta <= 0.5 and rep.passed, detail)


def test_criterion_6_degenerate_identity():
    sc = make_scenario("paper_diag", {"c": 1.0})
    eng = ConjugacyEngine(sc.sys, sc.cert, sc.g, sc.g)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(eng.interior.n_min, eng.interior.n_max + 1))
        xi = rng.uniform(-3, 3, 2)
        worst = max(worst, float(np.abs(eng.H_map(n, xi) - xi).max()))
    verdict("6", worst <= 10 * eng.eps, f"max |H - id| = {worst:.1e} (<= {10 * eng.eps:.0e})")


def test_criterion_7_gronwall():
    sc = make_scenario("paper_diag", {"c": 1.0})
    rng = np.random.default_rng(7)
    w = sc.window
    worst, exceptions = 0.0, 0
    for _ in range(200):
        k, n = (int(v) for v in rng.integers(w.n_min, w.n_max + 1, size=2))
        xi, xi2 = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
        sep = float(np.abs(propagate(sc.sys, sc.f, k, xi, n) - propagate(sc.sys, sc.f, k, xi2, n)).max())
        bound = gronwall_bound(sc.sys, sc.f, k, n, float(np.abs(xi - xi2).max()))
        exceptions += sep > bound * (1 + 1e-12)
        worst = max(worst, sep / bound)
    verdict("7", exceptions == 0, f"worst separation / bound {worst:.4f}, {exceptions} exceptions in 200 pairs")


def _holder_run(sc, hp, eng):
    rng = np.random.default_rng(8)
    tables = [continuity_modulus(eng, n, rng.uniform(-1, 1, eng.sys.dim), DELTAS,
                                 rng.normal(size=(3, eng.sys.dim)), hp) for n in (-5, 0, 5)]
    within = all(t.within_bound for t in tables)
    slope = min(t.slope for t in tables)
    return within, slope


def test_criterion_8_holder():
    sc = make_scenario("const_alpha", {"alpha": 1.0})
    eng = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g)
    M = sup_deviation(sc.sys)
    r = 0.1
    hp = holder_params(1.0, 0.05, 0.1, 1.0, M, r, strict=False)
    if M + r > 0.5:
        verdict("8", False, f"const_alpha(1) has M = sup|A_n - I| = {M:.3f}, so M + r = {M + r:.3f} > 0.5 "
                            f"(exponent {hp.exponent:.3f}); the Hölder regime is not reachable")
    within, slope = _holder_run(sc, hp, eng)
    verdict("8", within and slope >= hp.exponent - 0.1, f"slope {slope:.3f}, exponent {hp.exponent:.3f}")


def test_criterion_8_supplement_stable_alpha2():
    # closest reachable Hölder setting: alpha = 2, stable directions only, r = 0.05
    sc = make_scenario("const_alpha", {"alpha": 2.0, "unstable_dim": 0,
                                        "f": {"family": "saturating", "params": {"c": 0.02}},
                                        "g": {"family": "saturating", "params": {"c": 0.05}}})
    eng = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g)
    M = sup_deviation(sc.sys)
    hp = holder_params(1.0, 0.02, 0.05, 2.0, M, 0.05)
    within, slope = _holder_run(sc, hp, eng)
    verdict("8-supplement", hp.exponent >= 0.5 and within and slope >= hp.exponent - 0.1,
            f"alpha=2 stable-only: M + r = {M + 0.05:.3f}, exponent {hp.exponent:.3f}, "
            f"moduli under (D1+D2) delta^exponent: {within}, min slope {slope:.3f}")


def test_criterion_9_gamma_stability():
    spreads = []
    for alpha in (LN2, 1.0):
        sc = make_scenario("const_alpha", {"alpha": alpha})
        eng = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g)
        spread, vals = gamma_spread(eng, range(-20, 21), 4)
        spreads.append(spread)
        assert vals.max() <= gamma_bound(eng, 4)
    sc = make_scenario("paper_diag", {"c": 1.0})
    eng = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g)
    paper_spread, _ = gamma_spread(eng, range(-20, 21), 4)
    verdict("9", max(spreads) <= 1e-12,
            f"const_alpha spreads {max(spreads):.1e}; paper_diag spread (reported only) {paper_spread:.4f}")


def test_criterion_10_determinism(tmp_path):
    cfg = {"scenario": {"name": "paper_diag", "params": {"c": 1.0}}, "window": [-30, 30],
           "sampling": {"points": 6, "solutions": 2, "flow": 4}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    codes = [main(["verify", "--config", str(path), "--out", str(tmp_path / d), "--seed", "11"]) for d in "ab"]
    same = (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    verdict("10", same and codes == [0, 0], f"exit codes {codes}; summary.json byte-identical: {same}")
