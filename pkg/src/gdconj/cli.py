"""Command line front end: ``gdconj {certify,bounded,verify,modulus} --config run.json``.

Every run writes ``summary.json`` (sorted keys, no timestamps) and ``detail.csv``
into ``--out``.  Exit codes: 0 pass, 1 a check failed, 2 bad config or usage,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounded import bounded_linear, bounded_nonlinear
from .conjugacy import (
    CSV_HEADER,
    ConjugacyEngine,
    argument_hash,
    continuity_modulus,
    gamma,
    holder_params,
    uniform_continuity_probe,
    verify_equivalence,
    verify_flow_identity,
)
from .dichotomy import (
    DichotomyCertificate,
    GreenKernel,
    alpha_rejection_scan,
    check_divergence,
    check_h2_h3,
    stepanov_norm,
    verify_ed,
    verify_gdd,
)
from .errors import (
    CertificateRejected,
    ConfigError,
    GDConjError,
    NotApplicable,
    NotContractive,
    NumericalFailure,
    SingularCoefficient,
    TailBudgetExceeded,
)
from .linsys import Window, sup_deviation, tabulated_system
from .scenarios import Scenario, make_scenario, oracle_bounded, perturbation_from_spec
from .sequences import constant, seq_from_spec

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULT_TOLERANCES = {"eps": 1e-9, "round_trip_tol": 1e-6, "residual_tol": 1e-8, "cert_tol": 1e-9}
DEFAULT_SAMPLING = {"seed": 0, "points": 20, "solutions": 3, "flow": 10, "flow_offset": 5,
                    "scale": 1.0, "directions": 4, "deltas": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
                    "ell": 3, "span": 6}


class CheckFailed(GDConjError):
    pass


@dataclass
class RunConfig:
    scenario: Scenario
    window: Window
    tolerances: dict
    sampling: dict
    raw: dict
    claim: dict | None = None
    bounded: dict = field(default_factory=dict)
    fault_injection: dict | None = None

    @property
    def seed(self) -> int:
        return int(self.sampling["seed"])


def _parse_window(value) -> Window:
    try:
        if isinstance(value, str):
            lo, hi = (int(v) for v in value.split(","))
        else:
            lo, hi = (int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad window {value!r}; expected two integers") from exc
    if hi - lo + 1 < 8:
        raise ConfigError(f"window [{lo}, {hi}] is shorter than 8 points")
    return Window(lo, hi)


def _inline_scenario(spec: dict, window: Window) -> Scenario:
    """``{"A": {"<n>": matrix, ...}, "certificate": {...}, "f": ..., "g": ...}``."""
    try:
        mats = {int(k): np.asarray(v, dtype=float) for k, v in spec["A"].items()}
        cert = DichotomyCertificate.from_json(spec["certificate"])
    except KeyError as exc:
        raise ConfigError(f"inline system missing {exc}") from exc
    sys_ = tabulated_system(mats, window, label="inline")
    ones = constant(1.0)
    f = perturbation_from_spec(spec.get("f", {"family": "zero"}), sys_.dim, ones, 0.0, "f")
    g = perturbation_from_spec(spec.get("g", {"family": "zero"}), sys_.dim, ones, 0.0, "g")
    return Scenario("inline", sys_, cert, f, g, {}, {})


def load_config(raw: dict, seed: int | None = None, window: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if window is not None:
        win = _parse_window(window)
    elif "window" in raw:
        win = _parse_window(raw["window"])
    else:
        raise ConfigError("config has no window (set \"window\": [a, b] or pass --window)")
    tol = {**DEFAULT_TOLERANCES, **raw.get("tolerances", {})}
    if any(not (isinstance(v, (int, float)) and v > 0) for v in tol.values()):
        raise ConfigError("all tolerances must be positive numbers")
    sampling = {**DEFAULT_SAMPLING, **raw.get("sampling", {})}
    if seed is not None:
        sampling["seed"] = seed
    if "scenario" in raw:
        sc = raw["scenario"]
        name = sc["name"] if isinstance(sc, dict) else sc
        params = dict(sc.get("params", {})) if isinstance(sc, dict) else {}
        params["window"] = [win.n_min, win.n_max]
        scenario = make_scenario(name, params)
    elif "inline" in raw:
        scenario = _inline_scenario(raw["inline"], win)
    else:
        raise ConfigError("config needs either \"scenario\" or \"inline\"")
    return RunConfig(scenario, win, tol, sampling, raw, raw.get("claim"), raw.get("bounded", {}),
                     raw.get("fault_injection"))


# -- report writing --------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_reports(out: Path, summary: dict, header: list[str], rows: list[list]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(summary), sort_keys=True, indent=2) + "\n"
    (out / "summary.json").write_text(text, encoding="utf-8")
    with open(out / "detail.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _config_digest(raw: dict) -> str:
    return hashlib.sha1(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:12]


def _header(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "seed": cfg.seed, "config_digest": _config_digest(cfg.raw),
            "window": [cfg.window.n_min, cfg.window.n_max], "scenario": cfg.scenario.name,
            "scenario_params": {k: v for k, v in cfg.scenario.params.items() if k != "window"}}


def _row(name, n, m, measured, bound, passed) -> list:
    return [name, n, m, argument_hash(n, m, bound), repr(float(measured)), repr(float(bound)), int(bool(passed))]


# -- commands ------------------------------------------------------------------------

def cmd_certify(cfg: RunConfig) -> tuple[dict, list[str], list[list], bool]:
    sc, w = cfg.scenario, cfg.window
    tol = cfg.tolerances["cert_tol"]
    rows: list[list] = []
    checks: dict[str, dict] = {}

    gdd = verify_gdd(sc.sys, sc.cert, tol)
    checks["gdd"] = {"max_violation": gdd.max_violation, "worst_pair": list(gdd.worst_pair),
                     "convention": gdd.convention, "passed": gdd.passed}
    rows.append(_row("gdd", *gdd.worst_pair, gdd.max_violation, tol, gdd.passed))

    trend = check_divergence(sc.cert, w)
    checks["divergence"] = {"forward": trend.forward_growth, "backward": trend.backward_growth,
                            "forward_ratio": trend.forward_ratio, "backward_ratio": trend.backward_ratio,
                            "passed": trend.consistent}

    hyp = check_h2_h3(sc.cert, sc.f.bound, sc.g.bound, sc.f.lip.maximum(sc.g.lip), w)
    checks["h2_h3"] = {"B": hyp.B, "theta": hyp.theta, "B_window": hyp.B_window,
                       "theta_window": hyp.theta_window, "B_green": hyp.B_green,
                       "theta_green": hyp.theta_green, "passed": hyp.passed}
    rows.append(_row("theta_green", 0, 0, hyp.theta_green, 1.0, hyp.passed))

    ell = int(cfg.sampling["ell"])
    checks["stepanov"] = {"L": ell, "value": stepanov_norm(sc.f.lip.maximum(sc.g.lip), ell, w),
                          "passed": True}

    alphas = [0.5, 0.3, 0.2]
    claim = cfg.claim
    if claim is not None:
        if claim.get("kind") != "alpha" or "alpha" not in claim:
            raise ConfigError("claim must look like {\"kind\": \"alpha\", \"alpha\": value}")
        alphas = [float(claim["alpha"])]
    scan = alpha_rejection_scan(sc.cert, alphas, w)
    checks["alpha_rejection"] = [{"alpha": r.alpha, "found": r.found, "m": r.m, "T": r.T,
                                  "average": r.average, "verdict": r.verdict} for r in scan]
    for r in scan:
        rows.append(_row("alpha_rejection", r.m if r.found else 0, (r.m + r.T) if r.found else 0,
                         r.average if r.found else math.nan, r.alpha, not r.found))
    if claim is not None:
        alpha = float(claim["alpha"])
        ed = verify_ed(sc.sys, sc.cert.P, float(claim.get("K", sc.cert.K)), alpha, tol, sc.cert.base_index)
        segment_free = not scan[0].found
        checks["claim"] = {"alpha": alpha, "ed_violation": ed.max_violation, "worst_pair": list(ed.worst_pair),
                           "passed": ed.passed and segment_free}
        rows.append(_row("claim_ed", *ed.worst_pair, ed.max_violation, tol, ed.passed))

    passed = all(c["passed"] for c in checks.values() if isinstance(c, dict))
    return {"checks": checks}, ["check_name", "n", "m", "argument_hash", "measured", "bound", "passed"], \
        rows, passed


def _forcing(cfg: RunConfig, rng: np.random.Generator):
    spec = cfg.bounded.get("forcing", {"constant": 1.0})
    if spec == "random":
        W = cfg.window.size
        table = rng.uniform(-1.0, 1.0, (2 * W, cfg.scenario.sys.dim))
        lo = cfg.window.n_min - W // 2
        return lambda n: table[min(max(n - lo, 0), len(table) - 1)], 1.0
    seq = seq_from_spec(spec)
    return (lambda n: np.full(cfg.scenario.sys.dim, seq(n))), None


def cmd_bounded(cfg: RunConfig) -> tuple[dict, list[str], list[list], bool]:
    sc, w = cfg.scenario, cfg.window
    rng = np.random.default_rng(cfg.seed)
    kernel = GreenKernel(sc.sys, sc.cert)
    gdd = verify_gdd(sc.sys, sc.cert, cfg.tolerances["cert_tol"], kernel)
    if not gdd.passed:
        raise CertificateRejected(f"certificate violated by {gdd.max_violation:.3g}")
    mode = cfg.bounded.get("mode", "linear")
    q, q_tail = _forcing(cfg, rng)
    rows: list[list] = []
    checks: dict[str, dict] = {}
    lo, hi = w.idx(w.interior().n_min), w.idx(w.interior().n_max)
    if mode == "linear":
        sol = bounded_linear(sc.sys, sc.cert, q, kernel, q_tail_bound=q_tail, check_cert=False,
                             max_tail=cfg.bounded.get("max_tail"))
        oracle = oracle_bounded(sc.sys, sc.cert, q)
    elif mode == "nonlinear":
        amp = float(cfg.bounded.get("amplitude", 0.1))
        base = np.array([q(int(n)) for n in w.doubled().indices])
        shift = w.doubled().n_min

        def qn(ns, Z):
            return amp * np.sin(Z) + base[np.asarray(ns) - shift]

        qn.batched = True
        Q = amp + float(np.abs(base).max())
        sol = bounded_nonlinear(sc.sys, sc.cert, qn, Q, amp, cfg.tolerances["eps"], kernel, check_cert=False)
        wide = sc.sys.with_window(w.doubled())
        big = bounded_nonlinear(wide, sc.cert, qn, Q, amp, cfg.tolerances["eps"], check_cert=False)
        oracle = big.values[w.n_min - shift:w.n_min - shift + w.size]
        checks["picard"] = {"iterations": sol.picard_iters, "theta": sol.theta,
                            "max_ratio": max(sol.ratios, default=0.0), "passed": True}
    else:
        raise ConfigError(f"unknown bounded mode {mode!r}")
    gap = np.abs(sol.values - oracle).max(axis=1)
    res_ok = sol.residual <= cfg.tolerances["residual_tol"]
    checks["residual"] = {"value": sol.residual, "bound": cfg.tolerances["residual_tol"], "passed": res_ok}
    oracle_ok = bool(np.all(gap[lo:hi + 1] <= sol.tails[lo:hi + 1] + cfg.tolerances["residual_tol"]))
    checks["oracle"] = {"max_discrepancy": float(gap[lo:hi + 1].max()), "tail_budget": sol.tail_budget,
                        "passed": oracle_ok}
    bound_ok = sol.sup_norm <= sol.bound + float(sol.tails.max()) + cfg.tolerances["residual_tol"]
    checks["sup_bound"] = {"sup_norm": sol.sup_norm, "bound": sol.bound, "passed": bool(bound_ok)}
    centre = (w.n_min + w.n_max) // 2
    for n, v, t, g in zip(w.indices, sol.values, sol.tails, gap):
        rows.append([int(n)] + [repr(float(x)) for x in v] + [repr(float(t)), repr(float(g))])
    header = ["n"] + [f"z{i}" for i in range(sc.sys.dim)] + ["tail", "oracle_gap"]
    summary = {"checks": checks, "mode": mode, "sup_norm": sol.sup_norm, "tail_budget": sol.tail_budget,
               "centre_value": sol.at(centre)}
    return summary, header, rows, all(c["passed"] for c in checks.values())


def _samples(cfg: RunConfig, rng: np.random.Generator, count: int, interior: Window):
    d, scale = cfg.scenario.sys.dim, float(cfg.sampling["scale"])
    ns = rng.integers(interior.n_min, interior.n_max + 1, size=count)
    pts = rng.uniform(-scale, scale, size=(count, d))
    return [(int(n), p) for n, p in zip(ns, pts)]


def cmd_verify(cfg: RunConfig) -> tuple[dict, list[str], list[list], bool]:
    sc = cfg.scenario
    rng = np.random.default_rng(cfg.seed)
    engine = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g, cfg.tolerances["eps"])
    inner = engine.interior
    points = _samples(cfg, rng, int(cfg.sampling["points"]), inner)
    solutions = _samples(cfg, rng, int(cfg.sampling["solutions"]), inner)
    h_map = None
    fault = cfg.fault_injection
    if fault:
        n0, offset = int(fault.get("n", (inner.n_min + inner.n_max) // 2)), float(fault.get("offset", 0.1))
        solutions.append((n0, rng.uniform(-1.0, 1.0, sc.sys.dim)))

        def corrupted(n, xi):
            out = engine.H_map(n, xi)
            return out + offset if n == n0 else out

        h_map = corrupted

    report = verify_equivalence(engine, solutions, points, cfg.tolerances["round_trip_tol"], h_map=h_map,
                                span=int(cfg.sampling["span"]))
    off = int(cfg.sampling["flow_offset"])
    flow = []
    for _ in range(int(cfg.sampling["flow"])):
        m = int(rng.integers(inner.n_min + off, inner.n_max - off + 1))
        n = m + int(rng.integers(-off, off + 1))
        flow.append((n, m, rng.uniform(-1.0, 1.0, sc.sys.dim)))
    report.extend(verify_flow_identity(engine, flow, cfg.tolerances["round_trip_tol"]))
    report.extend(verify_flow_identity(engine, flow, cfg.tolerances["round_trip_tol"], "vartheta"))

    ell = int(cfg.sampling["ell"])
    gammas = np.array([gamma(engine, int(n), ell) for n in inner.indices
                       if n - ell >= cfg.window.n_min and n + ell <= cfg.window.n_max])
    summary = {
        "B": engine.B, "theta": engine.theta, "tail_budget": engine.tail_budget, "eps": engine.eps,
        "checks": report.worst(),
        "gamma": {"ell": ell, "min": float(gammas.min()), "max": float(gammas.max()),
                  "spread": float(gammas.max() - gammas.min())},
        "fault_injection": fault or None,
        "failures": len(report.failures()),
    }
    return summary, CSV_HEADER, [r.as_csv() for r in report.rows], report.passed


def _constant_value(seq, window: Window) -> float | None:
    vals = seq.values(window.indices)
    return float(vals[0]) if np.all(vals == vals[0]) else None


def cmd_modulus(cfg: RunConfig) -> tuple[dict, list[str], list[list], bool]:
    sc, w = cfg.scenario, cfg.window
    rng = np.random.default_rng(cfg.seed)
    engine = ConjugacyEngine(sc.sys, sc.cert, sc.f, sc.g, cfg.tolerances["eps"])
    deltas = [float(d) for d in cfg.sampling["deltas"]]
    directions = rng.normal(size=(int(cfg.sampling["directions"]), sc.sys.dim))
    n = int(cfg.sampling.get("n", (w.n_min + w.n_max) // 2))
    xi = rng.uniform(-1.0, 1.0, sc.sys.dim)
    consts = [_constant_value(s, w) for s in (sc.f.bound, sc.g.bound, engine.r)]
    params, note = None, None
    if sc.cert.kind == "alpha" and None not in consts:
        F, G, r = consts
        try:
            params = holder_params(sc.cert.K, F, G, sc.cert.alpha, sup_deviation(sc.sys), r)
        except NotApplicable as exc:
            note = f"NotApplicable: {exc}"
    else:
        note = "NotApplicable: Hölder constants need an alpha certificate with constant F, G, r"
    table = continuity_modulus(engine, n, xi, deltas, directions, params)
    checks: dict[str, dict] = {
        "monotone": {"passed": table.monotone(2 * engine.eps)},
    }
    summary = {"n": n, "xi": xi, "slope": table.slope, "note": note}
    if params is not None:
        checks["holder_bound"] = {"passed": table.within_bound}
        checks["slope"] = {"value": table.slope, "bound": params.exponent - 0.1,
                           "passed": bool(table.slope >= params.exponent - 0.1)}
        summary["holder"] = {"D1": params.D1, "D2": params.D2, "exponent": params.exponent,
                             "theta": params.theta, "B": params.B, "M": params.M}
    else:
        grid = np.linspace(engine.interior.n_min, engine.interior.n_max, 5).astype(int)
        summary["uniform_probe"] = uniform_continuity_probe(engine, grid, xi, deltas, directions)
    summary["checks"] = checks
    return summary, ["delta", "modulus", "bound"], [[repr(d), repr(m), repr(b)] for d, m, b in table.rows()], \
        all(c["passed"] for c in checks.values())


COMMANDS = {"certify": cmd_certify, "bounded": cmd_bounded, "verify": cmd_verify, "modulus": cmd_modulus}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdconj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=".", help="directory for summary.json and detail.csv")
        p.add_argument("--seed", type=int, default=None, help="overrides sampling.seed")
        p.add_argument("--window", default=None, help='window as "a,b" (overrides config)')
    return parser


def run(command: str, raw: dict, out: Path, seed: int | None = None, window: str | None = None) -> int:
    cfg = None
    try:
        cfg = load_config(raw, seed, window)
        summary, header, rows, passed = COMMANDS[command](cfg)
        code = EXIT_PASS if passed else EXIT_FAIL
    except (ConfigError, KeyError, ValueError, TypeError) as exc:
        # InvalidParams and UnknownFamily land here through ValueError / KeyError
        return _fail(out, command, cfg, exc, EXIT_CONFIG)
    except (NotContractive, CertificateRejected, TailBudgetExceeded, CheckFailed) as exc:
        return _fail(out, command, cfg, exc, EXIT_FAIL)
    except (NumericalFailure, SingularCoefficient, np.linalg.LinAlgError) as exc:
        return _fail(out, command, cfg, exc, EXIT_NUMERIC)
    except GDConjError as exc:
        return _fail(out, command, cfg, exc, EXIT_CONFIG)
    summary = {**_header(cfg, command), **summary, "passed": passed, "exit_code": code}
    write_reports(out, summary, header, rows)
    return code


def _fail(out: Path, command: str, cfg: RunConfig | None, exc: Exception, code: int) -> int:
    head = _header(cfg, command) if cfg is not None else {"command": command}
    summary = {**head, "passed": False, "exit_code": code,
               "error": {"type": type(exc).__name__, "message": str(exc)}}
    try:
        write_reports(out, summary, ["error"], [[type(exc).__name__]])
    except OSError:
        pass
    print(f"gdconj {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"gdconj: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, raw, Path(args.out), args.seed, args.window)


if __name__ == "__main__":
    sys.exit(main())
