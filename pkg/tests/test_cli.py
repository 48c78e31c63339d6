from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from gdconj.cli import main


def _run(tmp_path, command, config, *extra, name="run"):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, summary, out


PAPER = {"scenario": {"name": "paper_diag", "params": {"c": 1.0}}, "window": [-30, 30]}


def test_certify_harmonic_diag(tmp_path):
    code, summary, out = _run(tmp_path, "certify", PAPER)
    assert code == 0
    assert summary["checks"]["gdd"]["max_violation"] <= 1e-12
    assert summary["checks"]["h2_h3"]["theta"] > 0 and summary["checks"]["h2_h3"]["B"] > 0
    with open(out / "detail.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["check_name", "n", "m", "argument_hash", "measured", "bound", "passed"]


def test_certify_alpha_claim_rejected(tmp_path):
    code, summary, _ = _run(tmp_path, "certify", {**PAPER, "claim": {"kind": "alpha", "alpha": 0.5}})
    assert code == 1
    seg = summary["checks"]["alpha_rejection"][0]
    assert seg["found"] and seg["average"] < 0.5


def test_missing_window_is_config_error(tmp_path):
    code, summary, _ = _run(tmp_path, "certify", {"scenario": {"name": "paper_diag"}})
    assert code == 2 and summary["error"]["type"] == "ConfigError"


def test_short_window_and_unknown_scenario(tmp_path):
    assert _run(tmp_path, "certify", {**PAPER, "window": [0, 5]}, name="a")[0] == 2
    assert _run(tmp_path, "certify", {"scenario": {"name": "nope"}, "window": [-9, 9]}, name="b")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["certify", "--config", str(bad), "--out", str(tmp_path / "c")]) == 2


def test_window_flag_overrides(tmp_path):
    code, summary, _ = _run(tmp_path, "certify", {"scenario": {"name": "paper_diag"}}, "--window=-12,12")
    assert code == 0 and summary["window"] == [-12, 12]


def test_bounded_closed_form(tmp_path):
    cfg = {"scenario": {"name": "const_alpha", "params": {"alpha": float(np.log(2.0)), "dim": 1,
                                                          "unstable_dim": 0}},
           "window": [-200, 200], "bounded": {"forcing": {"constant": 1.0}}}
    code, summary, _ = _run(tmp_path, "bounded", cfg)
    assert code == 0
    assert abs(summary["centre_value"][0] - 2.0) <= 1e-10


def test_bounded_zero_and_random_and_nonlinear(tmp_path):
    code, summary, _ = _run(tmp_path, "bounded", {**PAPER, "bounded": {"forcing": 0.0}}, name="zero")
    assert code == 0 and summary["sup_norm"] == 0.0
    code, summary, _ = _run(tmp_path, "bounded", {**PAPER, "bounded": {"forcing": "random"}}, name="rand")
    assert code == 0
    assert summary["checks"]["oracle"]["passed"]
    cfg = {"scenario": {"name": "const_alpha"}, "window": [-30, 30],
           "bounded": {"mode": "nonlinear", "amplitude": 0.2, "forcing": 1.0}}
    code, summary, _ = _run(tmp_path, "bounded", cfg, name="non")
    assert code == 0 and summary["checks"]["picard"]["max_ratio"] <= 0.65


def test_bounded_not_contractive_exit_code(tmp_path):
    cfg = {"scenario": {"name": "const_alpha"}, "window": [-30, 30],
           "bounded": {"mode": "nonlinear", "amplitude": 0.9}}
    code, summary, _ = _run(tmp_path, "bounded", cfg)
    assert code == 1 and summary["error"]["type"] == "NotContractive"


def test_backward_failure_exit_code(tmp_path):
    # the stable-only system cannot be run backwards once ||A^{-1}|| r >= 1
    cfg = {"scenario": {"name": "const_alpha", "params": {"alpha": 3.0, "unstable_dim": 0,
                                                          "f": {"family": "saturating", "params": {"c": 0.06}},
                                                          "g": {"family": "saturating", "params": {"c": 0.06}}}},
           "window": [-12, 12], "sampling": {"points": 2, "solutions": 1, "flow": 1}}
    code, summary, _ = _run(tmp_path, "verify", cfg)
    assert code == 3 and summary["error"]["type"] == "BackwardNotContractive"


def test_verify_and_fault_injection(tmp_path):
    small = {"points": 5, "solutions": 2, "flow": 4}
    code, summary, _ = _run(tmp_path, "verify", {**PAPER, "sampling": small}, name="ok")
    assert code == 0 and summary["failures"] == 0
    code, summary, out = _run(tmp_path, "verify", {**PAPER, "sampling": small,
                                                   "fault_injection": {"n": 0, "offset": 0.1}}, name="bad")
    assert code == 1 and summary["checks"]["solution_map_H"]["measured"] >= 0.01


def test_verify_equal_perturbations(tmp_path):
    same = {"family": "saturating", "params": {"relative": 0.1}}
    cfg = {"scenario": {"name": "paper_diag", "params": {"f": same, "g": same}}, "window": [-30, 30],
           "sampling": {"points": 4, "solutions": 1, "flow": 2}}
    code, summary, _ = _run(tmp_path, "verify", cfg)
    assert code == 0
    for name in ("bound_H", "bound_L", "round_trip_LH", "solution_map_H"):
        assert summary["checks"][name]["measured"] <= 1e-12


def test_verify_is_deterministic(tmp_path):
    cfg = {**PAPER, "sampling": {"points": 4, "solutions": 1, "flow": 2}}
    _, _, a = _run(tmp_path, "verify", cfg, "--seed", "7", name="a")
    _, _, b = _run(tmp_path, "verify", cfg, "--seed", "7", name="b")
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    assert (a / "detail.csv").read_bytes() == (b / "detail.csv").read_bytes()
    _, s, _ = _run(tmp_path, "verify", cfg, "--seed", "8", name="c")
    assert s["seed"] == 8


def test_modulus_holder_and_not_applicable(tmp_path):
    cfg = {"scenario": {"name": "const_alpha", "params": {"alpha": 2.0, "unstable_dim": 0,
                                                          "f": {"family": "saturating", "params": {"c": 0.02}},
                                                          "g": {"family": "saturating", "params": {"c": 0.05}}}},
           "window": [-30, 30]}
    code, summary, out = _run(tmp_path, "modulus", cfg, name="holder")
    assert code == 0 and summary["holder"]["exponent"] > 0.5
    with open(out / "detail.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["delta", "modulus", "bound"] and len(rows) == 6
    code, summary, _ = _run(tmp_path, "modulus", {"scenario": {"name": "const_alpha", "params": {"alpha": 1.0}},
                                                  "window": [-30, 30]}, name="na")
    assert code == 0 and summary["note"].startswith("NotApplicable")
    assert len(summary["uniform_probe"]) == 5


def test_modulus_identity_slope(tmp_path):
    same = {"family": "saturating", "params": {"relative": 0.1}}
    cfg = {"scenario": {"name": "paper_diag", "params": {"f": same, "g": same}}, "window": [-20, 20]}
    code, summary, _ = _run(tmp_path, "modulus", cfg)
    assert code == 0 and summary["slope"] == pytest.approx(1.0)


def test_inline_system(tmp_path):
    cfg = {"inline": {"A": {"0": [[0.5, 0.0], [0.0, 2.0]]},
                      "certificate": {"P": [[1, 0], [0, 0]], "K": 1.0,
                                      "a": {"mode": "constant", "value": float(np.log(2.0))}}},
           "window": [-10, 10]}
    assert _run(tmp_path, "certify", cfg)[0] == 0
