from __future__ import annotations

import numpy as np
import pytest

from gdconj.dichotomy import verify_gdd
from gdconj.errors import InvalidParams, NotContractive, UnknownFamily
from gdconj.linsys import sample_metadata
from gdconj.scenarios import make_scenario, oracle_bounded, oracle_scalar_fixed_point


def test_unknown_and_invalid():
    with pytest.raises(UnknownFamily):
        make_scenario("nope")
    with pytest.raises(InvalidParams):
        make_scenario("paper_diag", {"c": 0.0})
    with pytest.raises(InvalidParams):
        make_scenario("const_alpha", {"alpha": -1.0})
    with pytest.raises(UnknownFamily):
        make_scenario("paper_diag", {"f": {"family": "cubic"}})
    with pytest.raises(InvalidParams):
        make_scenario("paper_diag", {"f": {"family": "saturating", "params": {}}})


def test_harmonic_diag_coefficients(diag):
    b = np.array([diag.sys.A(n)[0, 0] for n in diag.window.indices])
    np.testing.assert_array_equal(b, b[::-1])
    right = b[30:]
    assert np.all(np.diff(right) > 0) and np.all(right < 1.0)
    np.testing.assert_allclose(-np.log(b), diag.cert.a.values(diag.window.indices), rtol=1e-14)
    for n in (-4, 0, 9):
        np.testing.assert_allclose(diag.sys.A(n)[1, 1], 1.0 / diag.sys.A(n)[0, 0])


@pytest.mark.parametrize("name,params", [("paper_diag", {"c": 1.0}), ("paper_diag", {"c": 0.5}),
                                         ("const_alpha", {}), ("const_alpha", {"alpha": 2.0, "unstable_dim": 0}),
                                         ("const_alpha", {"alpha": 1.0, "dim": 3, "unstable_dim": 2})])
def test_builtin_certificates_pass(name, params):
    sc = make_scenario(name, params)
    assert verify_gdd(sc.sys, sc.cert).max_violation <= 1e-12


def test_perturbation_metadata_tight(diag, rng):
    for pert in (diag.f, diag.g):
        meta = sample_metadata(pert, [-10, 0, 7], 2, rng, count=300)
        assert meta["bound_ratio"] <= 1.0
        assert 0.95 <= meta["lipschitz_ratio"] <= 1.0


def test_zero_family(diag):
    sc = make_scenario("paper_diag", {"g": {"family": "zero"}})
    assert np.all(sc.g(3, np.ones(2)) == 0.0)


def test_oracle_bounded_zero_and_closed_form():
    sc = make_scenario("const_alpha", {"dim": 1, "unstable_dim": 0, "window": [-20, 20]})
    assert np.all(oracle_bounded(sc.sys, sc.cert, lambda n: 0.0) == 0.0)
    vals = oracle_bounded(sc.sys, sc.cert, lambda n: 1.0)
    assert abs(vals[20, 0] - 2.0) <= 1e-10


def test_scalar_fixed_point_oracle():
    assert oracle_scalar_fixed_point(lambda z: z / 2 + 1, 0.5) == pytest.approx(2.0, abs=1e-13)
    assert oracle_scalar_fixed_point(lambda z: z / 2, 0.5) == pytest.approx(0.0, abs=1e-13)
    z = oracle_scalar_fixed_point(lambda z: z / 2 + 0.1 * np.sin(z) + 1, 0.6)
    assert z / 2 - 0.1 * np.sin(z) == pytest.approx(1.0, abs=1e-13)
    with pytest.raises(NotContractive):
        oracle_scalar_fixed_point(lambda z: 2 * z, 2.0)
