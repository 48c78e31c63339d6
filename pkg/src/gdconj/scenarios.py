"""Built-in systems with matching certificates and perturbations, plus brute-force oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import bisect

from .dichotomy import DichotomyCertificate, GreenKernel
from .errors import InvalidParams, NotContractive, UnknownFamily
from .linsys import LinearSystem, Perturbation, Window, diagonal_system, zero_perturbation
from .sequences import Seq, as_seq, constant, harmonic, seq_from_spec


@dataclass
class Scenario:
    name: str
    sys: LinearSystem
    cert: DichotomyCertificate
    f: Perturbation
    g: Perturbation
    expected: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def window(self) -> Window:
        return self.sys.window

    def with_perturbations(self, f: Perturbation, g: Perturbation) -> "Scenario":
        return Scenario(self.name, self.sys, self.cert, f, g, dict(self.expected), dict(self.params))


def saturating(c_seq, dim: int, name: str = "saturating") -> Perturbation:
    """``f(n, x) = c_n tanh(x)`` componentwise: bound and Lipschitz constant are both ``c_n``."""
    c = as_seq(c_seq)

    def func(n, x):
        return c(n) * np.tanh(x)

    def batch(ns, X):
        return c.values(ns)[:, None] * np.tanh(X)

    if dim < 1:
        raise InvalidParams("dimension must be >= 1")
    return Perturbation(func, c, c, name, batch)


def perturbation_from_spec(spec, dim: int, rates: Seq, default_scale: float, name: str) -> Perturbation:
    """``None`` (default), ``{"family": "zero"}`` or ``{"family": "saturating", "params": {...}}``.

    Saturating params: ``{"c": <sequence spec>}`` for an explicit amplitude, or
    ``{"relative": s}`` for ``c_n = s * a_n`` (amplitude proportional to the rates).
    """
    if spec is None:
        return saturating(default_scale * rates, dim, name)
    if not isinstance(spec, Mapping) or "family" not in spec:
        raise InvalidParams(f"bad perturbation spec: {spec!r}")
    family = spec["family"]
    params = dict(spec.get("params", {}))
    if family == "zero":
        return zero_perturbation(dim)
    if family != "saturating":
        raise UnknownFamily(family)
    if "c" in params:
        c = seq_from_spec(params["c"])
    elif "relative" in params:
        c = float(params["relative"]) * rates
    else:
        raise InvalidParams("saturating needs 'c' or 'relative'")
    if np.any(c.values(np.arange(-5, 6)) < 0):
        raise InvalidParams("saturating amplitude must be nonnegative")
    return saturating(c, dim, name)


def _window(params: Mapping, default) -> Window:
    lo, hi = params.get("window", default)
    return Window(int(lo), int(hi))


def paper_diag(params: Mapping) -> Scenario:
    """``A_n = diag(b_n, 1/b_n)`` with ``b_n = exp(-c/(1+|n|))``; rates ``a_j = c/(1+|j|)``.

    The rates are not bounded below by any positive constant, so the system has a
    generalized dichotomy but no exponential one.  Default perturbations are
    saturating with amplitudes ``0.05 a_n`` (f) and ``0.10 a_n`` (g).
    """
    c = float(params.get("c", 1.0))
    if c <= 0:
        raise InvalidParams("paper_diag needs c > 0")
    w = _window(params, (-30, 30))
    rates = harmonic(c)

    def b(n):
        return float(np.exp(-c / (1.0 + abs(n))))

    sys = diagonal_system([b, lambda n: 1.0 / b(n)], w, label=f"paper_diag({c:g})")
    cert = DichotomyCertificate(np.diag([1.0, 0.0]), 1.0, rates, "generalized", None, 0, "distance",
                                {"mode": "harmonic", "params": {"c": c}})
    f = perturbation_from_spec(params.get("f"), 2, rates, 0.05, "f")
    g = perturbation_from_spec(params.get("g"), 2, rates, 0.10, "g")
    return Scenario("paper_diag", sys, cert, f, g, {"K": 1.0, "gdd_violation": 0.0}, dict(params))


def const_alpha(params: Mapping) -> Scenario:
    """``A_n = diag(e^{-alpha}, ..., e^{alpha}, ...)`` with ``unstable_dim`` expanding directions."""
    alpha = float(params.get("alpha", np.log(2.0)))
    if alpha <= 0:
        raise InvalidParams("const_alpha needs alpha > 0")
    dim = int(params.get("dim", 2))
    unstable = int(params.get("unstable_dim", 1))
    if dim < 1 or not 0 <= unstable <= dim:
        raise InvalidParams("need dim >= 1 and 0 <= unstable_dim <= dim")
    w = _window(params, (-30, 30))
    stable = dim - unstable
    diag = [np.exp(-alpha)] * stable + [np.exp(alpha)] * unstable
    sys = LinearSystem(lambda n: np.diag(diag), w, dim, label=f"const_alpha({alpha:g})")
    P = np.diag([1.0] * stable + [0.0] * unstable)
    cert = DichotomyCertificate.alpha_ed(P, 1.0, alpha)
    # "relative" amplitudes are taken relative to 1 here
    f = perturbation_from_spec(params.get("f"), dim, constant(1.0), 0.05, "f")
    g = perturbation_from_spec(params.get("g"), dim, constant(1.0), 0.10, "g")
    q = np.exp(-alpha)
    expected = {"K": 1.0, "gdd_violation": 0.0,
                "green_factor": (1.0 + q) / (1.0 - q),
                "M": float(max(abs(d - 1.0) for d in diag))}
    return Scenario("const_alpha", sys, cert, f, g, expected, dict(params))


SCENARIO_FAMILIES: dict[str, Callable[[Mapping], Scenario]] = {
    "paper_diag": paper_diag,
    "const_alpha": const_alpha,
}


def make_scenario(name: str, params: Mapping | None = None) -> Scenario:
    if name not in SCENARIO_FAMILIES:
        raise UnknownFamily(name)
    return SCENARIO_FAMILIES[name](dict(params or {}))


# -- oracles -----------------------------------------------------------------------

def oracle_bounded(sys: LinearSystem, cert: DichotomyCertificate, q: Callable[[int], np.ndarray],
                   window: Window | None = None) -> np.ndarray:
    """Green series evaluated on a window twice as wide, restricted back to ``window``.

    ``q`` must be defined on all integers.  The result is aligned with ``window``.
    """
    window = window or sys.window
    wide = window.doubled()
    big = sys.with_window(wide)
    kernel = GreenKernel(big, cert)
    qv = np.array([np.broadcast_to(np.asarray(q(int(n)), dtype=float), (sys.dim,)) for n in wide.indices])
    vals = kernel.series(qv)
    lo = window.n_min - wide.n_min
    return vals[lo:lo + window.size]


def oracle_scalar_fixed_point(phi: Callable[[float], float], lipschitz: float, x0: float = 0.0,
                              tol: float = 1e-14, max_iter: int = 10_000, damping: float = 0.5,
                              bracket: float = 1e3) -> float:
    """Solve ``z = phi(z)`` for a scalar contraction.

    Damped iteration ``z <- (1 - lam) z + lam phi(z)`` is run to ``tol`` and the
    root of ``z - phi(z)`` is located a second time by bisection; the two must
    agree to within ``100 tol`` (scaled by ``|z|``).
    """
    if lipschitz >= 1.0:
        raise NotContractive(f"Lipschitz constant {lipschitz:.4g} >= 1")
    z = float(x0)
    for _ in range(max_iter):
        z_new = (1.0 - damping) * z + damping * phi(z)
        if abs(z_new - z) <= tol * max(1.0, abs(z_new)):
            z = z_new
            break
        z = z_new
    else:
        raise NotContractive("damped iteration did not settle")
    resid = lambda t: t - phi(t)
    lo, hi = z - 1.0, z + 1.0
    while resid(lo) > 0 and lo > -bracket:
        lo -= 1.0
    while resid(hi) < 0 and hi < bracket:
        hi += 1.0
    z_bis = bisect(resid, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(z_bis - z) > 100 * tol * max(1.0, abs(z)):
        raise NotContractive(f"fixed point disagreement: iteration {z!r} vs bisection {z_bis!r}")
    return z
