"""Equivalence maps ``H = id + chi`` and ``L = id + vartheta`` between two perturbed systems.

System (1) is ``x_{n+1} = A_n x_n + f(n, x_n)`` and system (2) is
``y_{n+1} = A_n y_n + g(n, y_n)``.  ``chi(.; (m, xi))`` is the bounded solution of
``w_{n+1} = A_n w_n - f(n, x_n) + g(n, w_n + x_n)`` along the solution ``x`` of (1)
through ``xi`` at ``m``; ``vartheta`` swaps the roles of f and g.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bounded import BoundedSolution, bounded_nonlinear, contraction_tails
from .dichotomy import DichotomyCertificate, GreenKernel, check_h2_h3, stepanov_norm
from .errors import InvalidParams, NotApplicable, NotContractive, WindowTooNarrow
from .linsys import LinearSystem, Perturbation, mnorm, propagate, sup_deviation, trajectory, vnorm
from .sequences import as_seq


def argument_hash(*parts) -> str:
    """Short stable digest of the numeric arguments of a check."""
    flat = np.concatenate([np.ravel(np.asarray(p, dtype=np.float64)) for p in parts])
    return hashlib.sha1(flat.tobytes()).hexdigest()[:12]


class ConjugacyEngine:
    """Binds a certified linear part to the pair (f, g) and evaluates chi, vartheta, H and L.

    ``B`` and ``theta`` are the certified bounds from :func:`check_h2_h3` computed
    with the Green majorant (``Q = F + G`` and ``r = max(r_f, r_g)``); construction
    fails with :class:`NotContractive` when ``theta >= 1``.
    """

    def __init__(self, sys: LinearSystem, cert: DichotomyCertificate, f: Perturbation, g: Perturbation,
                 eps: float = 1e-9, kernel: GreenKernel | None = None, max_iter: int = 1000,
                 interior_fraction: float = 0.8):
        if eps <= 0:
            raise InvalidParams("eps must be positive")
        self.sys = sys
        self.cert = cert
        self.f = f
        self.g = g
        self.eps = float(eps)
        self.max_iter = max_iter
        self.kernel = kernel or GreenKernel(sys, cert)
        w = sys.window
        self.Q = as_seq(f.bound) + as_seq(g.bound)
        self.r = as_seq(f.lip).maximum(g.lip)
        self.hypotheses = check_h2_h3(cert, f.bound, g.bound, self.r, w)
        self.B = self.hypotheses.B_green
        self.theta = self.hypotheses.theta_green
        if self.theta >= 1.0:
            raise NotContractive(f"contraction constant {self.theta:.4g} >= 1")
        self.tails = contraction_tails(cert, w, self.Q.values(w.indices), self.r.values(w.indices))
        self.tails.setflags(write=False)
        self.interior = w.interior(interior_fraction)
        lo, hi = w.idx(self.interior.n_min), w.idx(self.interior.n_max)
        self.tail_budget = float(self.tails[lo:hi + 1].max())

    def swapped(self) -> "ConjugacyEngine":
        return ConjugacyEngine(self.sys, self.cert, self.g, self.f, self.eps, self.kernel, self.max_iter)

    def _solve(self, first: Perturbation, second: Perturbation, m: int, point) -> BoundedSolution:
        base = trajectory(self.sys, first, m, point)

        def q(ns, W):
            return second.batch(ns, W + base) - first.batch(ns, base)

        q.batched = True
        return bounded_nonlinear(self.sys, self.cert, q, self.Q, self.r, self.eps, self.kernel,
                                 max_iter=self.max_iter, check_cert=False,
                                 theta=self.theta, tails=self.tails)

    def chi_solution(self, m: int, xi) -> BoundedSolution:
        return self._solve(self.f, self.g, m, xi)

    def vartheta_solution(self, m: int, nu) -> BoundedSolution:
        return self._solve(self.g, self.f, m, nu)

    def chi(self, n: int, m: int, xi) -> np.ndarray:
        return self.chi_solution(m, xi).at(n)

    def vartheta(self, n: int, m: int, nu) -> np.ndarray:
        return self.vartheta_solution(m, nu).at(n)

    def H_map(self, n: int, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return xi + self.chi(n, n, xi)

    def L_map(self, n: int, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        return nu + self.vartheta(n, n, nu)

    @property
    def round_trip_budget(self) -> float:
        return 2.0 * self.eps / (1.0 - self.theta) + self.tail_budget


# -- verification ------------------------------------------------------------------

@dataclass(frozen=True)
class CheckRow:
    check_name: str
    n: int
    m: int
    argument_hash: str
    measured: float
    bound: float
    passed: bool

    def as_csv(self) -> list:
        return [self.check_name, self.n, self.m, self.argument_hash, repr(self.measured),
                repr(self.bound), int(self.passed)]


CSV_HEADER = ["check_name", "n", "m", "argument_hash", "measured", "bound", "passed"]


@dataclass
class VerificationReport:
    rows: list[CheckRow] = field(default_factory=list)

    def add(self, name: str, n: int, m: int, args, measured: float, bound: float) -> CheckRow:
        row = CheckRow(name, int(n), int(m), argument_hash(n, m, *args), float(measured), float(bound),
                       bool(measured <= bound))
        self.rows.append(row)
        return row

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.rows.extend(other.rows)
        return self

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def worst(self) -> dict[str, dict]:
        """Per check: largest measured value, its bound and the pass flag."""
        out: dict[str, dict] = {}
        for r in self.rows:
            cur = out.setdefault(r.check_name, {"measured": -np.inf, "bound": r.bound, "passed": True,
                                                "count": 0})
            cur["count"] += 1
            cur["passed"] = cur["passed"] and r.passed
            if r.measured > cur["measured"]:
                cur["measured"], cur["bound"] = r.measured, r.bound
        return out

    def failures(self) -> list[CheckRow]:
        return [r for r in self.rows if not r.passed]


MapFn = Callable[[int, np.ndarray], np.ndarray]


def _mapped_residual(sys, pert: Perturbation, ys: np.ndarray, ns: np.ndarray) -> np.ndarray:
    A = np.array([sys.A(int(n)) for n in ns[:-1]])
    pred = np.einsum("kij,kj->ki", A, ys[:-1]) + pert.batch(ns[:-1], ys[:-1])
    return np.abs(ys[1:] - pred).max(axis=1)


def verify_equivalence(engine: ConjugacyEngine, sample_solutions: Iterable, sample_points: Iterable,
                       tol: float = 1e-6, h_map: MapFn | None = None, l_map: MapFn | None = None,
                       span: int = 6) -> VerificationReport:
    """Check the defining properties of the pair (H, L) at sampled arguments.

    ``sample_points`` are ``(n, xi)`` pairs used for the round trips and the
    bounds ``|H - id|, |L - id| <= B + tail``.  ``sample_solutions`` are ``(m, xi)``
    pairs: the solution of (1) through them is pushed through H and must solve
    (2) on ``span`` consecutive indices around m (and symmetrically for L).  For
    H the series identity ``H[n, x(n,m,xi)] = x(n,m,xi) + chi(n; (m,xi))`` is
    checked on the same indices.  ``h_map``/``l_map`` replace the engine maps,
    which is how defects are injected.
    """
    H = h_map or engine.H_map
    L = l_map or engine.L_map
    sys, w = engine.sys, engine.sys.window
    rep = VerificationReport()
    # round trips and mapped residuals are exact on the window up to solver noise,
    # so they are held to ``tol`` alone; the tail only enters the size bound
    bound_tol = engine.B + engine.tail_budget
    rt_tol = tol

    for n, xi in sample_points:
        xi = np.asarray(xi, dtype=float)
        hx = H(n, xi)
        lx = L(n, xi)
        rep.add("round_trip_LH", n, n, xi, vnorm(L(n, hx) - xi), rt_tol)
        rep.add("round_trip_HL", n, n, xi, vnorm(H(n, lx) - xi), rt_tol)
        rep.add("bound_H", n, n, xi, vnorm(hx - xi), bound_tol)
        rep.add("bound_L", n, n, xi, vnorm(lx - xi), bound_tol)

    inner = engine.interior
    for m, xi in sample_solutions:
        xi = np.asarray(xi, dtype=float)
        lo = max(inner.n_min, m - span // 2)
        hi = min(inner.n_max, lo + span)
        ns = np.arange(lo, hi + 1)
        for name, first, second, mapper in (("solution_map_H", engine.f, engine.g, H),
                                            ("solution_map_L", engine.g, engine.f, L)):
            xs = trajectory(sys, first, m, xi)[ns - w.n_min]
            ys = np.array([mapper(int(n), x) for n, x in zip(ns, xs)])
            res = _mapped_residual(sys, second, ys, ns)
            for n, val in zip(ns[:-1], res):
                rep.add(name, n, m, xi, val, tol)
            if name == "solution_map_H":
                chi = engine.chi_solution(m, xi).values[ns - w.n_min]
                for n, x, y, c in zip(ns, xs, ys, chi):
                    rep.add("series_identity_H", n, m, xi, vnorm(y - x - c), tol)
    return rep


def verify_flow_identity(engine: ConjugacyEngine, samples: Iterable, tol: float = 1e-7,
                         which: str = "chi") -> VerificationReport:
    """``chi(n; (m, xi)) = chi(n; (n, x(n, m, xi)))`` (or the vartheta analogue) at sampled triples."""
    if which not in ("chi", "vartheta"):
        raise InvalidParams("which must be 'chi' or 'vartheta'")
    pert = engine.f if which == "chi" else engine.g
    solve = engine.chi_solution if which == "chi" else engine.vartheta_solution
    rep = VerificationReport()
    for n, m, xi in samples:
        xi = np.asarray(xi, dtype=float)
        lhs = solve(m, xi).at(n)
        x_n = propagate(engine.sys, pert, m, xi, n)
        rhs = solve(n, x_n).at(n)
        rep.add(f"flow_identity_{which}", n, m, xi, vnorm(lhs - rhs), tol)
    return rep


# -- growth estimates ----------------------------------------------------------------

def gronwall_bound(sys: LinearSystem, f: Perturbation, k: int, n: int, delta: float) -> float:
    """``delta * exp(sum (||A_p - I|| + r_p))`` over ``p = k..n-1`` (n > k) or ``p = n..k-1`` (n < k).

    The backward variant mirrors the forward one term for term.  It is not a valid
    bound for every system: backward steps expand by ``||A_p^{-1}||``, which the
    exponent does not see.
    """
    if n == k:
        return float(delta)
    lo, hi = (k, n) if n > k else (n, k)
    ps = np.arange(lo, hi)
    dev = np.array([mnorm(sys.A(int(p)) - np.eye(sys.dim)) for p in ps])
    return float(delta * np.exp(np.sum(dev + as_seq(f.lip).values(ps))))


def gamma(engine: ConjugacyEngine, n: int, ell: int) -> float:
    """The finite weighted sum ``Gamma(n, ell)`` controlling the continuity modulus of H.

    Every partial sum is taken over its own index range, so translation-invariant
    data give bitwise-identical values at every n.
    """
    if ell < 1:
        raise InvalidParams("ell must be >= 1")
    w = engine.sys.window
    if n - ell < w.n_min or n + ell > w.n_max:
        raise WindowTooNarrow(f"Gamma({n}, {ell}) needs indices [{n - ell}, {n + ell}] "
                              f"inside [{w.n_min}, {w.n_max}]")
    K = engine.cert.K
    a, r, sys = engine.cert.a, engine.r, engine.sys
    eye = np.eye(sys.dim)

    def growth(lo, hi):
        ps = range(lo, hi + 1)
        return float(np.sum([mnorm(sys.A(p) - eye) + r(p) for p in ps]))

    total = 0.0
    for k in range(n - ell, n):
        decay = np.sum(a.values(np.arange(k + 1, n + 1)))
        total += K * np.exp(-decay) * r(k) * np.exp(growth(k, n - 1))
    for k in range(n, n + ell):
        decay = np.sum(a.values(np.arange(n, k + 2)))
        total += K * np.exp(-decay) * r(k) * np.exp(growth(n, k - 1))
    return float(total)


def gamma_bound(engine: ConjugacyEngine, ell: int) -> float:
    """``exp(2 (M + M0) ell) theta`` with ``M0`` the Stepanov norm of r at span ``ell``."""
    M = sup_deviation(engine.sys)
    M0 = stepanov_norm(engine.r, ell, engine.sys.window)
    return float(np.exp(2.0 * (M + M0) * ell) * engine.hypotheses.theta)


def gamma_spread(engine: ConjugacyEngine, ns: Sequence[int], ell: int) -> tuple[float, np.ndarray]:
    vals = np.array([gamma(engine, int(n), ell) for n in ns])
    return float(vals.max() - vals.min()), vals


# -- Hölder regime --------------------------------------------------------------------

@dataclass(frozen=True)
class HolderParams:
    alpha: float
    K: float
    F: float
    G: float
    r: float
    M: float
    theta: float
    B: float
    D1: float
    D2: float
    exponent: float
    holder_applicable: bool

    def bound(self, delta) -> np.ndarray:
        return (self.D1 + self.D2) * np.asarray(delta, dtype=float) ** self.exponent


def holder_params(K: float, F: float, G: float, alpha: float, M: float, r: float,
                  strict: bool = True) -> HolderParams:
    """Constants of the Hölder estimate for an alpha-dichotomy with constant data.

    With ``strict`` a :class:`NotApplicable` error is raised when ``M + r >= alpha``;
    otherwise the parameters are returned with ``holder_applicable`` False.
    """
    if alpha <= 0:
        raise InvalidParams("alpha must be positive")
    q = np.exp(-alpha)
    factor = (1.0 + q) / (1.0 - q)
    theta = K * r * factor
    if theta < 1.0:
        D1 = 1.0 + 2.0 * K * (F + G) / ((1.0 - q) * (1.0 - theta))
        D2 = 2.0 * theta / (1.0 - theta)
    else:
        D1 = D2 = np.inf
    exponent = 1.0 - (M + r) / alpha
    applicable = bool(M + r < alpha and theta < 1.0)
    if strict and M + r >= alpha:
        raise NotApplicable(f"M + r = {M + r:.4g} >= alpha = {alpha:.4g}")
    return HolderParams(float(alpha), float(K), float(F), float(G), float(r), float(M), float(theta),
                        float(K * (F + G) * factor), float(D1), float(D2), float(exponent), applicable)


@dataclass
class ModulusTable:
    n: int
    xi: np.ndarray
    deltas: np.ndarray
    per_direction: np.ndarray          # shape (len(deltas), len(directions))
    modulus: np.ndarray                # max over directions
    slope: float
    bound: np.ndarray | None = None

    @property
    def within_bound(self) -> bool:
        return self.bound is not None and bool(np.all(self.modulus <= self.bound))

    def monotone(self, noise: float = 0.0) -> bool:
        order = np.argsort(self.deltas)[::-1]
        mod = self.modulus[order]
        return bool(np.all(np.diff(mod) <= noise))

    def rows(self) -> list[tuple[float, float, float]]:
        bound = self.bound if self.bound is not None else np.full_like(self.modulus, np.nan)
        return [(float(d), float(m), float(b)) for d, m, b in zip(self.deltas, self.modulus, bound)]


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    size = vnorm(v)
    if size == 0:
        raise InvalidParams("direction must be nonzero")
    return v / size


def continuity_modulus(engine: ConjugacyEngine, n: int, xi, deltas: Sequence[float], directions,
                       params: HolderParams | None = None, map_name: str = "H") -> ModulusTable:
    """Measured ``|H(n, xi + delta u) - H(n, xi)|`` over a ladder of deltas and unit directions."""
    deltas = np.asarray(deltas, dtype=float)
    if np.any((deltas <= 0) | (deltas >= 1)):
        raise InvalidParams("deltas must lie in (0, 1)")
    mapper = engine.H_map if map_name == "H" else engine.L_map
    xi = np.asarray(xi, dtype=float)
    units = [_unit(u) for u in directions]
    base = mapper(n, xi)
    per = np.array([[vnorm(mapper(n, xi + d * u) - base) for u in units] for d in deltas])
    modulus = per.max(axis=1)
    good = modulus > 0
    slope = float(np.polyfit(np.log(deltas[good]), np.log(modulus[good]), 1)[0]) if good.sum() >= 2 else np.nan
    bound = params.bound(deltas) if params is not None and params.holder_applicable else None
    return ModulusTable(int(n), xi, deltas, per, modulus, slope, bound)


def uniform_continuity_probe(engine: ConjugacyEngine, ns: Sequence[int], xi, deltas: Sequence[float],
                             directions) -> np.ndarray:
    """Sup over a grid of n of the measured moduli (sampled uniformity only)."""
    tables = [continuity_modulus(engine, int(n), xi, deltas, directions) for n in ns]
    return np.max([t.modulus for t in tables], axis=0)


def delta_for_epsilon(table: ModulusTable, epsilon: float) -> float | None:
    """Largest delta on the ladder whose measured modulus is at most ``epsilon`` (a diagnostic)."""
    ok = table.deltas[table.modulus <= epsilon]
    return float(ok.max()) if ok.size else None
