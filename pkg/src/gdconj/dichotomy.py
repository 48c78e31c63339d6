"""Dichotomy certificates, the Green kernel, the weighted operator N and hypothesis checks.

Certificates are stored with an explicit exponent convention:

``"distance"`` (default)
    ``||W_n P W_m^{-1}|| <= K exp(-sum_{j=m}^{n-1} a_j)`` for n >= m and
    ``||W_n (I-P) W_m^{-1}|| <= K exp(-sum_{j=n}^{m-1} a_j)`` for n < m,
    i.e. exactly ``n - m`` rate terms, which reduces to ``K e^{-alpha|n-m|}``
    for constant rates.
``"extended"``
    one extra term on each branch (``sum_{j=m}^{n}`` and ``sum_{j=n}^{m}``).

:func:`n_operator` always uses the fixed weights of the operator ``N(n, g)``
(which match the ``"extended"`` convention).  :func:`green_majorant` uses the
weights implied by the certificate's own convention and therefore really bounds
``sum_k |G(n, k+1)| g_k``; the solvers rely on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidParams, NotAProjection, WindowTooNarrow
from .linsys import LinearSystem, Window, mnorm, vnorm
from .sequences import Seq, as_seq, constant, seq_from_spec

CONVENTIONS = ("distance", "extended")
PROJECTION_TOL = 1e-10


@dataclass(frozen=True)
class DichotomyCertificate:
    P: np.ndarray
    K: float
    a: Seq
    kind: str = "generalized"
    alpha: float | None = None
    base_index: int = 0
    convention: str = "distance"
    a_spec: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "a", as_seq(self.a))
        if self.K < 1.0:
            raise InvalidParams("dichotomy constant K must be >= 1")
        if self.kind not in ("generalized", "alpha"):
            raise InvalidParams(f"unknown certificate kind {self.kind!r}")
        if self.kind == "alpha" and not (self.alpha and self.alpha > 0):
            raise InvalidParams("alpha certificates need alpha > 0")
        if self.convention not in CONVENTIONS:
            raise InvalidParams(f"convention must be one of {CONVENTIONS}")

    @classmethod
    def alpha_ed(cls, P, K: float, alpha: float, base_index: int = 0,
                 convention: str = "distance") -> "DichotomyCertificate":
        return cls(P, K, constant(alpha), "alpha", float(alpha), base_index, convention,
                   {"mode": "constant", "value": float(alpha)})

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def projection_defect(self) -> float:
        return mnorm(self.P @ self.P - self.P)

    def a_values(self, window: Window) -> np.ndarray:
        vals = self.a.values(window.indices)
        if np.any(vals < 0):
            raise InvalidParams("dichotomy rates a_j must be nonnegative")
        return vals

    def to_json(self) -> dict:
        if self.a_spec is None:
            raise InvalidParams("rates without a serialisable spec; build them from a table or family")
        out = {
            "P": self.P.tolist(),
            "K": self.K,
            "a": self.a_spec,
            "kind": self.kind,
            "base_index": self.base_index,
            "convention": self.convention,
        }
        if self.kind == "alpha":
            out["alpha"] = self.alpha
        return out

    @classmethod
    def from_json(cls, obj) -> "DichotomyCertificate":
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            a_spec = dict(obj["a"])
            kind = obj.get("kind", "generalized")
            alpha = obj.get("alpha")
            if kind == "alpha" and alpha is None and a_spec.get("mode") == "constant":
                alpha = a_spec["value"]
            return cls(np.asarray(obj["P"], dtype=float), float(obj["K"]), rates_from_spec(a_spec),
                       kind, alpha, int(obj.get("base_index", 0)),
                       obj.get("convention", "distance"), a_spec)
        except KeyError as exc:
            raise InvalidParams(f"certificate missing field {exc}") from exc


def rates_from_spec(spec: dict) -> Seq:
    """``{"mode": "constant", "value": v}``, ``{"mode": "table", "values": {...}}`` or
    ``{"mode": <family name>, "params": {...}}``."""
    mode = spec.get("mode")
    if mode == "constant":
        return constant(spec["value"])
    if mode == "table":
        return seq_from_spec({"table": spec["values"]})
    return seq_from_spec({"family": mode, "params": spec.get("params", {})})


# -- exponent sums ----------------------------------------------------------------

def _prefix(a_vals: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(a_vals)])


def _range_sum(S: np.ndarray, lo, hi):
    """Sum of window entries lo..hi inclusive (zero when hi < lo); broadcasts."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return np.where(hi >= lo, S[np.clip(hi + 1, 0, len(S) - 1)] - S[np.clip(lo, 0, len(S) - 1)], 0.0)


def _exponent_table(a_vals: np.ndarray, convention: str) -> np.ndarray:
    """Rate sums for every ordered pair (n_i, m_j) of the certificate inequalities."""
    W = len(a_vals)
    S = _prefix(a_vals)
    i = np.arange(W)[:, None]
    j = np.arange(W)[None, :]
    extra = 1 if convention == "extended" else 0
    fwd = _range_sum(S, j, i - 1 + extra)
    bwd = _range_sum(S, i, j - 1 + extra)
    return np.where(i >= j, fwd, bwd)


# -- Green kernel -----------------------------------------------------------------

class GreenKernel:
    """All transition matrices and Green matrices of a certified system on its window.

    The projection is carried along the window by ``P_{k+1} = A_k P_k A_k^{-1}``
    starting from the certificate's base index, and ``G(n, m)`` is formed as
    ``T(n, m) P_m`` (resp. ``-T(n, m)(I - P_m)``), so no product ever reaches past
    the pair ``(n, m)`` itself.
    """

    def __init__(self, sys: LinearSystem, cert: DichotomyCertificate):
        if cert.dim != sys.dim:
            raise InvalidParams(f"certificate dimension {cert.dim} != system dimension {sys.dim}")
        defect = cert.projection_defect()
        if defect > PROJECTION_TOL:
            raise NotAProjection(f"||P^2 - P|| = {defect:.3g}")
        self.sys = sys
        self.cert = cert
        self.window = w = sys.window
        W, d = w.size, sys.dim
        A, Ainv = sys.A_table, sys.Ainv_table
        eye = np.eye(d)

        P = np.empty((W, d, d))
        b = w.idx(cert.base_index)
        P[b] = cert.P
        for i in range(b, W - 1):
            P[i + 1] = A[i] @ P[i] @ Ainv[i]
        for i in range(b, 0, -1):
            P[i - 1] = Ainv[i - 1] @ P[i] @ A[i - 1]

        T = np.empty((W, W, d, d))
        idx = np.arange(W)
        T[idx, idx] = eye
        for s in range(1, W):
            r = np.arange(s, W)
            # T(n, m) = T(n, m+1) A_m  and  T(m, n) = A_m^{-1} T(m+1, n)
            T[r, r - s] = np.einsum("bij,bjk->bik", T[r, r - s + 1], A[r - s])
            T[r - s, r] = np.einsum("bij,bjk->bik", Ainv[r - s], T[r - s + 1, r])

        lower = (idx[:, None] >= idx[None, :])[..., None, None]
        G = np.where(lower, np.einsum("ijab,jbc->ijac", T, P),
                     -np.einsum("ijab,jbc->ijac", T, eye - P))
        self.P_table = P
        self.T = T
        self.G = G
        for arr in (P, T, G):
            arr.setflags(write=False)

    def transition(self, n: int, m: int) -> np.ndarray:
        return self.T[self.window.idx(n), self.window.idx(m)]

    def green(self, n: int, m: int) -> np.ndarray:
        return self.G[self.window.idx(n), self.window.idx(m)]

    def projection(self, n: int) -> np.ndarray:
        return self.P_table[self.window.idx(n)]

    def series(self, q: np.ndarray) -> np.ndarray:
        """``sum_k G(n, k+1) q_k`` over ``k = n_min .. n_max-1`` for every n in the window."""
        return np.einsum("ijab,jb->ia", self.G[:, 1:], q[:-1])


def green(sys: LinearSystem, cert: DichotomyCertificate, n: int, m: int,
          kernel: GreenKernel | None = None) -> np.ndarray:
    kernel = kernel or GreenKernel(sys, cert)
    return kernel.green(n, m)


# -- certification -----------------------------------------------------------------

@dataclass(frozen=True)
class DivergenceTrend:
    forward_sums: np.ndarray
    backward_sums: np.ndarray
    forward_growth: str
    backward_growth: str
    forward_ratio: float
    backward_ratio: float

    @property
    def consistent(self) -> bool:
        return self.forward_growth != "bounded" and self.backward_growth != "bounded"


@dataclass(frozen=True)
class CertReport:
    max_violation: float
    worst_pair: tuple[int, int]
    divergence_trend: DivergenceTrend
    passed: bool
    tolerance: float
    convention: str


def verify_gdd(sys: LinearSystem, cert: DichotomyCertificate, tol: float = 1e-9,
               kernel: GreenKernel | None = None, convention: str | None = None) -> CertReport:
    """Check the dichotomy inequalities for every ordered pair in the window.

    The violation of a pair is ``max(0, lhs/rhs - 1)``; it is evaluated in log
    space so that rates summing to hundreds do not underflow.
    """
    kernel = kernel or GreenKernel(sys, cert)
    convention = convention or cert.convention
    if convention not in CONVENTIONS:
        raise InvalidParams(f"convention must be one of {CONVENTIONS}")
    w = sys.window
    lhs = mnorm(kernel.G)
    expo = _exponent_table(cert.a_values(w), convention)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(lhs) + expo - np.log(cert.K)
    viol = np.expm1(np.maximum(log_ratio, 0.0))
    flat = int(np.argmax(viol))
    i, j = np.unravel_index(flat, viol.shape)
    worst = float(viol[i, j])
    trend = check_divergence(cert, w)
    return CertReport(worst, (int(w.indices[i]), int(w.indices[j])), trend, worst <= tol, tol, convention)


def verify_ed(sys: LinearSystem, P, K: float, alpha: float, tol: float = 1e-9,
              base_index: int = 0) -> CertReport:
    """Direct check of ``||G(n, m)|| <= K e^{-alpha |n-m|}``."""
    cert = DichotomyCertificate.alpha_ed(P, K, alpha, base_index)
    kernel = GreenKernel(sys, cert)
    w = sys.window
    lhs = mnorm(kernel.G)
    dist = np.abs(w.indices[:, None] - w.indices[None, :])
    with np.errstate(divide="ignore"):
        log_ratio = np.log(lhs) + alpha * dist - np.log(K)
    viol = np.expm1(np.maximum(log_ratio, 0.0))
    i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst = float(viol[i, j])
    return CertReport(worst, (int(w.indices[i]), int(w.indices[j])), check_divergence(cert, w),
                      worst <= tol, tol, "distance")


def _growth_label(increments: np.ndarray) -> tuple[str, float]:
    half = len(increments) // 2
    inner, outer = increments[:half].sum(), increments[half:2 * half].sum()
    if inner <= 0.0:
        return ("bounded" if outer <= 0.0 else "linear"), (np.inf if outer > 0 else 0.0)
    ratio = float(outer / inner)
    if ratio >= 0.75:
        return "linear", ratio
    if ratio < 0.05:
        return "bounded", ratio
    t = np.arange(1, len(increments) + 1)
    sums = np.cumsum(increments)
    fit = np.polyfit(np.log(t), sums, 1, full=True)
    ss_res = float(fit[1][0]) if len(fit[1]) else 0.0
    ss_tot = float(np.sum((sums - sums.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ("logarithmic" if r2 > 0.99 else "sublinear"), ratio


def check_divergence(cert_or_rates, window: Window) -> DivergenceTrend:
    """Partial-sum trends of the rates toward both window ends.

    The verdict is only ever *consistent* or *inconsistent* with divergence of
    ``sum a_j``: increments over the outer half of each side are compared with
    the inner half.
    """
    rates = cert_or_rates.a if isinstance(cert_or_rates, DichotomyCertificate) else as_seq(cert_or_rates)
    vals = rates.values(window.indices)
    fwd = np.cumsum(vals)
    bwd = np.cumsum(vals[::-1])[::-1]
    mid = window.size // 2
    f_label, f_ratio = _growth_label(vals[mid:])
    b_label, b_ratio = _growth_label(vals[:mid + 1][::-1])
    return DivergenceTrend(fwd, bwd, f_label, b_label, f_ratio, b_ratio)


# -- the operator N ------------------------------------------------------------------

class Truncated(NamedTuple):
    value: float
    tail: float


def _outer(vals: np.ndarray, side: str) -> np.ndarray:
    k = max(1, int(np.ceil(0.1 * len(vals))))
    return vals[:k] if side == "lo" else vals[-k:]


def _geom(rate: float) -> float:
    return np.inf if rate <= 0.0 else 1.0 / -np.expm1(-rate)


def weight_table(a_vals: np.ndarray, K: float, scheme: str) -> np.ndarray:
    """Weights ``w[i, k]`` with n = n_i and summation index k = n_min .. n_max-1.

    ``scheme="extended"``: ``K exp(-sum_{j=k+1}^{n} a_j)`` for k < n and
    ``K exp(-sum_{j=n}^{k+1} a_j)`` for k >= n (the operator N).
    ``scheme="distance"``: the bound on ``||G(n, k+1)||`` from a distance-convention
    certificate, with sums ``k+1..n-1`` and ``n..k``.
    """
    W = len(a_vals)
    S = _prefix(a_vals)
    i = np.arange(W)[:, None]
    k = np.arange(W - 1)[None, :]
    extra = 1 if scheme == "extended" else 0
    left = _range_sum(S, k + 1, i - 1 + extra)
    right = _range_sum(S, i, k + extra)
    return K * np.exp(-np.where(k < i, left, right))


def tail_table(a_vals: np.ndarray, g_vals: np.ndarray, K: float, scheme: str,
               g_outside: float | None = None) -> np.ndarray:
    """Contribution of summation indices outside the window, for every n in the window.

    Outside the window the rates are taken no smaller than their minimum over the
    outer 10% of each side and the summand no larger than its maximum there
    (or than ``g_outside`` when that is given).
    """
    W = len(a_vals)
    S = _prefix(a_vals)
    i = np.arange(W)
    a_lo, a_hi = _outer(a_vals, "lo").min(), _outer(a_vals, "hi").min()
    if g_outside is None:
        g_lo, g_hi = _outer(g_vals, "lo").max(), _outer(g_vals, "hi").max()
    else:
        g_lo = g_hi = float(g_outside)
    extra = 1 if scheme == "extended" else 0
    left_decay = np.exp(-_range_sum(S, 0, i - 1 + extra))
    right_decay = np.exp(-_range_sum(S, i, W - 1))
    right_shift = np.exp(-a_hi) if scheme == "extended" else 1.0
    with np.errstate(invalid="ignore"):
        left = K * g_lo * left_decay * _geom(a_lo) if g_lo > 0 else np.zeros(W)
        right = K * g_hi * right_decay * right_shift * _geom(a_hi) if g_hi > 0 else np.zeros(W)
    return left + right


def _table(cert: DichotomyCertificate, g, window: Window, scheme: str):
    a_vals = cert.a_values(window)
    g_vals = as_seq(g).values(window.indices)
    if np.any(g_vals < 0):
        raise InvalidParams("N is only defined here for nonnegative sequences")
    values = weight_table(a_vals, cert.K, scheme) @ g_vals[:-1]
    return values, tail_table(a_vals, g_vals, cert.K, scheme)


def n_operator_table(cert: DichotomyCertificate, g, window: Window):
    """Window-truncated ``N(n, g)`` and its tail bound for every n in the window."""
    return _table(cert, g, window, "extended")


def n_operator(cert: DichotomyCertificate, g, n: int, window: Window) -> Truncated:
    values, tails = n_operator_table(cert, g, window)
    i = window.idx(n)
    return Truncated(float(values[i]), float(tails[i]))


def green_majorant_table(cert: DichotomyCertificate, g, window: Window):
    """Bound on ``sum_k ||G(n, k+1)|| g_k`` implied by the certificate (with tails)."""
    return _table(cert, g, window, cert.convention)


def green_majorant(cert: DichotomyCertificate, g, n: int, window: Window) -> Truncated:
    values, tails = green_majorant_table(cert, g, window)
    i = window.idx(n)
    return Truncated(float(values[i]), float(tails[i]))


@dataclass(frozen=True)
class H2H3Report:
    B: float
    theta: float
    B_window: float
    theta_window: float
    B_green: float
    theta_green: float
    passed: bool


def check_h2_h3(cert: DichotomyCertificate, F, G, r, window: Window) -> H2H3Report:
    """Bounds ``B = sup_n N(n, F+G)`` and ``theta = sup_n N(n, r)``.

    ``B`` and ``theta`` include the out-of-window tails; ``*_window`` are the
    truncated sums alone.  ``*_green`` are the same suprema with the certificate's
    Green majorant, which is what actually controls the bounded-solution series;
    the check passes only when that contraction constant is below one.
    """
    FG = as_seq(F) + as_seq(G)
    b_vals, b_tail = n_operator_table(cert, FG, window)
    t_vals, t_tail = n_operator_table(cert, r, window)
    gb_vals, gb_tail = green_majorant_table(cert, FG, window)
    gt_vals, gt_tail = green_majorant_table(cert, r, window)
    theta_green = float(np.max(gt_vals + gt_tail))
    return H2H3Report(
        B=float(np.max(b_vals + b_tail)),
        theta=float(np.max(t_vals + t_tail)),
        B_window=float(np.max(b_vals)),
        theta_window=float(np.max(t_vals)),
        B_green=float(np.max(gb_vals + gb_tail)),
        theta_green=theta_green,
        passed=theta_green < 1.0,
    )


def h4_h5_tail(cert: DichotomyCertificate, f, g, samples: Sequence, J: int, n: int,
               window: Window, which: str = "H4") -> Truncated:
    """Largest truncated tail sum of the uniformity hypotheses over the samples.

    Each sample is ``(u, u', x, x')``.  For ``"H4"`` the summand is
    ``g(k,u+x) - g(k,u'+x') + f(k,x') - f(k,x)``; for ``"H5"`` it is
    ``f(k,u+x) - f(k,u'+x') + g(k,x) - g(k,x')``.  The returned tail bounds the
    indices beyond the window using ``|summand| <= 2(F_k + G_k)``.
    """
    if J < 1:
        raise InvalidParams("J must be >= 1")
    if which not in ("H4", "H5"):
        raise InvalidParams("which must be 'H4' or 'H5'")
    a_vals = cert.a_values(window)
    S = _prefix(a_vals)
    i = window.idx(n)
    W = window.size
    ks_left = np.arange(0, i - J)               # k <= n-1-J
    ks_right = np.arange(i + J, W - 1)          # n+J <= k <= n_max-1
    w_left = cert.K * np.exp(-_range_sum(S, ks_left + 1, np.full_like(ks_left, i)))
    w_right = cert.K * np.exp(-_range_sum(S, np.full_like(ks_right, i), ks_right + 1))
    ns = window.indices
    best = 0.0
    for u, u2, x, x2 in samples:
        u, u2, x, x2 = (np.asarray(v, dtype=float) for v in (u, u2, x, x2))
        total = 0.0
        for ks, wts in ((ks_left, w_left), (ks_right, w_right)):
            for k, wt in zip(ks, wts):
                kk = int(ns[k])
                if which == "H4":
                    delta = g(kk, u + x) - g(kk, u2 + x2) + f(kk, x2) - f(kk, x)
                else:
                    delta = f(kk, u + x) - f(kk, u2 + x2) + g(kk, x) - g(kk, x2)
                total += wt * vnorm(delta)
        best = max(best, total)

    FG = 2.0 * (as_seq(f.bound) + as_seq(g.bound)).values(ns)
    a_lo, a_hi = _outer(a_vals, "lo").min(), _outer(a_vals, "hi").min()
    fg_lo, fg_hi = _outer(FG, "lo").max(), _outer(FG, "hi").max()
    kmax = min(i - 1 - J, -1)                    # window-relative index of the last outside k
    left = cert.K * fg_lo * np.exp(-_range_sum(S, 0, i)) * np.exp(-(-1 - kmax) * a_lo) * _geom(a_lo) \
        if fg_lo > 0 else 0.0
    kmin = max(i + J, W - 1)
    right = cert.K * fg_hi * np.exp(-_range_sum(S, i, W - 1)) * np.exp(-(kmin + 1 - (W - 1)) * a_hi) \
        * _geom(a_hi) if fg_hi > 0 else 0.0
    return Truncated(float(best), float(left + right))


def stepanov_norm(r, L: int, window: Window) -> float:
    """``sup_n (1/2L) sum_{k=n-L}^{n+L} r_k`` over the n whose full span fits in the window."""
    if L < 1:
        raise InvalidParams("L must be >= 1")
    vals = as_seq(r).values(window.indices)
    if window.size < 2 * L + 1:
        raise WindowTooNarrow(f"window of {window.size} points cannot hold a span of {2 * L + 1}")
    sums = np.array([vals[c - L:c + L + 1].sum() for c in range(L, window.size - L)])
    return float(sums.max() / (2 * L))


@dataclass(frozen=True)
class RejectionRow:
    alpha: float
    found: bool
    m: int | None
    T: int | None
    average: float | None
    verdict: str


def alpha_rejection_scan(cert_or_rates, alphas: Sequence[float], window: Window) -> list[RejectionRow]:
    """Look for segments ``[m, m+T]`` with ``sum_{k=m}^{m+T} a_k < alpha T``.

    Any such segment contradicts an exponential dichotomy with rate ``alpha``
    carried by these rates.  The shortest segment is reported (ties: the one
    with the smallest average).
    """
    rates = cert_or_rates.a if isinstance(cert_or_rates, DichotomyCertificate) else as_seq(cert_or_rates)
    vals = rates.values(window.indices)
    S = _prefix(vals)
    W = len(vals)
    rows = []
    for alpha in alphas:
        hit = None
        for T in range(1, W):
            seg = (S[T + 1:] - S[:W - T]) / T
            bad = np.flatnonzero(seg < alpha)
            if bad.size:
                j = bad[np.argmin(seg[bad])]
                hit = (int(window.indices[j]), T, float(seg[j]))
                break
        if hit:
            rows.append(RejectionRow(float(alpha), True, hit[0], hit[1], hit[2], "counterexample"))
        else:
            rows.append(RejectionRow(float(alpha), False, None, None, None,
                                     "no counterexample found in window (inconclusive)"))
    return rows
