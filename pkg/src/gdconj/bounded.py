"""Bounded solutions of forced systems via the truncated Green series.

The series is summed over ``k = n_min .. n_max-1`` for every n, so the returned
sequence satisfies the recurrence exactly (up to rounding) on the whole window:
truncation only changes *which* bounded solution is found, and that change is
what ``tail_budget`` bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dichotomy import (
    DichotomyCertificate,
    GreenKernel,
    tail_table,
    verify_gdd,
    weight_table,
)
from .errors import (
    CertificateRejected,
    IterationCapExceeded,
    NotContractive,
    TailBudgetExceeded,
)
from .linsys import LinearSystem, Perturbation, Window, vnorm
from .sequences import as_seq


@dataclass
class BoundedSolution:
    values: np.ndarray
    window: Window
    residual: float
    sup_norm: float
    picard_iters: int
    tail_budget: float
    tails: np.ndarray = field(repr=False)
    bound: float = 0.0
    theta: float = 0.0
    ratios: list = field(default_factory=list, repr=False)
    diffs: list = field(default_factory=list, repr=False)
    interior: Window | None = None

    def at(self, n: int) -> np.ndarray:
        return self.values[self.window.idx(n)]

    def tail_at(self, n: int) -> float:
        return float(self.tails[self.window.idx(n)])


def _check(sys, cert, kernel, check_cert, cert_tol):
    kernel = kernel or GreenKernel(sys, cert)
    if check_cert:
        report = verify_gdd(sys, cert, cert_tol, kernel)
        if not report.passed:
            raise CertificateRejected(f"certificate violated by {report.max_violation:.3g} "
                                      f"at (n, m) = {report.worst_pair}")
    return kernel


def _forcing_values(q, window: Window, dim: int) -> np.ndarray:
    if callable(q):
        return np.array([np.broadcast_to(np.asarray(q(int(n)), dtype=float), (dim,))
                         for n in window.indices])
    vals = np.asarray(q, dtype=float)
    if vals.shape != (window.size, dim):
        raise ValueError(f"forcing array must have shape {(window.size, dim)}")
    return vals


def _interior_residual(sys, values, forcing, interior: Window) -> float:
    w = sys.window
    lo, hi = w.idx(interior.n_min), w.idx(interior.n_max)
    A = sys.A_table[lo:hi]
    pred = np.einsum("kij,kj->ki", A, values[lo:hi]) + forcing[lo:hi]
    return vnorm(values[lo + 1:hi + 1] - pred)


def bounded_linear(sys: LinearSystem, cert: DichotomyCertificate, q, kernel: GreenKernel | None = None,
                   q_tail_bound: float | None = None, max_tail: float | None = None,
                   check_cert: bool = True, cert_tol: float = 1e-9,
                   interior_fraction: float = 0.8) -> BoundedSolution:
    """Bounded solution of ``z_{n+1} = A_n z_n + q_n``.

    ``q`` is a callable ``n -> vector`` or an array aligned with the window.
    ``q_tail_bound`` declares ``sup |q_n|`` outside the window; by default the
    largest ``|q_n|`` over the outer tenth of each side is assumed to persist.
    """
    kernel = _check(sys, cert, kernel, check_cert, cert_tol)
    w = sys.window
    qv = _forcing_values(q, w, sys.dim)
    values = kernel.series(qv)
    qn = np.abs(qv).max(axis=1)
    a_vals = cert.a_values(w)
    majorant = weight_table(a_vals, cert.K, cert.convention) @ qn[:-1]
    tails = tail_table(a_vals, qn, cert.K, cert.convention, g_outside=q_tail_bound)
    interior = w.interior(interior_fraction)
    lo, hi = w.idx(interior.n_min), w.idx(interior.n_max)
    tail_budget = float(tails[lo:hi + 1].max())
    if max_tail is not None and tail_budget > max_tail:
        raise TailBudgetExceeded(f"tail budget {tail_budget:.3g} exceeds requested {max_tail:.3g}")
    return BoundedSolution(
        values=values,
        window=w,
        residual=_interior_residual(sys, values, qv, interior),
        sup_norm=vnorm(values),
        picard_iters=0,
        tail_budget=tail_budget,
        tails=tails,
        bound=float(majorant.max()),
        interior=interior,
    )


def batch_evaluator(q) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Row-wise evaluator ``(ns, Z) -> [q(ns[i], Z[i])]`` for a nonlinearity."""
    if isinstance(q, Perturbation):
        return q.batch
    if getattr(q, "batched", False):
        return q
    return lambda ns, Z: np.array([np.asarray(q(int(n), z), dtype=float) for n, z in zip(ns, Z)])


def contraction_tails(cert: DichotomyCertificate, window: Window, Q_vals: np.ndarray, r_vals: np.ndarray,
                      q_tail_bound: float | None = None) -> np.ndarray:
    """Per-index distance between the window solution and the full-line one.

    With ``t_n`` the out-of-window part of the forcing bound and ``M`` the
    certified Lipschitz kernel ``||G(n,k+1)|| r_k``, the error obeys
    ``e <= t + M e``; since ``||M|| < 1`` the minimal solution is ``(I - M)^{-1} t``.
    """
    a_vals = cert.a_values(window)
    t = tail_table(a_vals, Q_vals, cert.K, cert.convention, g_outside=q_tail_bound)
    W = window.size
    M = np.zeros((W, W))
    M[:, :-1] = weight_table(a_vals, cert.K, cert.convention) * r_vals[None, :-1]
    if not np.all(np.isfinite(t)):
        return t
    return np.linalg.solve(np.eye(W) - M, t)


def bounded_nonlinear(sys: LinearSystem, cert: DichotomyCertificate, q, Q, r, eps: float = 1e-9,
                      kernel: GreenKernel | None = None, phi0: np.ndarray | None = None,
                      max_iter: int = 1000, q_tail_bound: float | None = None,
                      check_cert: bool = True, cert_tol: float = 1e-9,
                      interior_fraction: float = 0.8, theta: float | None = None,
                      tails: np.ndarray | None = None) -> BoundedSolution:
    """Unique bounded solution of ``z_{n+1} = A_n z_n + q(n, z_n)`` by successive approximation.

    ``Q`` bounds ``|q(n, .)|`` and ``r`` is its Lipschitz sequence.  Iterates are
    ``phi^{(j)} = sum_k G(., k+1) q(k, phi^{(j-1)}_k)`` from ``phi0`` (zero by
    default); iteration stops once ``|phi^{(j)} - phi^{(j-1)}| <= eps (1-theta)/theta``,
    which puts the last iterate within ``eps`` of the fixed point.

    ``theta`` and ``tails`` may be passed in when the caller has already computed
    them for these ``Q`` and ``r`` (the conjugacy engine does this once).
    """
    kernel = _check(sys, cert, kernel, check_cert, cert_tol)
    w = sys.window
    ns = w.indices
    a_vals = cert.a_values(w)
    Q_vals = as_seq(Q).values(ns)
    r_vals = as_seq(r).values(ns)
    weights = None
    if theta is None:
        weights = weight_table(a_vals, cert.K, cert.convention)
        theta = float(np.max(weights @ r_vals[:-1] + tail_table(a_vals, r_vals, cert.K, cert.convention)))
    if theta >= 1.0:
        raise NotContractive(f"contraction constant {theta:.4g} >= 1")
    if weights is None:
        weights = weight_table(a_vals, cert.K, cert.convention)
    bound = float(np.max(weights @ Q_vals[:-1]))
    if tails is None:
        tails = contraction_tails(cert, w, Q_vals, r_vals, q_tail_bound)

    qb = batch_evaluator(q)
    stop = eps * (1.0 - theta) / theta if theta > 0 else np.inf
    phi = np.zeros((w.size, sys.dim)) if phi0 is None else np.array(phi0, dtype=float)
    diffs, ratios = [], []
    for j in range(1, max_iter + 1):
        new = kernel.series(qb(ns, phi))
        diff = vnorm(new - phi)
        if diffs and diffs[-1] > 0:
            ratios.append(diff / diffs[-1])
        diffs.append(diff)
        phi = new
        if diff <= stop:
            break
    else:
        raise IterationCapExceeded(f"Picard iteration did not reach {stop:.3g} in {max_iter} steps "
                                   f"(last difference {diffs[-1]:.3g})")

    interior = w.interior(interior_fraction)
    forcing = qb(ns, phi)
    lo, hi = w.idx(interior.n_min), w.idx(interior.n_max)
    return BoundedSolution(
        values=phi,
        window=w,
        residual=_interior_residual(sys, phi, forcing, interior),
        sup_norm=vnorm(phi),
        picard_iters=j,
        tail_budget=float(tails[lo:hi + 1].max()),
        tails=tails,
        bound=bound,
        theta=theta,
        ratios=ratios,
        diffs=diffs,
        interior=interior,
    )
