"""Linear part ``z_{n+1} = A_n z_n`` on a finite window, plus perturbed propagation.

All vector norms are the max norm and all matrix norms the induced max-row-sum
norm, so every quantity below is computed exactly (no spectral estimates).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    BackwardNotContractive,
    IndexOutOfWindow,
    InvalidParams,
    NoConvergence,
    SingularCoefficient,
)
from .sequences import Seq, as_seq, constant

DEFAULT_COND_CAP = 1e12


def vnorm(x) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def mnorm(a) -> float:
    """Induced infinity norm (max absolute row sum); batched over leading axes."""
    s = np.abs(a).sum(axis=-1).max(axis=-1)
    return float(s) if np.ndim(s) == 0 else s


@dataclass(frozen=True)
class Window:
    n_min: int
    n_max: int

    def __post_init__(self):
        if not self.n_min < self.n_max:
            raise InvalidParams(f"window needs n_min < n_max, got [{self.n_min}, {self.n_max}]")

    @property
    def size(self) -> int:
        return self.n_max - self.n_min + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def __contains__(self, n) -> bool:
        return self.n_min <= n <= self.n_max

    def idx(self, n: int) -> int:
        if n not in self:
            raise IndexOutOfWindow(f"index {n} outside window [{self.n_min}, {self.n_max}]")
        return int(n) - self.n_min

    def clamp(self, n: int) -> int:
        return min(max(int(n), self.n_min), self.n_max)

    def interior(self, fraction: float = 0.8) -> "Window":
        """Middle ``fraction`` of the window (at least one index)."""
        cut = int(np.floor(self.size * (1.0 - fraction) / 2.0))
        lo, hi = self.n_min + cut, self.n_max - cut
        if lo >= hi:
            lo, hi = self.n_min, self.n_max
        return Window(lo, hi)

    def doubled(self) -> "Window":
        half = (self.n_max - self.n_min + 1) // 2
        return Window(self.n_min - half, self.n_max + half)


class LinearSystem:
    """Coefficients ``A_n`` tabulated on a window.

    ``coeff`` may be defined on all integers; it is only sampled on the window,
    and :meth:`with_window` re-tabulates it elsewhere.  Lookups outside the window
    raise :class:`IndexOutOfWindow` unless ``frozen=True`` is requested, in which
    case the boundary coefficient is returned.
    """

    def __init__(self, coeff: Callable[[int], np.ndarray], window: Window, dim: int | None = None,
                 cond_cap: float = DEFAULT_COND_CAP, label: str = "system"):
        self.coeff = coeff
        self.window = window
        self.cond_cap = float(cond_cap)
        self.label = label
        mats = np.array([np.atleast_2d(np.asarray(coeff(int(n)), dtype=float))
                         for n in window.indices])
        if dim is None:
            dim = mats.shape[-1]
        if mats.shape[1:] != (dim, dim):
            raise InvalidParams(f"coefficients must be {dim}x{dim}, got {mats.shape[1:]}")
        self.dim = dim
        conds = np.linalg.cond(mats, p=np.inf)
        bad = np.flatnonzero(~np.isfinite(conds) | (conds > self.cond_cap))
        if bad.size:
            n = int(window.indices[bad[0]])
            raise SingularCoefficient(f"A_{n} has condition number {conds[bad[0]]:.3g} "
                                      f"above the cap {self.cond_cap:.3g}")
        self._A = mats
        self._Ainv = np.linalg.inv(mats)
        self._A.setflags(write=False)
        self._Ainv.setflags(write=False)

    @property
    def A_table(self) -> np.ndarray:
        return self._A

    @property
    def Ainv_table(self) -> np.ndarray:
        return self._Ainv

    def A(self, n: int, frozen: bool = False) -> np.ndarray:
        if frozen:
            n = self.window.clamp(n)
        return self._A[self.window.idx(n)]

    def Ainv(self, n: int, frozen: bool = False) -> np.ndarray:
        if frozen:
            n = self.window.clamp(n)
        return self._Ainv[self.window.idx(n)]

    def deviations(self) -> np.ndarray:
        """``||A_n - I||`` for every n in the window."""
        return mnorm(self._A - np.eye(self.dim))

    def with_window(self, window: Window) -> "LinearSystem":
        return LinearSystem(self.coeff, window, self.dim, self.cond_cap, self.label)

    def __repr__(self) -> str:
        return f"LinearSystem({self.label}, d={self.dim}, window=[{self.window.n_min}, {self.window.n_max}])"


def diagonal_system(entries: Sequence[Callable[[int], float]], window: Window,
                    label: str = "diag") -> LinearSystem:
    entries = [as_seq(e) for e in entries]
    return LinearSystem(lambda n: np.diag([e(n) for e in entries]), window, len(entries),
                        label=label)


def constant_system(matrix, window: Window, label: str = "const") -> LinearSystem:
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    return LinearSystem(lambda n: mat, window, mat.shape[0], label=label)


def tabulated_system(mats: Mapping[int, np.ndarray], window: Window,
                     label: str = "table") -> LinearSystem:
    """Coefficients from a table, frozen at the boundary entries."""
    keys = sorted(int(k) for k in mats)
    arr = {int(k): np.atleast_2d(np.asarray(v, dtype=float)) for k, v in mats.items()}
    lo, hi = keys[0], keys[-1]
    return LinearSystem(lambda n: arr[min(max(n, lo), hi)], window, label=label)


@dataclass(frozen=True)
class Perturbation:
    """A nonlinearity ``f(n, x)`` with declared bound ``F_n`` and Lipschitz sequence ``r_n``.

    ``batch_func(ns, X)`` evaluates rows ``f(ns[i], X[i])`` at once; when absent
    the scalar evaluator is looped.
    """

    func: Callable[[int, np.ndarray], np.ndarray]
    bound: Seq
    lip: Seq
    name: str = "f"
    batch_func: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, n: int, x) -> np.ndarray:
        return np.asarray(self.func(int(n), np.asarray(x, dtype=float)), dtype=float)

    def batch(self, ns, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.batch_func is not None:
            return np.asarray(self.batch_func(np.asarray(ns), X), dtype=float)
        return np.array([self(n, x) for n, x in zip(ns, X)])


def zero_perturbation(dim: int) -> Perturbation:
    z = constant(0.0)
    return Perturbation(lambda n, x: np.zeros(dim), z, z, "zero",
                        lambda ns, X: np.zeros_like(X))


def sample_metadata(pert: Perturbation, ns, dim: int, rng: np.random.Generator,
                    count: int = 200, scale: float = 3.0) -> dict:
    """Sampled worst ratios ``|f|/F_n`` and ``|f(x)-f(y)| / (r_n |x-y|)``."""
    worst_bound = 0.0
    worst_lip = 0.0
    for n in ns:
        F, r = pert.bound(int(n)), pert.lip(int(n))
        for _ in range(count):
            x = rng.uniform(-scale, scale, dim)
            y = x + rng.normal(0.0, 10.0 ** rng.uniform(-6, 0), dim)
            fx = pert(n, x)
            if F > 0:
                worst_bound = max(worst_bound, vnorm(fx) / F)
            elif vnorm(fx) > 0:
                worst_bound = np.inf
            dx = vnorm(x - y)
            if dx > 0:
                q = vnorm(fx - pert(n, y)) / dx
                if r > 0:
                    worst_lip = max(worst_lip, q / r)
                elif q > 0:
                    worst_lip = np.inf
    return {"bound_ratio": worst_bound, "lipschitz_ratio": worst_lip}


def transition(sys: LinearSystem, n: int, m: int) -> np.ndarray:
    """``W_n W_m^{-1}``: the ordered product ``A_{n-1} ... A_m`` (inverse factors when n < m)."""
    i, j = sys.window.idx(n), sys.window.idx(m)
    out = np.eye(sys.dim)
    if i >= j:
        for k in range(j, i):
            out = sys.A_table[k] @ out
    else:
        for k in range(i, j):
            out = out @ sys.Ainv_table[k]
    return out


def _backward_step(sys: LinearSystem, f: Perturbation, k: int, x_next: np.ndarray,
                   tol: float, max_iter: int) -> np.ndarray:
    Ainv = sys.Ainv(k)
    c = mnorm(Ainv) * f.lip(k)
    if c >= 1.0:
        raise BackwardNotContractive(f"||A_{k}^-1|| r_{k} = {c:.4g} >= 1; cannot step back from {k + 1}")
    x = Ainv @ x_next
    if c == 0.0:
        return Ainv @ (x_next - f(k, x))
    for _ in range(max_iter):
        x_new = Ainv @ (x_next - f(k, x))
        if vnorm(x_new - x) <= tol * max(1.0, vnorm(x_new)):
            return x_new
        x = x_new
    raise NoConvergence(f"backward inversion at n={k} did not converge in {max_iter} iterations")


def trajectory(sys: LinearSystem, f: Perturbation, m: int, xi, tol: float = 1e-15,
               max_iter: int = 500) -> np.ndarray:
    """``x(n, m, xi)`` for every n in the window, as an array of shape (W, d)."""
    w = sys.window
    i0 = w.idx(m)
    out = np.empty((w.size, sys.dim))
    out[i0] = np.asarray(xi, dtype=float)
    ns = w.indices
    for i in range(i0, w.size - 1):
        out[i + 1] = sys.A_table[i] @ out[i] + f(ns[i], out[i])
    for i in range(i0 - 1, -1, -1):
        out[i] = _backward_step(sys, f, int(ns[i]), out[i + 1], tol, max_iter)
    return out


def propagate(sys: LinearSystem, f: Perturbation, m: int, xi, n: int, tol: float = 1e-15,
              max_iter: int = 500) -> np.ndarray:
    """Value at ``n`` of the solution of ``x_{k+1} = A_k x_k + f(k, x_k)`` through ``xi`` at ``m``."""
    w = sys.window
    w.idx(n)
    w.idx(m)
    x = np.array(xi, dtype=float)
    if n >= m:
        for k in range(m, n):
            x = sys.A(k) @ x + f(k, x)
    else:
        for k in range(m - 1, n - 1, -1):
            x = _backward_step(sys, f, k, x, tol, max_iter)
    return x


def sup_deviation(sys: LinearSystem) -> float:
    """``M = max_n ||A_n - I||`` over the window."""
    return float(np.max(sys.deviations()))


def solution_residual(sys: LinearSystem, f: Perturbation, seq, ns=None) -> float:
    """Largest defect ``|x_{n+1} - A_n x_n - f(n, x_n)|`` of a candidate sequence.

    ``seq`` is either an array aligned with the window (shape (W, d)) or a
    mapping ``n -> vector`` over consecutive indices.
    """
    if isinstance(seq, Mapping):
        keys = sorted(seq)
        vals = np.array([np.asarray(seq[k], dtype=float) for k in keys])
        ns = np.array(keys)
    else:
        vals = np.asarray(seq, dtype=float)
        if ns is None:
            ns = sys.window.indices
        ns = np.asarray(ns)
    if np.any(np.diff(ns) != 1):
        raise InvalidParams("sequence indices must be consecutive")
    if len(ns) < 2:
        return 0.0
    A = np.array([sys.A(int(n)) for n in ns[:-1]])
    pred = np.einsum("kij,kj->ki", A, vals[:-1]) + f.batch(ns[:-1], vals[:-1])
    return vnorm(vals[1:] - pred)


@dataclass(frozen=True)
class GrowthReport:
    xi: tuple
    forward_growth: float
    backward_growth: float
    verdict: str


def scan_unbounded_growth(sys: LinearSystem, cert, samples, threshold: float = 10.0) -> list[GrowthReport]:
    """Check that nonzero initial data at the certificate base index grow toward a window end.

    A finite window cannot prove unboundedness; samples that stay under
    ``threshold`` at both ends are reported as ``inconclusive``.
    """
    base = getattr(cert, "base_index", 0)
    fwd = transition(sys, sys.window.n_max, base)
    bwd = transition(sys, sys.window.n_min, base)
    out = []
    for xi in samples:
        xi = np.asarray(xi, dtype=float)
        size = vnorm(xi)
        if size == 0.0:
            out.append(GrowthReport(tuple(xi.tolist()), 0.0, 0.0, "trivial"))
            continue
        gf = vnorm(fwd @ xi) / size
        gb = vnorm(bwd @ xi) / size
        if gf > threshold and gb > threshold:
            verdict = "unbounded_both"
        elif gf > threshold:
            verdict = "unbounded_forward"
        elif gb > threshold:
            verdict = "unbounded_backward"
        else:
            verdict = "inconclusive"
        out.append(GrowthReport(tuple(xi.tolist()), gf, gb, verdict))
    return out
