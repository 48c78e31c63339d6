"""Integer-indexed real sequences.

Every sequence in the library (dichotomy rates ``a_j``, bound sequences
``F_n``/``G_n``, Lipschitz sequences ``r_n``) is a :class:`Seq`: a vectorised
map from integers to floats that is defined on all of the integers.  Tabulated
sequences are frozen at their first/last entries outside the table.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .errors import InvalidParams, UnknownFamily


class Seq:
    """A real sequence ``n -> value`` evaluated elementwise on integer arrays."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str = "seq"):
        self._fn = fn
        self.label = label

    def __call__(self, n):
        if np.ndim(n) == 0:
            return float(self._fn(np.asarray([int(n)]))[0])
        return np.asarray(self._fn(np.asarray(n, dtype=np.int64)), dtype=float)

    def values(self, ns) -> np.ndarray:
        return self(np.asarray(ns, dtype=np.int64))

    def __add__(self, other: "Seq") -> "Seq":
        other = as_seq(other)
        return Seq(lambda n: self._fn(n) + other._fn(n), f"({self.label}+{other.label})")

    __radd__ = __add__

    def __mul__(self, c: float) -> "Seq":
        c = float(c)
        return Seq(lambda n: c * self._fn(n), f"{c:g}*{self.label}")

    __rmul__ = __mul__

    def maximum(self, other: "Seq") -> "Seq":
        other = as_seq(other)
        return Seq(lambda n: np.maximum(self._fn(n), other._fn(n)),
                   f"max({self.label},{other.label})")

    def __repr__(self) -> str:
        return f"Seq({self.label})"


def constant(value: float) -> Seq:
    v = float(value)
    return Seq(lambda n: np.full(np.shape(n), v), f"{v:g}")


def table(entries: Mapping[int, float]) -> Seq:
    """Tabulated sequence, frozen at the boundary entries outside the table."""
    if not entries:
        raise InvalidParams("empty table")
    keys = np.array(sorted(int(k) for k in entries))
    if np.any(np.diff(keys) != 1):
        raise InvalidParams("table indices must be consecutive integers")
    vals = np.array([float(entries[k]) for k in sorted(entries, key=int)])
    lo = keys[0]

    def fn(n):
        idx = np.clip(np.asarray(n) - lo, 0, len(vals) - 1)
        return vals[idx]

    return Seq(fn, f"table[{keys[0]}..{keys[-1]}]")


def harmonic(c: float = 1.0) -> Seq:
    """``c / (1 + |n|)``: nonsummable, so its partial sums diverge logarithmically."""
    c = float(c)
    return Seq(lambda n: c / (1.0 + np.abs(n)), f"{c:g}/(1+|n|)")


def geometric(c: float = 1.0, rho: float = 0.5) -> Seq:
    c, rho = float(c), float(rho)
    if not 0.0 < rho < 1.0:
        raise InvalidParams("geometric ratio must lie in (0, 1)")
    return Seq(lambda n: c * rho ** np.abs(n), f"{c:g}*{rho:g}^|n|")


def spike(height: float, at: int = 0) -> Seq:
    h, at = float(height), int(at)
    return Seq(lambda n: np.where(np.asarray(n) == at, h, 0.0), f"{h:g}@{at}")


SEQUENCE_FAMILIES: dict[str, Callable[..., Seq]] = {
    "constant": constant,
    "harmonic": harmonic,
    "geometric": geometric,
    "spike": spike,
}


def as_seq(obj) -> Seq:
    if isinstance(obj, Seq):
        return obj
    if isinstance(obj, (int, float, np.floating, np.integer)):
        return constant(float(obj))
    if callable(obj):
        return Seq(lambda n: np.vectorize(lambda k: float(obj(int(k))), otypes=[float])(n),
                   getattr(obj, "__name__", "fn"))
    raise TypeError(f"cannot interpret {obj!r} as a sequence")


def seq_from_spec(spec) -> Seq:
    """Build a sequence from a config fragment.

    Accepted shapes: a bare number, ``{"constant": v}``,
    ``{"table": {"-1": v, "0": v, ...}}`` or ``{"family": name, "params": {...}}``.
    """
    if isinstance(spec, (int, float)):
        return constant(spec)
    if not isinstance(spec, Mapping):
        raise InvalidParams(f"bad sequence spec: {spec!r}")
    if "constant" in spec:
        return constant(spec["constant"])
    if "table" in spec:
        return table({int(k): float(v) for k, v in spec["table"].items()})
    if "family" in spec:
        name = spec["family"]
        if name not in SEQUENCE_FAMILIES:
            raise UnknownFamily(name)
        try:
            return SEQUENCE_FAMILIES[name](**spec.get("params", {}))
        except TypeError as exc:
            raise InvalidParams(str(exc)) from exc
    raise InvalidParams(f"bad sequence spec: {spec!r}")
