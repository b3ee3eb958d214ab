"""Cost structures: ordered convex algebras with a least element and an
action of non-negative costs.

Every structure exposes ``bot``, ``convex(r, a, b)`` (``r·a + (1−r)·b``),
``cost_add(c, a)``, ``leq`` and ``approx_eq``.  Four instances are provided:

* :data:`ECOST`  extended non-negative reals, costs are added;
* :data:`VALUE`  extended non-negative reals, costs are forgotten;
* :data:`WP`     the unit interval, costs are forgotten;
* :data:`DENOT`  finitely supported maps into subdensity matrices, Löwner order,
  costs are forgotten.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ChainViolation, DimensionError, QetError

INF = math.inf
TOL = 1e-9
LOEWNER_TOL = 1e-9


def mul0(r: float, a: float) -> float:
    """``r·a`` with the convention ``0·∞ = 0``."""
    return 0.0 if r == 0 else r * a


class CostStructure:
    name = "abstract"

    def bot(self):
        raise NotImplementedError

    def convex(self, r: float, a, b):
        raise NotImplementedError

    def cost_add(self, c: float, a):
        raise NotImplementedError

    def leq(self, a, b, tol: float = TOL) -> bool:
        raise NotImplementedError

    def approx_eq(self, a, b, tol: float = TOL) -> bool:
        raise NotImplementedError

    def distance(self, a, b) -> float:
        """Size of the change from ``a`` to ``b`` (used for convergence tests)."""
        raise NotImplementedError

    def exceeds(self, a, ceiling: float) -> bool:
        """True when ``a`` has grown past the divergence ceiling."""
        return False

    def top_like(self, a):
        """Value reported once iteration diverges."""
        return a


class _Reals(CostStructure):
    """Extended non-negative reals with the usual order."""

    lo, hi = 0.0, INF

    def bot(self) -> float:
        return 0.0

    def convex(self, r: float, a: float, b: float) -> float:
        return mul0(r, a) + mul0(1.0 - r, b)

    def leq(self, a, b, tol=TOL) -> bool:
        if b == INF:
            return True
        if a == INF:
            return False
        return a <= b + tol

    def approx_eq(self, a, b, tol=TOL) -> bool:
        if a == INF or b == INF:
            return a == b
        return abs(a - b) <= tol

    def distance(self, a, b) -> float:
        if a == b:
            return 0.0
        if a == INF or b == INF:
            return INF
        return abs(a - b)

    def exceeds(self, a, ceiling) -> bool:
        return a > ceiling

    def top_like(self, a):
        return INF

    def check(self, a: float) -> float:
        if not (self.lo - TOL <= a <= self.hi + TOL):
            raise QetError(f"value {a} outside [{self.lo}, {self.hi}]")
        return a


class ExtRealCost(_Reals):
    """Costs add to the value."""

    name = "ecost"

    def cost_add(self, c: float, a: float) -> float:
        return c + a


class ForgetfulReal(_Reals):
    """Costs are ignored: ``c +̂ a = a``."""

    name = "value"

    def cost_add(self, c: float, a: float) -> float:
        return a


class UnitInterval(ForgetfulReal):
    """Forgetful arithmetic restricted to probabilities."""

    name = "wp"
    hi = 1.0

    def exceeds(self, a, ceiling) -> bool:
        return False


# ---------------------------------------------------------------------------
# density maps


def loewner_leq(a: np.ndarray, b: np.ndarray, tol: float = LOEWNER_TOL) -> bool:
    """``a ≤ b`` in the Löwner order: ``b − a`` has no eigenvalue below ``−tol``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"cannot compare matrices of shapes {a.shape} and {b.shape}")
    d = b - a
    d = (d + d.conj().T) / 2
    return bool(np.linalg.eigvalsh(d).min() >= -tol)


def is_subdensity(m: np.ndarray, tol: float = LOEWNER_TOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        return False
    if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -tol:
        return False
    return float(np.trace(m).real) <= 1 + tol


class DensityMap:
    """Finitely supported map from classical keys to subdensity matrices.

    Keys absent from the support denote the zero matrix.  Instances are
    treated as immutable.
    """

    __slots__ = ("dim", "entries")

    def __init__(self, dim: int, entries: dict | None = None):
        self.dim = int(dim)
        self.entries = dict(entries or {})
        for m in self.entries.values():
            if m.shape != (self.dim, self.dim):
                raise DimensionError(f"entry of shape {m.shape} in a map of dimension {self.dim}")

    @classmethod
    def singleton(cls, key, vec: np.ndarray) -> "DensityMap":
        vec = np.asarray(vec, dtype=complex)
        return cls(vec.shape[0], {key: np.outer(vec, vec.conj())})

    def get(self, key) -> np.ndarray:
        m = self.entries.get(key)
        return np.zeros((self.dim, self.dim), dtype=complex) if m is None else m

    def keys(self):
        return self.entries.keys()

    def trace(self) -> float:
        return float(sum(np.trace(m).real for m in self.entries.values()))

    def is_valid(self, tol: float = LOEWNER_TOL) -> bool:
        return all(is_subdensity(m, tol) for m in self.entries.values())

    def __repr__(self):
        return f"DensityMap(dim={self.dim}, support={sorted(self.entries)})"


class DensityCost(CostStructure):
    """Pointwise Löwner order on density maps; costs are forgotten."""

    name = "denot"

    def __init__(self, dim: int = 2):
        self.dim = dim

    def bot(self) -> DensityMap:
        return DensityMap(self.dim)

    def convex(self, r: float, a: DensityMap, b: DensityMap) -> DensityMap:
        out = {}
        if r != 0:
            for k, m in a.entries.items():
                out[k] = r * m
        if r != 1:
            for k, m in b.entries.items():
                out[k] = out[k] + (1 - r) * m if k in out else (1 - r) * m
        return DensityMap(a.dim, out)

    def cost_add(self, c: float, a: DensityMap) -> DensityMap:
        return a

    def leq(self, a: DensityMap, b: DensityMap, tol=LOEWNER_TOL) -> bool:
        return all(loewner_leq(a.get(k), b.get(k), tol) for k in set(a.keys()) | set(b.keys()))

    def distance(self, a: DensityMap, b: DensityMap) -> float:
        keys = set(a.keys()) | set(b.keys())
        return max((float(np.max(np.abs(a.get(k) - b.get(k)))) for k in keys), default=0.0)

    def approx_eq(self, a, b, tol=TOL) -> bool:
        return self.distance(a, b) <= tol


ECOST = ExtRealCost()
VALUE = ForgetfulReal()
WP = UnitInterval()
DENOT = DensityCost()

STRUCTURES = {"ecost": ECOST, "value": VALUE, "wp": WP, "denot": DENOT}


def structure(name: str, dim: int | None = None) -> CostStructure:
    if name == "denot" and dim is not None:
        return DensityCost(dim)
    try:
        return STRUCTURES[name]
    except KeyError:
        raise QetError(f"unknown cost structure {name!r}") from None


# ---------------------------------------------------------------------------
# convex sums and suprema


def convex_sum(cs: CostStructure, pairs, tol: float = TOL):
    """Convex sum of ``(r_i, a_i)`` by the inductive definition: ``⊥`` when
    empty, ``a_n`` when ``r_n = 1``, else ``a_n +_{r_n} Σ_{i<n} r_i/(1−r_n)·a_i``."""
    pairs = list(pairs)
    total = sum(r for r, _ in pairs)
    if total > 1 + tol:
        raise QetError(f"convex weights sum to {total} > 1")
    if any(r < 0 for r, _ in pairs):
        raise QetError("convex weights must be non-negative")

    def go(ps):
        if not ps:
            return cs.bot()
        r, a = ps[-1]
        if r >= 1:
            return a
        rest = [(ri / (1 - r), ai) for ri, ai in ps[:-1]]
        return cs.convex(r, a, go(rest))

    return go(pairs)


@dataclass
class SupResult:
    value: object
    converged: bool
    divergent: bool = False
    iterations: int = 0

    def __iter__(self) -> Iterator:
        yield self.value
        yield self.converged


def kleene_sup(cs: CostStructure, seq: Iterable, tol: float = TOL, max_iter: int = 10_000,
               ceiling: float = 1e12) -> SupResult:
    """Supremum of an ω-chain given as an iterator, up to numeric convergence.

    Stops when two successive elements are within ``tol``; reports divergence
    (and returns the top-like value) when an element passes ``ceiling``.
    Raises :class:`ChainViolation` if an element is below its predecessor by
    more than ``tol``.  Convergence is a numeric certificate only.
    """
    prev = None
    n = 0
    for n, a in enumerate(seq, start=1):
        if prev is not None and not cs.leq(prev, a, tol):
            raise ChainViolation(f"iterate {n} is below iterate {n - 1}")
        if cs.exceeds(a, ceiling):
            return SupResult(cs.top_like(a), True, True, n)
        if prev is not None and cs.approx_eq(prev, a, tol):
            return SupResult(a, True, False, n)
        prev = a
        if n >= max_iter:
            break
    return SupResult(prev if prev is not None else cs.bot(), False, False, n)
