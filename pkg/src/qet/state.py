"""Classical stores, state vectors over register products, unitaries and
measurements."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import DimensionError, IntegerOverflow, WellFormednessError
from .syntax import BinOp, BoolLit, Expr, Gate, Not, Num, Var, VarSets

INT_MIN = -(2 ** 63)
INT_MAX = 2 ** 63 - 1
BRANCH_DROP = 1e-12
NORM_TOL = 1e-9
QUANT = 1e-12


@dataclass(frozen=True)
class Store:
    """Immutable map from classical variable names to ints (bools are 0/1)."""

    names: tuple
    values: tuple
    n_bools: int = 0  # the first ``n_bools`` names are Booleans

    @classmethod
    def from_dict(cls, d: dict, order=None, n_bools: int = 0) -> "Store":
        names = tuple(order) if order is not None else tuple(d)
        return cls(names, tuple(int(d[n]) for n in names), n_bools)

    def split(self) -> tuple:
        """``(bool values, int values)``."""
        return self.values[:self.n_bools], self.values[self.n_bools:]

    def __getitem__(self, name: str) -> int:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def __contains__(self, name) -> bool:
        return name in self.names

    def get(self, name, default=None):
        return self[name] if name in self.names else default

    def set(self, name: str, value: int) -> "Store":
        i = self.names.index(name)
        vals = list(self.values)
        vals[i] = int(value)
        return Store(self.names, tuple(vals), self.n_bools)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))


def _check(v: int) -> int:
    if v < INT_MIN or v > INT_MAX:
        raise IntegerOverflow(f"integer overflow: {v} outside the signed 64-bit range")
    return v


def eval_expr(e: Expr, s) -> int:
    """Evaluate a program expression; Booleans come back as 0/1.

    ``s`` is a :class:`Store` or any mapping from names to ints.
    """
    if isinstance(e, Num):
        return _check(e.value)
    if isinstance(e, BoolLit):
        return int(e.value)
    if isinstance(e, Var):
        return s[e.name]
    if isinstance(e, Not):
        return 1 - (eval_expr(e.operand, s) != 0)
    op = e.op
    if op == "and":
        return int(eval_expr(e.left, s) != 0 and eval_expr(e.right, s) != 0)
    if op == "or":
        return int(eval_expr(e.left, s) != 0 or eval_expr(e.right, s) != 0)
    a, b = eval_expr(e.left, s), eval_expr(e.right, s)
    if op == "+":
        return _check(a + b)
    if op == "-":
        return _check(a - b)
    if op == "*":
        return _check(a * b)
    if op == "==":
        return int(a == b)
    if op == "<=":
        return int(a <= b)
    if op == "<":
        return int(a < b)
    raise ValueError(f"unknown operator {op!r}")


# ---------------------------------------------------------------------------
# gates


@lru_cache(maxsize=None)
def shift_matrix(n: int) -> np.ndarray:
    """Conditional shift on (direction qubit, n positions): L moves to i-1, R to i+1 (mod n)."""
    s = np.zeros((2 * n, 2 * n))
    for i in range(n):
        s[(i - 1) % n, i] = 1.0
        s[n + (i + 1) % n, n + i] = 1.0
    s.setflags(write=False)
    return s


_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}
for _m in _FIXED.values():
    _m.setflags(write=False)


def gate_matrix(gate: Gate, dims) -> np.ndarray:
    """Matrix of ``gate`` acting on registers with dimensions ``dims``."""
    if gate.name is None:
        m = gate.as_array()
    elif gate.name == "SHIFT":
        if len(dims) != 2 or dims[0] != 2:
            raise DimensionError("SHIFT acts on a direction qubit and a position register")
        m = shift_matrix(int(dims[1]))
    else:
        m = _FIXED[gate.name]
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise DimensionError(f"gate of size {m.shape[0]} on registers of total dimension {total}")
    return m


# ---------------------------------------------------------------------------
# state vectors


@dataclass(frozen=True)
class Layout:
    """Ordered register names with their dimensions."""

    regs: tuple  # ((name, dim), ...)

    @cached_property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.regs)

    @cached_property
    def dims(self) -> tuple:
        return tuple(d for _, d in self.regs)

    @cached_property
    def dim(self) -> int:
        return math.prod(self.dims)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise WellFormednessError(f"unknown register {name!r}") from None


def apply_unitary(u: np.ndarray, axes, dims, amps: np.ndarray) -> np.ndarray:
    """Apply ``u`` to the tensor factors ``axes`` of a state over ``dims``."""
    axes = list(axes)
    if len(set(axes)) != len(axes):
        raise DimensionError("target registers must be distinct")
    sub = [dims[a] for a in axes]
    k = int(np.prod(sub))
    if u.shape != (k, k):
        raise DimensionError(f"unitary of size {u.shape[0]} on registers of total dimension {k}")
    psi = amps.reshape(dims)
    psi = np.moveaxis(psi, axes, list(range(len(axes))))
    rest = psi.shape[len(axes):]
    out = (u @ psi.reshape(k, -1)).reshape(tuple(sub) + rest)
    out = np.moveaxis(out, list(range(len(axes))), axes)
    return np.ascontiguousarray(out).reshape(-1)


def projector_mask(dims, axis: int, outcome: int, zero_test: bool = False) -> np.ndarray:
    """Boolean mask over basis indices selecting register ``axis`` in ``outcome``.

    With ``zero_test`` the outcomes are 0 (register at 0) and 1 (register not at 0).
    """
    idx = np.indices(dims).reshape(len(dims), -1)[axis] if dims else np.zeros(1, int)
    if zero_test:
        return (idx != 0) if outcome else (idx == 0)
    return idx == outcome


@lru_cache(maxsize=4096)
def _mask_cached(dims: tuple, axis: int, outcome: int, zero_test: bool) -> np.ndarray:
    m = projector_mask(dims, axis, outcome, zero_test)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class MachineState:
    """A classical store paired with a normalized amplitude vector."""

    store: Store
    amps: np.ndarray
    layout: Layout
    _key: tuple | None = field(default=None, init=False, repr=False, compare=False)
    _akey: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.amps.shape != (self.layout.dim,):
            raise DimensionError(f"amplitude vector of length {self.amps.shape[0]} for a "
                                 f"state space of dimension {self.layout.dim}")

    # identity up to quantization and global phase
    def key(self) -> tuple:
        k = self._key
        if k is None:
            k = (self.store.values, self.amps_key())
            object.__setattr__(self, "_key", k)
        return k

    def amps_key(self) -> bytes:
        a = self._akey
        if a is None:
            a = amps_key(self.amps)
            object.__setattr__(self, "_akey", a)
        return a

    def __eq__(self, other):
        return isinstance(other, MachineState) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def with_store(self, store: Store) -> "MachineState":
        # the amplitude key is shared, since hashing the vector dominates stepping
        return MachineState(store, self.amps, self.layout, self._akey)

    def with_amps(self, amps: np.ndarray) -> "MachineState":
        return MachineState(self.store, amps, self.layout)

    def assign(self, name: str, value: int) -> "MachineState":
        return self.with_store(self.store.set(name, value))

    def apply(self, gate: Gate, regs) -> "MachineState":
        axes = [self.layout.axis(r) for r in regs]
        dims = self.layout.dims
        u = gate_matrix(gate, [dims[a] for a in axes])
        return self.with_amps(apply_unitary(u, axes, dims, self.amps))

    def outcome_probs(self, reg: str, zero_test: bool = False) -> list:
        """Probabilities of each outcome of measuring ``reg`` (no dropping)."""
        axis = self.layout.axis(reg)
        dims = self.layout.dims
        w = np.abs(self.amps) ** 2
        n_out = 2 if zero_test else dims[axis]
        return [float(w[_mask_cached(dims, axis, k, zero_test)].sum()) for k in range(n_out)]

    def measure(self, reg: str, target: str | None = None, zero_test: bool = False) -> list:
        """Branches ``(p_k, state)`` with ``target := k`` and the collapsed,
        renormalized vector; branches with ``p_k < 1e-12`` are dropped."""
        axis = self.layout.axis(reg)
        dims = self.layout.dims
        if not zero_test and dims[axis] != 2:
            raise DimensionError(f"meas needs a 2-dimensional register; {reg!r} has "
                                 f"dimension {dims[axis]}")
        w = np.abs(self.amps) ** 2
        out = []
        for k in (0, 1):
            mask = _mask_cached(dims, axis, k, zero_test)
            p = float(w[mask].sum())
            if p < BRANCH_DROP:
                continue
            post = np.where(mask, self.amps, 0) / np.sqrt(p)
            st = self.with_amps(post)
            if target is not None:
                st = st.assign(target, k)
            out.append((p, st))
        total = sum(p for p, _ in out)
        # renormalize after dropping so branch weights sum to one
        return [(p / total, st) for p, st in out]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def to_json(self) -> dict:
        return {"store": self.store.as_dict(),
                "amps": [[float(z.real), float(z.imag)] for z in self.amps]}


def amps_key(amps: np.ndarray) -> bytes:
    """Quantized amplitudes with the global phase fixed by the first
    significant amplitude, as hashable bytes."""
    nz = np.flatnonzero(np.abs(amps) > 1e-9)
    if nz.size:
        a = amps[nz[0]]
        amps = amps * (abs(a) / a)
    q = np.round(np.concatenate([amps.real, amps.imag]) / QUANT)
    q[q == 0] = 0.0  # fold -0.0
    return q.astype(np.int64).tobytes()


# ---------------------------------------------------------------------------
# construction helpers


def layout_of(vs: VarSets) -> Layout:
    return Layout(tuple(vs.qregs))


def store_names(vs: VarSets) -> tuple:
    return tuple(vs.bools) + tuple(vs.ints)


def basis_state(vs: VarSets, index: int = 0, store: dict | None = None) -> MachineState:
    """Basis vector ``index`` (all-zero by default) with a zero store unless given."""
    lay = layout_of(vs)
    amps = np.zeros(lay.dim, dtype=complex)
    amps[index] = 1.0
    return make_state(vs, store or {}, amps)


def make_state(vs: VarSets, store: dict, amps) -> MachineState:
    """Build a state, filling unspecified classical variables with 0."""
    names = store_names(vs)
    unknown = set(store) - set(names)
    if unknown:
        raise WellFormednessError(f"unknown classical variables {sorted(unknown)}")
    vals = {n: 0 for n in names}
    for n, v in store.items():
        if n in vs.bools and v not in (0, 1, True, False):
            raise WellFormednessError(f"Boolean {n!r} must be 0 or 1")
        vals[n] = _check(int(v))
    lay = layout_of(vs)
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    if amps.shape != (lay.dim,):
        raise DimensionError(f"expected {lay.dim} amplitudes, got {amps.shape[0]}")
    nrm = np.linalg.norm(amps)
    if abs(nrm - 1.0) > NORM_TOL:
        raise DimensionError(f"amplitude vector has norm {nrm}, expected 1")
    return MachineState(Store.from_dict(vals, names, len(vs.bools)), amps, lay)


def state_from_json(vs: VarSets, data) -> MachineState:
    """Parse ``{"store": {...}, "amps": [[re, im], ...]}`` (either part optional;
    missing amps means the all-zero basis state)."""
    if isinstance(data, str):
        data = json.loads(data)
    store = data.get("store", {})
    lay = layout_of(vs)
    if "amps" in data:
        amps = np.array([complex(re, im) for re, im in data["amps"]])
    else:
        amps = np.zeros(lay.dim, dtype=complex)
        amps[int(data.get("basis", 0))] = 1.0
    return make_state(vs, store, amps)


def haar_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)
