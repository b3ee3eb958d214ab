"""A small expression language for expectations, maps from states to
non-negative extended reals.

Text form is an s-expression, e.g.::

    (mul (ind x) (add (const 1) (quadform (q) [[1,-1],[-1,1]])))

Forms: ``(const c)`` with ``c`` a number, fraction ``8/3`` or ``inf``;
``(ind b)`` and ``(arith a)`` where ``b``/``a`` is a variable, a literal, or a
quoted program expression such as ``"0 <= t && t < 8"``; ``(quadform (r ...) M)``
with ``M`` a matrix literal, ``(diag d ...)`` or ``(outer [v ...])``;
``(add e ...)``, ``(mul e ...)``, ``(scale r e)``, ``(max e e)``, ``(min e e)``;
and ``(kappa)``, a placeholder for a continuation in summaries and invariants.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NonExpectationError, ParseError, WellFormednessError
from .state import MachineState, apply_unitary, eval_expr, haar_vector, make_state
from .syntax import (BinOp, BoolLit, Expr, Not, Num, Stmt, Var, VarSets, assigned_vars,
                     expr_vars, has_measurement, parse_expr, parse_matrix, parse_vector, pretty_expr,
                     touched_regs)

NEG_TOL = 1e-9
HERM_TOL = 1e-9


class Expectation:
    """Base class; instances are callable on machine states."""

    def __call__(self, st: MachineState) -> float:
        v = self.value(st)
        if v < 0:
            if v < -NEG_TOL:
                raise NonExpectationError(f"expectation {to_sexpr(self)} is {v} < 0")
            return 0.0
        return v

    def value(self, st: MachineState) -> float:
        raise NotImplementedError

    def __str__(self):
        return to_sexpr(self)


def _num(x) -> float:
    return float(x)


@dataclass(frozen=True)
class Const(Expectation):
    c: object  # Fraction, int, float or math.inf

    def __post_init__(self):
        if float(self.c) < 0:
            raise WellFormednessError("constant expectations must be non-negative")

    def value(self, st):
        return _num(self.c)


@dataclass(frozen=True)
class Ind(Expectation):
    """Indicator of a Boolean program expression."""

    b: Expr

    def value(self, st):
        return 1.0 if eval_expr(self.b, st.store) else 0.0


_warned_clamp = False


@dataclass(frozen=True)
class Arith(Expectation):
    """Integer program expression, clamped at zero."""

    a: Expr

    def value(self, st):
        v = eval_expr(self.a, st.store)
        if v < 0:
            global _warned_clamp
            if not _warned_clamp:
                warnings.warn(f"arithmetic expectation {pretty_expr(self.a)} was negative "
                              f"and has been clamped to 0", stacklevel=2)
                _warned_clamp = True
            return 0.0
        return float(v)


@dataclass(frozen=True, eq=False)
class QuadForm(Expectation):
    """``<φ|(Q ⊗ I)|φ>`` for a Hermitian ``Q`` on the listed registers."""

    regs: tuple
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise WellFormednessError("quadform matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > HERM_TOL:
            raise WellFormednessError("quadform matrix must be Hermitian")
        if len(set(self.regs)) != len(self.regs):
            raise WellFormednessError("quadform registers must be distinct")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "regs", tuple(self.regs))

    def __eq__(self, other):
        return (isinstance(other, QuadForm) and self.regs == other.regs
                and self.matrix.shape == other.matrix.shape
                and bool(np.all(self.matrix == other.matrix)))

    def __hash__(self):
        return hash((self.regs, self.matrix.tobytes()))

    def value(self, st):
        lay = st.layout
        axes = [lay.axis(r) for r in self.regs]
        qphi = apply_unitary(self.matrix, axes, lay.dims, st.amps)
        return float(np.vdot(st.amps, qphi).real)


@dataclass(frozen=True)
class Add(Expectation):
    terms: tuple

    def value(self, st):
        return math.fsum(t.value(st) for t in self.terms) if self.terms else 0.0


@dataclass(frozen=True)
class Mul(Expectation):
    factors: tuple

    def value(self, st):
        out = 1.0
        for f in self.factors:
            v = f.value(st)
            if v == 0:
                return 0.0  # 0·∞ = 0
            out *= v
        return out


@dataclass(frozen=True)
class Scale(Expectation):
    r: object
    e: Expectation

    def __post_init__(self):
        if float(self.r) < 0:
            raise WellFormednessError("scale factor must be non-negative")

    def value(self, st):
        r = _num(self.r)
        return 0.0 if r == 0 else r * self.e.value(st)


@dataclass(frozen=True)
class Max(Expectation):
    a: Expectation
    b: Expectation

    def value(self, st):
        return max(self.a.value(st), self.b.value(st))


@dataclass(frozen=True)
class Min(Expectation):
    a: Expectation
    b: Expectation

    def value(self, st):
        return min(self.a.value(st), self.b.value(st))


@dataclass(frozen=True)
class Kappa(Expectation):
    """Placeholder for an arbitrary continuation."""

    def value(self, st):
        raise WellFormednessError("(kappa) must be instantiated before evaluation")


@dataclass(frozen=True, eq=False)
class Fn(Expectation):
    """Wraps a Python callable (engine-internal continuations)."""

    fn: object
    label: str = "fn"

    def value(self, st):
        return float(self.fn(st))


ZERO = Const(0)
ONE = Const(1)


def children(e: Expectation) -> tuple:
    if isinstance(e, (Add,)):
        return e.terms
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Scale):
        return (e.e,)
    if isinstance(e, (Max, Min)):
        return (e.a, e.b)
    return ()


def nodes(e: Expectation):
    yield e
    for c in children(e):
        yield from nodes(c)


def rebuild(e: Expectation, kids: tuple) -> Expectation:
    if isinstance(e, Add):
        return Add(tuple(kids))
    if isinstance(e, Mul):
        return Mul(tuple(kids))
    if isinstance(e, Scale):
        return Scale(e.r, kids[0])
    if isinstance(e, Max):
        return Max(*kids)
    if isinstance(e, Min):
        return Min(*kids)
    return e


def instantiate(e: Expectation, kappa: Expectation) -> Expectation:
    """Replace every ``(kappa)`` placeholder by ``kappa``."""
    if isinstance(e, Kappa):
        return kappa
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, tuple(instantiate(k, kappa) for k in kids))


def has_kappa(e: Expectation) -> bool:
    return any(isinstance(n, Kappa) for n in nodes(e))


def classical_vars(e: Expectation) -> set:
    out = set()
    for n in nodes(e):
        if isinstance(n, Ind):
            out |= expr_vars(n.b)
        elif isinstance(n, Arith):
            out |= expr_vars(n.a)
    return out


def quantum_regs(e: Expectation) -> set:
    out = set()
    for n in nodes(e):
        if isinstance(n, QuadForm):
            out.update(n.regs)
    return out


def classical_check(e: Expectation) -> bool:
    """True when ``e`` contains no quadratic form (hence ignores the quantum state)."""
    return not any(isinstance(n, (QuadForm, Fn)) for n in nodes(e))


def independence_check(e: Expectation, stm: Stmt) -> bool:
    """Syntactic sufficient condition for ``e`` being unaffected by ``stm``.

    ``e`` must not mention variables assigned or registers touched by ``stm``.
    A quadratic form additionally requires ``stm`` to perform no measurement,
    since measuring one register changes forms over registers entangled with it.
    """
    if any(isinstance(n, (Fn, Kappa)) for n in nodes(e)):
        return False
    if classical_vars(e) & assigned_vars(stm):
        return False
    regs = quantum_regs(e)
    if regs and (regs & touched_regs(stm) or has_measurement(stm)):
        return False
    return True


def validate_expectation(e: Expectation, vs: VarSets) -> None:
    """Raise unless every name in ``e`` is declared with the right kind."""
    bools, ints, dims = set(vs.bools), set(vs.ints), vs.reg_dims
    for n in nodes(e):
        if isinstance(n, (Ind, Arith)):
            expr = n.b if isinstance(n, Ind) else n.a
            for v in expr_vars(expr):
                if v not in bools and v not in ints:
                    raise WellFormednessError(f"unknown classical variable {v!r} in expectation")
        elif isinstance(n, QuadForm):
            total = 1
            for r in n.regs:
                if r not in dims:
                    raise WellFormednessError(f"unknown register {r!r} in expectation")
                total *= dims[r]
            if n.matrix.shape[0] != total:
                raise WellFormednessError(f"quadform matrix of size {n.matrix.shape[0]} on "
                                          f"registers of total dimension {total}")


# ---------------------------------------------------------------------------
# rewrite-based substitution (an independent evaluator for f[x := e])


def _subst_expr(e: Expr, x: str, by: Expr) -> Expr:
    if isinstance(e, Var):
        return by if e.name == x else e
    if isinstance(e, BinOp):
        return BinOp(e.op, _subst_expr(e.left, x, by), _subst_expr(e.right, x, by))
    if isinstance(e, Not):
        return Not(_subst_expr(e.operand, x, by))
    return e


def substitute(f: Expectation, x: str, by: Expr) -> Expectation:
    """Syntactic ``f[x := by]``."""
    if isinstance(f, Ind):
        return Ind(_subst_expr(f.b, x, by))
    if isinstance(f, Arith):
        return Arith(_subst_expr(f.a, x, by))
    kids = children(f)
    if not kids:
        return f
    return rebuild(f, tuple(substitute(k, x, by) for k in kids))


# ---------------------------------------------------------------------------
# s-expression reader and printer

_SX_TOKEN = re.compile(r'\s*(?:(;[^\n]*)|(\()|(\))|("(?:[^"\\]|\\.)*")|(\[)|([^\s()\[\]"]+))')


@dataclass
class _Raw:
    """A bracketed matrix or vector literal kept as text."""

    text: str


def read_sexprs(text: str) -> list:
    """Read all s-expressions in ``text`` into nested Python lists of atoms."""
    pos = 0
    stack: list = [[]]
    line_of = lambda p: text.count("\n", 0, p) + 1  # noqa: E731
    while pos < len(text):
        m = _SX_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {text[pos]!r}", line_of(pos), None)
        comment, lp, rp, string, lb, atom = m.groups()
        if lp:
            stack.append([])
        elif rp:
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line_of(pos), None)
            done = stack.pop()
            stack[-1].append(done)
        elif string:
            stack[-1].append(("str", string[1:-1]))
        elif lb:
            start = m.start(5)
            depth, j = 0, start
            while j < len(text):
                if text[j] == "[":
                    depth += 1
                elif text[j] == "]":
                    depth -= 1
                    if depth == 0:
                        break
                j += 1
            if depth:
                raise ParseError("unbalanced '['", line_of(start), None)
            stack[-1].append(_Raw(text[start:j + 1]))
            pos = j + 1
            continue
        elif atom:
            stack[-1].append(atom)
        pos = m.end()
    if len(stack) != 1:
        raise ParseError("unbalanced '(' at end of input", line_of(len(text)), None)
    return stack[0]


def parse_number(tok) -> object:
    if not isinstance(tok, str):
        raise ParseError(f"expected a number, found {tok!r}")
    if tok in ("inf", "+inf", "oo"):
        return math.inf
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"bad number {tok!r}") from None


def _prog_expr(tok, decls) -> Expr:
    if isinstance(tok, tuple) and tok[0] == "str":
        return parse_expr(tok[1], decls)
    if isinstance(tok, str):
        return parse_expr(tok, decls)
    raise ParseError(f"expected a program expression, found {tok!r}")


def _matrix(tok) -> np.ndarray:
    if isinstance(tok, _Raw):
        return parse_matrix(tok.text)
    if isinstance(tok, list) and tok and tok[0] == "diag":
        return np.diag([complex(float(parse_number(t))) for t in tok[1:]])
    if isinstance(tok, list) and tok and tok[0] == "outer" and len(tok) == 2:
        if not isinstance(tok[1], _Raw):
            raise ParseError("outer expects a vector literal")
        v = parse_vector(tok[1].text)
        return np.outer(v, v.conj())
    raise ParseError(f"expected a matrix, found {tok!r}")


def from_sexpr(sx, decls: dict | None = None) -> Expectation:
    """Build an expectation from an already-read s-expression."""
    if isinstance(sx, str):
        return Const(parse_number(sx))
    if not isinstance(sx, list) or not sx or not isinstance(sx[0], str):
        raise ParseError(f"malformed expectation {sx!r}")
    head, args = sx[0], sx[1:]

    def arity(k):
        if len(args) != k:
            raise ParseError(f"({head} ...) expects {k} argument(s), got {len(args)}")

    if head == "const":
        arity(1)
        return Const(parse_number(args[0]))
    if head == "ind":
        arity(1)
        return Ind(_prog_expr(args[0], decls))
    if head == "arith":
        arity(1)
        return Arith(_prog_expr(args[0], decls))
    if head == "quadform":
        arity(2)
        regs = args[0]
        if isinstance(regs, str):
            regs = [regs]
        if not all(isinstance(r, str) for r in regs):
            raise ParseError("quadform expects a register list")
        return QuadForm(tuple(regs), _matrix(args[1]))
    if head in ("add", "mul"):
        kids = tuple(from_sexpr(a, decls) for a in args)
        return Add(kids) if head == "add" else Mul(kids)
    if head == "scale":
        arity(2)
        return Scale(parse_number(args[0]), from_sexpr(args[1], decls))
    if head in ("max", "min"):
        arity(2)
        a, b = (from_sexpr(x, decls) for x in args)
        return Max(a, b) if head == "max" else Min(a, b)
    if head == "kappa":
        arity(0)
        return Kappa()
    raise ParseError(f"unknown expectation form {head!r}")


def parse_expectation(text: str, decls: dict | None = None) -> Expectation:
    items = read_sexprs(text)
    if len(items) != 1:
        raise ParseError(f"expected one expectation, found {len(items)}")
    return from_sexpr(items[0], decls)


def _fmt_num(c) -> str:
    if c == math.inf:
        return "inf"
    if isinstance(c, Fraction):
        return str(c)
    if isinstance(c, float) and c.is_integer():
        return str(int(c))
    return repr(c) if isinstance(c, float) else str(c)


def _fmt_matrix(m: np.ndarray) -> str:
    def z(x):
        x = complex(x)
        if x.imag == 0:
            return repr(x.real)
        sign = "+" if x.imag >= 0 else "-"
        return f"{x.real!r}{sign}{abs(x.imag)!r}i"
    return "[" + ", ".join("[" + ", ".join(z(x) for x in row) + "]" for row in m) + "]"


def to_sexpr(e: Expectation) -> str:
    if isinstance(e, Const):
        return f"(const {_fmt_num(e.c)})"
    if isinstance(e, Ind):
        return f'(ind "{pretty_expr(e.b)}")'
    if isinstance(e, Arith):
        return f'(arith "{pretty_expr(e.a)}")'
    if isinstance(e, QuadForm):
        return f"(quadform ({' '.join(e.regs)}) {_fmt_matrix(e.matrix)})"
    if isinstance(e, Add):
        return "(add " + " ".join(map(to_sexpr, e.terms)) + ")"
    if isinstance(e, Mul):
        return "(mul " + " ".join(map(to_sexpr, e.factors)) + ")"
    if isinstance(e, Scale):
        return f"(scale {_fmt_num(e.r)} {to_sexpr(e.e)})"
    if isinstance(e, Max):
        return f"(max {to_sexpr(e.a)} {to_sexpr(e.b)})"
    if isinstance(e, Min):
        return f"(min {to_sexpr(e.a)} {to_sexpr(e.b)})"
    if isinstance(e, Kappa):
        return "(kappa)"
    if isinstance(e, Fn):
        return f"<{e.label}>"
    raise TypeError(f"not an expectation: {e!r}")


def as_expectation(f) -> Expectation:
    """Accept an :class:`Expectation`, a number, or a callable on states."""
    if isinstance(f, Expectation):
        return f
    if isinstance(f, (int, float, Fraction)):
        return Const(f)
    if callable(f):
        return Fn(f)
    raise TypeError(f"cannot use {f!r} as an expectation")


# ---------------------------------------------------------------------------
# state suites


@dataclass
class StateSuite:
    """Fixture states followed by seeded random states."""

    states: list
    seed: int | None = None
    n_fixtures: int = 0

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @classmethod
    def generate(cls, vs: VarSets, n: int = 200, seed: int = 0, fixtures=(),
                 int_range: tuple = (-3, 12), fixed: dict | None = None,
                 ranges: dict | None = None, quantum: str = "haar") -> "StateSuite":
        """``n`` random states after ``fixtures``.

        Booleans are uniform on {0, 1}; integers uniform on ``int_range``
        (inclusive, per-variable overrides in ``ranges``); amplitude vectors are
        Haar-random, or basis vectors when ``quantum="basis"``.  Variables in
        ``fixed`` keep the given value.
        """
        rng = np.random.default_rng(seed)
        fixed = fixed or {}
        ranges = ranges or {}
        dim = int(np.prod([d for _, d in vs.qregs])) if vs.qregs else 1
        out = list(fixtures)
        for _ in range(n):
            store = {}
            for b in vs.bools:
                store[b] = int(rng.integers(0, 2))
            for v in vs.ints:
                lo, hi = ranges.get(v, int_range)
                store[v] = int(rng.integers(lo, hi + 1))
            store.update(fixed)
            if quantum == "basis":
                amps = np.zeros(dim, dtype=complex)
                amps[int(rng.integers(0, dim))] = 1.0
            else:
                amps = haar_vector(dim, rng)
            out.append(make_state(vs, store, amps))
        return cls(out, seed, len(fixtures))
