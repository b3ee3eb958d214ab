"""Backward expectation transformer, generic over cost structures.

``transform(stmt, k, ctx)`` turns a continuation ``k`` (a callable from
states to elements of the cost structure) into the continuation of
``stmt; ...``.  Loop-free code is evaluated exactly by structural recursion;
loops are solved by Kleene iteration from ``⊥`` over the states the
evaluation actually reaches.
"""
from __future__ import annotations

import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .costs import DENOT, ECOST, VALUE, WP, CostStructure, DensityCost, DensityMap
from .errors import ChainViolation, DimensionError, QetError
from .expectations import as_expectation
from .pars import Running, Terminal, step
from .state import MachineState, eval_expr
from .syntax import (ApplyU, Assign, Consume, If, Measure, MeasureZero, Seq, Skip, Stmt,
                     Summarized, While, is_loop_free)

DENOT_DIM_CAP = 2 ** 10
TABLE_CAP = 200_000


class Status(str, Enum):
    EXACT = "Exact"
    CONVERGED = "ConvergedLowerBound"
    ITERATION_CAP = "IterationCapLowerBound"
    DIVERGENT = "Divergent"


_RANK = {Status.EXACT: 0, Status.CONVERGED: 1, Status.ITERATION_CAP: 2, Status.DIVERGENT: 3}


@dataclass(frozen=True)
class FixpointCfg:
    max_iter: int = 10_000
    tol: float = 1e-9
    ceiling: float = 1e12

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class WpResult:
    value: object
    status: Status
    rounds: int = 0

    @property
    def is_lower_bound(self) -> bool:
        return self.status in (Status.CONVERGED, Status.ITERATION_CAP)


@dataclass
class Ctx:
    """Evaluation context shared by all continuations of one evaluation."""

    cs: CostStructure = ECOST
    cfg: FixpointCfg = field(default_factory=FixpointCfg)
    loop_handler: Callable | None = None  # (While, k, ctx) -> continuation
    summary_handler: Callable | None = None  # (Summarized, k, ctx) -> continuation
    status: Status = Status.EXACT
    rounds: int = 0
    check_chain: bool = True

    def note(self, status: Status) -> None:
        if _RANK[status] > _RANK[self.status]:
            self.status = status


_MISSING = object()


class Cont:
    """A continuation memoized on the state key."""

    __slots__ = ("fn", "memo")

    def __init__(self, fn: Callable):
        self.fn = fn
        self.memo: dict = {}

    def __call__(self, st: MachineState):
        key = st.key()
        v = self.memo.get(key, _MISSING)
        if v is _MISSING:
            v = self.fn(st)
            self.memo[key] = v
        return v


def expect_branches(cs: CostStructure, pairs) -> object:
    """Convex combination of at most two branch values with weights summing to one."""
    if len(pairs) == 1:
        return pairs[0][1]
    (p0, v0), (_, v1) = pairs
    return cs.convex(p0, v0, v1)


@contextmanager
def deep_recursion(limit: int = 20_000):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def transform(stmt: Stmt, k: Callable, ctx: Ctx) -> Callable:
    """Continuation for ``stmt`` followed by ``k``."""
    cs = ctx.cs
    if isinstance(stmt, Skip):
        return k
    if isinstance(stmt, Seq):
        return transform(stmt.first, transform(stmt.second, k, ctx), ctx)
    if isinstance(stmt, Assign):
        x, e = stmt.target, stmt.expr
        return Cont(lambda st: k(st.assign(x, eval_expr(e, st.store))))
    if isinstance(stmt, ApplyU):
        gate, regs = stmt.gate, stmt.regs
        return Cont(lambda st: k(st.apply(gate, regs)))
    if isinstance(stmt, (Measure, MeasureZero)):
        zt = isinstance(stmt, MeasureZero)
        reg, x = stmt.reg, stmt.target
        return Cont(lambda st: expect_branches(
            cs, [(p, k(post)) for p, post in st.measure(reg, x, zero_test=zt)]))
    if isinstance(stmt, Consume):
        e = stmt.expr
        return Cont(lambda st: cs.cost_add(float(max(eval_expr(e, st.store), 0)), k(st)))
    if isinstance(stmt, If):
        then_k = transform(stmt.then, k, ctx)
        else_k = transform(stmt.orelse, k, ctx)
        b = stmt.cond
        return Cont(lambda st: then_k(st) if eval_expr(b, st.store) else else_k(st))
    if isinstance(stmt, While):
        if ctx.loop_handler is not None:
            return ctx.loop_handler(stmt, k, ctx)
        return LoopSolver(stmt, k, ctx)
    if isinstance(stmt, Summarized):
        if ctx.summary_handler is not None:
            return ctx.summary_handler(stmt, k, ctx)
        return transform(stmt.body, k, ctx)
    raise QetError(f"cannot transform {type(stmt).__name__}; expand macros first")


class LoopSolver:
    """Kleene iteration ``F ↦ qet[body]{F} +_{⟦b⟧} k`` on reached states.

    Every known state starts at ``⊥``; each round re-evaluates all of them
    against the previous round's table, adding any newly reached loop-head
    states.  Iteration stops when no state is new and no value moved by more
    than ``tol``, when ``max_iter`` rounds have run, or when a value passes
    the divergence ceiling.
    """

    def __init__(self, loop: While, k: Callable, ctx: Ctx):
        self.loop, self.k, self.ctx = loop, k, ctx
        self.states: dict = {}  # key -> state
        self.values: dict = {}  # key -> value
        self.exit_values: dict = {}
        self.pending: dict = {}
        self.frozen: set = set()
        self.status = Status.CONVERGED

    def __call__(self, st: MachineState):
        key = st.key()
        if key not in self.states:
            self.pending[key] = st
            self._solve()
        return self.values[key]

    def _admit_pending(self) -> bool:
        if not self.pending:
            return False
        bot = self.ctx.cs.bot()
        for key, st in self.pending.items():
            if key not in self.states:
                self.states[key] = st
                self.values[key] = bot
        self.pending = {}
        if len(self.states) > TABLE_CAP:
            raise QetError(f"loop visits more than {TABLE_CAP} distinct states")
        return True

    def _solve(self) -> None:
        ctx, cs, cfg = self.ctx, self.ctx.cs, self.ctx.cfg
        b = self.loop.cond
        rounds = 0
        self._admit_pending()
        while True:
            prev = dict(self.values)
            bot = cs.bot()

            def lookup(st, prev=prev):
                key = st.key()
                if key in prev:
                    return prev[key]
                if key not in self.states:
                    self.pending[key] = st
                return bot

            body_k = transform(self.loop.body, Cont(lookup), ctx)
            delta = 0.0
            for key, st in self.states.items():
                if key in self.frozen:
                    continue
                if eval_expr(b, st.store):
                    new = body_k(st)
                else:
                    if key not in self.exit_values:
                        self.exit_values[key] = self.k(st)
                    new = self.exit_values[key]
                old = prev[key]
                if ctx.check_chain and not cs.leq(old, new, cfg.tol):
                    raise ChainViolation(f"loop iterate decreased from {old} to {new}")
                if cs.exceeds(new, cfg.ceiling):
                    new = cs.top_like(new)
                    self.frozen.add(key)
                    self.status = Status.DIVERGENT
                    ctx.note(Status.DIVERGENT)
                delta = max(delta, cs.distance(old, new))
                self.values[key] = new
            rounds += 1
            ctx.rounds = max(ctx.rounds, rounds)
            grew = self._admit_pending()
            if not grew and delta <= cfg.tol:
                break
            if rounds >= cfg.max_iter:
                # newly admitted states have had no update; one more round is not
                # allowed, so they stay at bottom (still a lower bound)
                if self.status != Status.DIVERGENT:
                    self.status = Status.ITERATION_CAP
                ctx.note(self.status)
                return
        ctx.note(self.status)


# ---------------------------------------------------------------------------
# public entry points


def _continuation_of(f, cs: CostStructure) -> Callable:
    if isinstance(cs, DensityCost):
        return f
    return as_expectation(f)


def wp_transformer(stm: Stmt, f, cs: CostStructure = ECOST, cfg: FixpointCfg | None = None,
                   **handlers) -> tuple:
    """``(continuation, ctx)`` computing ``qet[stm]{f}`` at any state."""
    ctx = Ctx(cs, cfg or FixpointCfg(), **handlers)
    k = _continuation_of(f, cs)
    return transform(stm, k, ctx), ctx


def wp_eval(stm: Stmt, f, st: MachineState, cfg: FixpointCfg | None = None,
            cs: CostStructure = ECOST, **handlers) -> WpResult:
    """``qet[stm]{f}(st)`` with a status saying whether it is exact or a lower bound."""
    with deep_recursion():
        cont, ctx = wp_transformer(stm, f, cs, cfg, **handlers)
        value = cont(st)
    status = ctx.status
    if status == Status.EXACT and not is_loop_free(stm) and ctx.loop_handler is None:
        status = Status.CONVERGED  # loops that were never entered still count
    return WpResult(value, status, ctx.rounds)


def qect(stm, f, st, cfg=None, **kw) -> WpResult:
    return wp_eval(stm, f, st, cfg, ECOST, **kw)


def qev(stm, f, st, cfg=None, **kw) -> WpResult:
    return wp_eval(stm, f, st, cfg, VALUE, **kw)


def qwp(stm, f, st, cfg=None, **kw) -> WpResult:
    """Weakest-precondition instance: ``f`` must take values in [0, 1]."""
    g = as_expectation(f)

    def checked(s):
        return WP.check(g(s))

    res = wp_eval(stm, checked, st, cfg, WP, **kw)
    WP.check(res.value)
    return res


def wp_step_indexed(cfg0, f, n: int, cs: CostStructure = ECOST) -> object:
    """Step-indexed approximant: ``⊥`` at ``n = 0``, ``f(σ)`` on a terminal
    state, and ``c +̂ E_δ[QET^(n−1)]`` for one forward step ``μ → (c, δ)``."""
    if isinstance(cfg0, MachineState):
        cfg0 = Terminal(cfg0)
    k = _continuation_of(f, cs)
    memo: dict = {}

    def go(cfg, m):
        key = (cfg.key(), m)
        if key in memo:
            return memo[key]
        if m == 0:
            v = cs.bot()
        elif isinstance(cfg, Terminal):
            v = k(cfg.state)
        else:
            c, branches = step(cfg)
            v = cs.cost_add(c, expect_branches(cs, [(p, go(nxt, m - 1)) for p, nxt in branches]))
        memo[key] = v
        return v

    with deep_recursion(max(20_000, 10 * n)):
        return go(cfg0, n)


def denot_continuation(st: MachineState) -> DensityMap:
    """``h(σ)``: singleton map at the classical store valued ``|φ><φ|``."""
    return DensityMap.singleton(classical_key(st), st.amps)


def classical_key(st: MachineState) -> tuple:
    """Store split into its Boolean and integer parts (declaration order)."""
    return st.store.split()


def denot_structure(st: MachineState) -> DensityCost:
    dim = st.layout.dim
    if dim > DENOT_DIM_CAP:
        raise DimensionError(f"quantum dimension {dim} exceeds the cap of {DENOT_DIM_CAP}")
    return DensityCost(dim)


def wp_denotational(stm: Stmt, st: MachineState, cfg: FixpointCfg | None = None) -> WpResult:
    """Denotation of ``(stm, st)`` as a density map (Kleene iteration for loops)."""
    return wp_eval(stm, denot_continuation, st, cfg, denot_structure(st))
