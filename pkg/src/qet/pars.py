"""Forward cost-annotated reduction semantics.

A running configuration holds a stack of statements still to execute; a
sequence ``a; b`` is the stack ``(a, b)``, so sequencing costs no extra step,
exactly as in the rule that lifts a step of ``a`` to ``a; b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import TruncationError
from .state import MachineState, eval_expr
from .syntax import (ApplyU, Assign, Consume, If, Measure, MeasureZero, Seq, Skip,
                     Stmt, Summarized, While, seq)

DEFAULT_BRANCH_CAP = 1_000_000
DEFAULT_CEILING = 1e12


@dataclass(frozen=True, eq=False)
class Running:
    stack: tuple
    state: MachineState

    @classmethod
    def of(cls, stmt: Stmt, state: MachineState) -> "Running":
        return cls((stmt,), state)

    @property
    def stmt(self) -> Stmt:
        return seq(*self.stack)

    def key(self) -> tuple:
        return (tuple(map(id, self.stack)), self.state.key())


@dataclass(frozen=True, eq=False)
class Terminal:
    state: MachineState

    def key(self) -> tuple:
        return (None, self.state.key())


Config = Running | Terminal


def _unfold(stack: tuple) -> tuple:
    """Expose the first basic statement: ``(a; b), rest`` becomes ``a, b, rest``."""
    while isinstance(stack[0], (Seq, Summarized)):
        top = stack[0]
        if isinstance(top, Seq):
            stack = (top.first, top.second) + stack[1:]
        else:
            stack = (top.body,) + stack[1:]
    return stack


def _after(stack_rest: tuple, state: MachineState) -> Config:
    return Running(stack_rest, state) if stack_rest else Terminal(state)


def step(cfg: Running) -> tuple:
    """One reduction step: ``(cost, [(prob, config), ...])``."""
    if not isinstance(cfg, Running):
        raise TypeError("only running configurations step")
    stack = _unfold(cfg.stack)
    s, rest, st = stack[0], stack[1:], cfg.state
    if isinstance(s, Skip):
        return 0.0, [(1.0, _after(rest, st))]
    if isinstance(s, Assign):
        return 0.0, [(1.0, _after(rest, st.assign(s.target, eval_expr(s.expr, st.store))))]
    if isinstance(s, ApplyU):
        return 0.0, [(1.0, _after(rest, st.apply(s.gate, s.regs)))]
    if isinstance(s, (Measure, MeasureZero)):
        branches = st.measure(s.reg, s.target, zero_test=isinstance(s, MeasureZero))
        return 0.0, [(p, _after(rest, post)) for p, post in branches]
    if isinstance(s, Consume):
        return float(max(eval_expr(s.expr, st.store), 0)), [(1.0, _after(rest, st))]
    if isinstance(s, If):
        branch = s.then if eval_expr(s.cond, st.store) else s.orelse
        return 0.0, [(1.0, Running((branch,) + rest, st))]
    if isinstance(s, While):
        if eval_expr(s.cond, st.store):
            return 0.0, [(1.0, Running((s.body, s) + rest, st))]
        return 0.0, [(1.0, _after(rest, st))]
    raise TypeError(f"not a core statement: {s!r}")


class _MemoStep:
    """``step`` memoized on configuration keys, with equal amplitude vectors
    stored once.  Reachable configurations recur (loops reset registers), so
    most steps become lookups."""

    MAX_ENTRIES = 200_000

    def __init__(self):
        self.memo: dict = {}
        self.vectors: dict = {}

    def _intern(self, out: Config) -> Config:
        st = out.state
        ak = st.amps_key()
        shared = self.vectors.setdefault(ak, st.amps)
        if shared is st.amps:
            return out
        st = MachineState(st.store, shared, st.layout, ak)
        return Running(out.stack, st) if isinstance(out, Running) else Terminal(st)

    def __call__(self, cfg: Running) -> tuple:
        key = cfg.key()
        hit = self.memo.get(key)
        if hit is None:
            c, branches = step(cfg)
            hit = (c, [(p, self._intern(out)) for p, out in branches])
            if len(self.memo) >= self.MAX_ENTRIES:
                self.memo.clear()
            self.memo[key] = hit
        return hit


@dataclass
class ExpansionReport:
    steps: int
    cost: float
    terminal: list  # [(weight, MachineState)]
    running: list  # [(weight, Running)]
    truncated: bool = False
    dropped_mass: float = 0.0
    costs_per_step: list = field(default_factory=list)

    @property
    def terminal_mass(self) -> float:
        return math.fsum(w for w, _ in self.terminal)

    @property
    def residual_mass(self) -> float:
        return math.fsum(w for w, _ in self.running)


def _as_config(x) -> Config:
    return Terminal(x) if isinstance(x, MachineState) else x


def expand(dist, n: int, branch_cap: int = DEFAULT_BRANCH_CAP, strict: bool = False,
           on_step: Callable | None = None) -> ExpansionReport:
    """Apply the lifted reduction ``n`` times to a subdistribution.

    ``dist`` is a config, a state, or a list of ``(weight, config)``.  Equal
    configurations are merged.  If more than ``branch_cap`` running branches
    appear, the lightest are dropped and the report is marked truncated (or
    :class:`TruncationError` is raised when ``strict``); the cost is then
    still a lower bound.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if not isinstance(dist, list):
        dist = [(1.0, dist)]
    terminal: dict = {}
    running: dict = {}
    for w, c in dist:
        c = _as_config(c)
        bucket = terminal if isinstance(c, Terminal) else running
        k = c.key()
        if k in bucket:
            bucket[k][0] += w
        else:
            bucket[k] = [w, c]
    stepper = _MemoStep()
    cost = 0.0
    truncated = False
    dropped = 0.0
    per_step = []
    steps_done = 0
    for _ in range(n):
        if not running:
            break
        nxt: dict = {}
        step_cost = 0.0
        for w, cfg in running.values():
            c, branches = stepper(cfg)
            if c:
                step_cost += w * c
            for p, out in branches:
                wp = w * p
                k = out.key()
                bucket = terminal if isinstance(out, Terminal) else nxt
                if k in bucket:
                    bucket[k][0] += wp
                else:
                    bucket[k] = [wp, out]
        if len(nxt) > branch_cap:
            if strict:
                raise TruncationError(f"{len(nxt)} branches exceed the cap of {branch_cap}")
            order = sorted(nxt, key=lambda k: -nxt[k][0])
            for k in order[branch_cap:]:
                dropped += nxt.pop(k)[0]
            truncated = True
        cost += step_cost
        per_step.append(step_cost)
        running = nxt
        steps_done += 1
    return ExpansionReport(n, cost,
                           [(w, c.state) for w, c in terminal.values()],
                           [(w, c) for w, c in running.values()],
                           truncated, dropped, per_step)


def ecost_approx(cfg, n: int, branch_cap: int = DEFAULT_BRANCH_CAP,
                 ceiling: float = DEFAULT_CEILING) -> tuple:
    """``(ecost^[n], terminal_mass)``: expected cost accumulated in ``n`` steps."""
    rep = expand(cfg, n, branch_cap)
    cost = math.inf if rep.cost > ceiling else rep.cost
    return cost, rep.terminal_mass


def nf_approx(cfg, n: int, branch_cap: int = DEFAULT_BRANCH_CAP) -> list:
    """``nf^[n]``: terminal subdistribution reached within ``n − 1`` steps
    (empty for ``n = 0``)."""
    if n == 0:
        return []
    return expand(cfg, n - 1, branch_cap).terminal


def expected_value_approx(cfg, f: Callable, n: int,
                          branch_cap: int = DEFAULT_BRANCH_CAP) -> float:
    """Expected value of ``f`` over ``nf^[n](cfg)``."""
    return math.fsum(w * f(st) if w else 0.0 for w, st in nf_approx(cfg, n, branch_cap))
