"""Checking upper invariants of loops and summaries of sub-statements on
state suites, and composing them into whole-program cost bounds.

A loop ``while (b) { body }`` with continuation ``f`` is bounded by ``g`` when
``⟦¬b⟧·f ≤ g`` and ``⟦b⟧·qet[body]{g} ≤ g``.  Both premises are evaluated
pointwise on a suite of states, so a Pass certifies the bound on the suite
only.

Invariant files hold s-expressions::

    (invariant loop0 (mul (ind x) (const 8/3)))
    (summary fuse (cost 1) (outcome 1/4 ((x 1))) (outcome 3/4 ((x 0))) (scratch y))
    (post (const 0))

Loops outside summaries are labelled ``loop0``, ``loop1``, ... in pre-order;
loops inside a summary block ``L`` are labelled ``L.0``, ``L.1``, ... (and
``L`` alone when there is exactly one).  Invariants and summaries use the
names of the procedure they were written in; each call site renames them.
An invariant may mention ``(kappa)``, which stands for the loop's
continuation.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .costs import ECOST
from .errors import (MissingInvariant, ParseError, QetError, SummaryMisuse, UnsummarizedLoop,
                     WellFormednessError)
from .expectations import (ZERO, Add, Arith, Const, Expectation, Fn, Ind, Kappa, QuadForm,
                           StateSuite, as_expectation, children, classical_check, from_sexpr,
                           instantiate, nodes, parse_number, read_sexprs, rebuild, _prog_expr)
from .state import MachineState, eval_expr, haar_vector
from .syntax import (BinOp, Expr, If, Not, Program, Seq, Stmt, Summarized, Var, While, expr_vars,
                     is_loop_free, is_reset_var, pretty_stmt, walk)
from .transformer import Cont, Ctx, FixpointCfg, deep_recursion, transform

TOL = 1e-9
# continuations handed to a summary are spot-checked for classicality on this
# many evaluations per use site
PROBES_PER_USE = 8


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Outcome:
    prob: Fraction
    updates: tuple  # ((var, Expr), ...) evaluated simultaneously in the pre-state


@dataclass(frozen=True)
class Summary:
    label: str
    cost: Fraction
    outcomes: tuple
    leq: bool = False
    scratch: tuple = ()
    note: str = ""

    def __post_init__(self):
        if self.cost < 0:
            raise WellFormednessError(f"summary {self.label}: cost must be non-negative")
        total = sum(float(o.prob) for o in self.outcomes)
        if abs(total - 1) > 1e-9:
            raise WellFormednessError(f"summary {self.label}: outcome probabilities sum to {total}")


@dataclass
class CheckReport:
    verdict: str  # "Pass" | "Fail"
    residuals: list
    worst_index: int | None
    suite_size: int
    seed: int | None
    label: str = ""
    conditional: bool = False
    kind: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "Pass"

    @property
    def worst(self) -> float:
        return min(self.residuals) if self.residuals else math.inf

    def describe(self) -> str:
        head = f"{self.kind} {self.label}".strip()
        cond = " (conditional)" if self.conditional else ""
        return (f"{head}: {self.verdict} on suite ({self.suite_size} states, seed {self.seed})"
                f"{cond}; worst residual {self.worst:.3g}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "label": self.label, "verdict": self.verdict,
                "conditional": self.conditional, "suite_size": self.suite_size,
                "seed": self.seed, "worst_index": self.worst_index,
                "worst_residual": _json_num(self.worst),
                "residuals": [_json_num(r) for r in self.residuals]}


def _json_num(x):
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return float(x)


def _report(residuals, suite, tol, **kw) -> CheckReport:
    # residuals run over (continuation, state) pairs with the state innermost
    worst = int(np.argmin(residuals)) % len(suite) if residuals else None
    ok = all(r >= -tol for r in residuals)
    return CheckReport("Pass" if ok else "Fail", list(residuals), worst, len(suite),
                       getattr(suite, "seed", None), **kw)


@dataclass
class InvariantFile:
    invariants: dict  # label -> Expectation
    summaries: dict  # label -> Summary
    post: Expectation = ZERO


def parse_invariant_file(text: str) -> InvariantFile:
    invs, sums, post = {}, {}, ZERO
    for item in read_sexprs(text):
        if not isinstance(item, list) or not item or not isinstance(item[0], str):
            raise ParseError(f"malformed entry {item!r}")
        head = item[0]
        if head == "invariant":
            if len(item) != 3:
                raise ParseError("(invariant <label> <expectation>) expected")
            invs[item[1]] = from_sexpr(item[2])
        elif head == "summary":
            sm = _parse_summary(item)
            sums[sm.label] = sm
        elif head == "post":
            if len(item) != 2:
                raise ParseError("(post <expectation>) expected")
            post = from_sexpr(item[1])
        else:
            raise ParseError(f"unknown entry {head!r}")
    return InvariantFile(invs, sums, post)


def _parse_summary(item) -> Summary:
    if len(item) < 2 or not isinstance(item[1], str):
        raise ParseError("(summary <label> ...) expected")
    label = item[1]
    cost, outcomes, leq, scratch, note = Fraction(0), [], False, [], ""
    for clause in item[2:]:
        if not isinstance(clause, list) or not clause:
            raise ParseError(f"summary {label}: malformed clause {clause!r}")
        head = clause[0]
        if head == "cost":
            cost = parse_number(clause[1])
        elif head == "outcome":
            prob = parse_number(clause[1])
            ups = clause[2] if len(clause) > 2 else []
            updates = []
            for u in ups:
                if not isinstance(u, list) or len(u) != 2:
                    raise ParseError(f"summary {label}: update must be (var value)")
                updates.append((u[0], _prog_expr(u[1], None)))
            outcomes.append(Outcome(prob, tuple(updates)))
        elif head == "leq":
            leq = True
        elif head == "scratch":
            scratch.extend(clause[1:])
        elif head == "note":
            note = clause[1][1] if isinstance(clause[1], tuple) else str(clause[1])
        else:
            raise ParseError(f"summary {label}: unknown clause {head!r}")
    if not outcomes:
        outcomes = [Outcome(Fraction(1), ())]
    return Summary(label, cost, tuple(outcomes), leq, tuple(scratch), note)


# ---------------------------------------------------------------------------
# renaming into call-site names


def _rename_prog_expr(e: Expr, ren: Callable) -> Expr:
    if isinstance(e, Var):
        return Var(ren(e.name))
    if isinstance(e, BinOp):
        return BinOp(e.op, _rename_prog_expr(e.left, ren), _rename_prog_expr(e.right, ren))
    if isinstance(e, Not):
        return Not(_rename_prog_expr(e.operand, ren))
    return e


def rename_expectation(e: Expectation, ren: Callable) -> Expectation:
    if isinstance(e, Ind):
        return Ind(_rename_prog_expr(e.b, ren))
    if isinstance(e, Arith):
        return Arith(_rename_prog_expr(e.a, ren))
    if isinstance(e, QuadForm):
        return QuadForm(tuple(ren(r) for r in e.regs), e.matrix)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, tuple(rename_expectation(k, ren) for k in kids))


def _renamer(scope: Summarized | None) -> Callable:
    if scope is None:
        return lambda n: n
    return scope.resolve


# ---------------------------------------------------------------------------
# loop labels


@dataclass
class LoopInfo:
    label: str
    aliases: tuple
    scope: Summarized | None


def label_loops(body: Stmt) -> dict:
    """Map ``id(While)`` to its :class:`LoopInfo`."""
    out: dict = {}
    counter = {"": 0}

    def visit(s, scope: Summarized | None):
        if isinstance(s, Summarized):
            inner = [w for w in _direct_loops(s.body)]
            for i, w in enumerate(inner):
                aliases = (s.name,) if len(inner) == 1 else ()
                out[id(w)] = LoopInfo(f"{s.name}.{i}", aliases, s)
            visit_children(s.body, s)
            return
        if isinstance(s, While) and id(s) not in out:
            out[id(s)] = LoopInfo(f"loop{counter['']}", (), scope)
            counter[""] += 1
        visit_children(s, scope)

    def visit_children(s, scope):
        if isinstance(s, Seq):
            visit(s.first, scope)
            visit(s.second, scope)
        elif isinstance(s, If):
            visit(s.then, scope)
            visit(s.orelse, scope)
        elif isinstance(s, While):
            visit(s.body, scope)
        elif isinstance(s, Summarized):
            visit(s, scope)

    visit(body, None)
    return out


def _direct_loops(s: Stmt) -> list:
    """Loops in ``s`` in pre-order, not descending into nested summaries."""
    if isinstance(s, While):
        return [s] + _direct_loops(s.body)
    if isinstance(s, Seq):
        return _direct_loops(s.first) + _direct_loops(s.second)
    if isinstance(s, If):
        return _direct_loops(s.then) + _direct_loops(s.orelse)
    return []


def summary_nodes(body: Stmt) -> list:
    """Summarized nodes, innermost first (post-order)."""
    out = []

    def visit(s):
        if isinstance(s, Seq):
            visit(s.first)
            visit(s.second)
        elif isinstance(s, If):
            visit(s.then)
            visit(s.orelse)
        elif isinstance(s, While):
            visit(s.body)
        elif isinstance(s, Summarized):
            visit(s.body)
            out.append(s)

    visit(body)
    return out


# ---------------------------------------------------------------------------
# the checker


class Checker:
    """Upper-bound evaluation: loops are replaced by their invariants (after
    checking both premises on the suite for the continuation at hand) and
    summarized blocks by their summaries."""

    def __init__(self, suite, invariants: dict | None = None, summaries: dict | None = None,
                 tol: float = TOL, loop_info: dict | None = None, cfg: FixpointCfg | None = None,
                 probe_seed: int = 12345):
        self.suite = suite
        self.invariants = invariants or {}
        self.summaries = summaries or {}
        self.tol = tol
        self.loop_info = loop_info or {}
        self.cfg = cfg or FixpointCfg()
        self.loop_reports: list = []
        self.verified: dict = {}  # summary cache key -> CheckReport
        self.probe_rng = np.random.default_rng(probe_seed)
        self.misuse: list = []

    # context with handlers
    def ctx(self) -> Ctx:
        return Ctx(ECOST, self.cfg, loop_handler=self._loop, summary_handler=self._summary)

    def upper(self, stmt: Stmt, k) -> Callable:
        return transform(stmt, as_expectation(k) if not callable(k) else k, self.ctx())

    # loops
    def invariant_for(self, loop: While) -> tuple:
        info = self.loop_info.get(id(loop))
        if info is None:
            raise UnsummarizedLoop("loop has no label; was the program relabelled?")
        for name in (info.label,) + info.aliases:
            if name in self.invariants:
                return info, rename_expectation(self.invariants[name], _renamer(info.scope))
        raise MissingInvariant(f"no invariant for loop {info.label}")

    def _loop(self, loop: While, k, ctx) -> Callable:
        info, g_raw = self.invariant_for(loop)
        kfn = k
        g = instantiate(g_raw, Fn(kfn, "continuation"))
        rep = self.check_premises(loop, kfn, g, label=info.label)
        self.loop_reports.append(rep)
        return Cont(g)

    def check_premises(self, loop: While, f, g: Expectation, label: str = "") -> CheckReport:
        body_k = transform(loop.body, g, self.ctx())
        residuals = []
        for st in self.suite:
            gv = g(st)
            if eval_expr(loop.cond, st.store):
                lhs = body_k(st)
            else:
                lhs = f(st)
            residuals.append(gv - lhs if not (gv == math.inf and lhs == math.inf) else 0.0)
        return _report(residuals, self.suite, self.tol, label=label, kind="invariant",
                       conditional=not is_loop_free(loop.body))

    # summaries
    def _summary(self, node: Summarized, k, ctx) -> Callable:
        sm = self.summaries.get(node.name)
        if sm is None:
            if is_loop_free(node.body):
                return transform(node.body, k, ctx)
            raise UnsummarizedLoop(f"summarized block {node.name} contains a loop but has "
                                   f"no summary")
        return Cont(self.apply_summary(node, sm, k))

    def effective_scratch(self, node: Summarized) -> set:
        """Declared scratch variables plus those of nested summaries, whose
        values after the block are likewise left unspecified."""
        sm = self.summaries.get(node.name)
        out = {node.resolve(v) for v in sm.scratch} if sm is not None else set()
        for inner in summary_nodes(node.body):
            out |= self.effective_scratch(inner)
        return out

    def apply_summary(self, node: Summarized, sm: Summary, k) -> Callable:
        ren = node.resolve
        scratch = sorted(self.effective_scratch(node))
        outcomes = [(float(o.prob), [(ren(x), _rename_prog_expr(e, ren)) for x, e in o.updates])
                    for o in sm.outcomes]
        cost = float(sm.cost)
        probes = [0]

        def value(st: MachineState):
            total = cost
            for p, ups in outcomes:
                if p == 0:
                    continue
                vals = [(x, eval_expr(e, st.store)) for x, e in ups]
                post = st
                for x, v in vals:
                    post = post.assign(x, v)
                v = k(post)
                if probes[0] < PROBES_PER_USE:
                    probes[0] += 1
                    self._probe(node, k, post, v, scratch)
                total += p * v
            return total

        return value

    def _probe(self, node, k, st: MachineState, v: float, scratch) -> None:
        """Reject continuations that look at the quantum state or at scratch
        variables, which a summary does not describe."""
        alt = st.with_amps(haar_vector(st.layout.dim, self.probe_rng))
        probes = [alt]
        aux = [n for n in st.store.names if is_reset_var(n)]
        for x in list(scratch) + aux:
            if x in st.store:
                cur = st.store[x]
                probes.append(st.assign(x, 1 - cur if cur in (0, 1) else cur + 1))
        for pr in probes:
            w = k(pr)
            if not (abs(w - v) <= self.tol or (w == v)):
                raise SummaryMisuse(f"summary {node.name} applied to a continuation that depends "
                                    f"on the quantum state or on scratch variables")

    def check_summary(self, stm: Stmt, sm: Summary, node: Summarized | None = None,
                      vs=None) -> CheckReport:
        ren = node.resolve if node is not None else (lambda n: n)
        scratch = {ren(v) for v in sm.scratch}
        for inner in summary_nodes(stm):
            scratch |= self.effective_scratch(inner)
        names = self.suite[0].store.names
        aux = {n for n in names if is_reset_var(n)}
        free = [n for n in names if n not in scratch and n not in aux]
        n_bools = self.suite[0].store.n_bools
        bools = [n for n in free if names.index(n) < n_bools]
        ints = [n for n in free if names.index(n) >= n_bools]
        basis = _basis(bools, ints, free)
        outcomes = [(float(o.prob), [(ren(x), _rename_prog_expr(e, ren)) for x, e in o.updates])
                    for o in sm.outcomes]
        residuals = []
        with deep_recursion():
            for kappa in basis:
                lhs_k = self.upper(stm, kappa)
                for st in self.suite:
                    lhs = lhs_k(st)
                    rhs = float(sm.cost)
                    for p, ups in outcomes:
                        vals = [(x, eval_expr(e, st.store)) for x, e in ups]
                        post = st
                        for x, v in vals:
                            post = post.assign(x, v)
                        rhs += p * kappa(post)
                    r = rhs - lhs
                    residuals.append(r if sm.leq else -abs(r))
        return _report(residuals, self.suite, self.tol, label=sm.label, kind="summary",
                       conditional=not is_loop_free(stm))


def _basis(bools, ints, free) -> list:
    """Classical continuations used to test summaries: constants, indicators,
    integer values and two pseudo-random functions of the free store."""
    basis: list = [Const(0), Const(1)]
    basis += [Ind(Var(b)) for b in bools]
    basis += [Arith(Var(v)) for v in ints]
    basis += [Arith(BinOp("*", Var(v), Var(v))) for v in ints]
    for salt in (b"a", b"b"):
        basis.append(Fn(_hash_fn(tuple(free), salt), f"hash-{salt.decode()}"))
    return basis


def _hash_fn(free: tuple, salt: bytes) -> Callable:
    def f(st: MachineState) -> float:
        data = repr([st.store[n] for n in free]).encode() + salt
        return int.from_bytes(hashlib.sha256(data).digest()[:4], "little") / 2 ** 32
    return f


# ---------------------------------------------------------------------------
# public operations


def check_upper_invariant(loop: While, f, g: Expectation, suite, tol: float = TOL,
                          invariants: dict | None = None, summaries: dict | None = None,
                          program_body: Stmt | None = None) -> CheckReport:
    """Check both premises of the upper-invariant law for ``loop`` on ``suite``.

    Inner loops need invariants (keyed by their labels within
    ``program_body``, or within ``loop`` itself when not given) and
    summarized blocks need summaries; otherwise evaluation is refused.
    """
    f = as_expectation(f)
    g = instantiate(g, f)
    info = label_loops(program_body if program_body is not None else loop)
    ck = Checker(suite, invariants, summaries, tol, info)
    with deep_recursion():
        rep = ck.check_premises(loop, f, g, label=getattr(info.get(id(loop)), "label", ""))
    bad = [r for r in ck.loop_reports if not r.passed]
    if bad:
        rep.verdict = "Fail"
    rep.details["inner"] = [r.describe() for r in ck.loop_reports]
    return rep


def check_summary(stm: Stmt, sm: Summary, suite, tol: float = TOL,
                  invariants: dict | None = None, summaries: dict | None = None,
                  node: Summarized | None = None) -> CheckReport:
    """Check ``qect[stm]{κ} = c + Σ p_i·κ[updates_i]`` (or ``≤`` for inequality
    summaries) for a basis of classical ``κ`` on every suite state.

    A statement with loops is evaluated with their invariants, and the report
    is marked conditional on those.
    """
    info = label_loops(node if node is not None else stm)
    ck = Checker(suite, invariants, summaries, tol, info)
    target = node.body if node is not None else stm
    rep = ck.check_summary(target, sm, node)
    bad = [r for r in ck.loop_reports if not r.passed]
    if bad:
        rep.verdict = "Fail"
    rep.details["inner"] = [r.describe() for r in ck.loop_reports]
    return rep


@dataclass
class BoundReport:
    verdict: str
    bounds: list  # per initial state
    loop_reports: list
    summary_reports: list
    suite_size: int
    seed: int | None
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "Pass"

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "bounds": [_json_num(b) for b in self.bounds],
                "loops": [r.to_json() for r in self.loop_reports],
                "summaries": [r.to_json() for r in self.summary_reports],
                "suite_size": self.suite_size, "seed": self.seed, "message": self.message}


def _canonical(node: Summarized) -> str:
    """Body text in procedure names, so equal call sites are verified once."""
    inverse = {}
    for k, v in node.renaming:
        inverse.setdefault(v, k)
    return node.name + "\n" + pretty_stmt(_rename_stmt_names(node.body, inverse))


def _rename_stmt_names(s: Stmt, inv: dict) -> Stmt:
    from .syntax import (ApplyU, Assign, Consume, Measure, MeasureZero, Skip)
    r = lambda n: inv.get(n, n)  # noqa: E731
    ren = lambda e: _rename_prog_expr(e, r)  # noqa: E731
    if isinstance(s, Skip):
        return s
    if isinstance(s, Assign):
        return Assign(r(s.target), ren(s.expr))
    if isinstance(s, ApplyU):
        return ApplyU(tuple(r(q) for q in s.regs), s.gate)
    if isinstance(s, Measure):
        return Measure(r(s.target), r(s.reg))
    if isinstance(s, MeasureZero):
        return MeasureZero(r(s.target), r(s.reg))
    if isinstance(s, Consume):
        return Consume(ren(s.expr))
    if isinstance(s, Seq):
        return Seq(_rename_stmt_names(s.first, inv), _rename_stmt_names(s.second, inv))
    if isinstance(s, If):
        return If(ren(s.cond), _rename_stmt_names(s.then, inv), _rename_stmt_names(s.orelse, inv))
    if isinstance(s, While):
        return While(ren(s.cond), _rename_stmt_names(s.body, inv))
    if isinstance(s, Summarized):
        # locals of a nested block are per-site fresh names; name them by role
        inner = dict(inv)
        for k, v in s.renaming:
            if v not in inv:
                inner[v] = f"{k}@{s.name}"
        return Summarized(s.name, _rename_stmt_names(s.body, inner))
    raise TypeError(s)


def bound_whole_program(p: Program, f, invariants: dict, summaries: dict, suite,
                        initial=None, tol: float = TOL) -> BoundReport:
    """Certified upper bound of ``qect[p]{f}``.

    Summaries are verified innermost first (once per distinct call-site
    body), then the program is evaluated with every loop replaced by its
    invariant, whose premises are checked on ``suite`` for the continuation
    at hand.  Bounds are reported at each state of ``initial`` (default: the
    suite).
    """
    f = as_expectation(f)
    info = label_loops(p.body)
    ck = Checker(suite, invariants, summaries, tol, info)
    summary_reports = []
    seen = {}
    with deep_recursion():
        for node in summary_nodes(p.body):
            sm = summaries.get(node.name)
            if sm is None:
                if not is_loop_free(node.body):
                    raise UnsummarizedLoop(f"summarized block {node.name} contains a loop "
                                           f"but has no summary")
                continue
            key = _canonical(node)
            if key in seen:
                continue
            n_before = len(ck.loop_reports)
            rep = ck.check_summary(node.body, sm, node)
            inner = ck.loop_reports[n_before:]
            del ck.loop_reports[n_before:]
            if any(not r.passed for r in inner):
                rep.verdict = "Fail"
            rep.details["inner"] = [r.describe() for r in inner]
            seen[key] = rep
            summary_reports.append(rep)
        cont = ck.upper(p.body, f)
        states = list(initial) if initial is not None else list(suite)
        bounds = [cont(st) for st in states]
    ok = all(r.passed for r in summary_reports) and all(r.passed for r in ck.loop_reports)
    return BoundReport("Pass" if ok else "Fail", bounds, list(ck.loop_reports), summary_reports,
                       len(suite), getattr(suite, "seed", None))


def program_suite(vs, n: int = 200, seed: int = 0, fixtures=(), **kw) -> StateSuite:
    """Default suite: fixtures plus ``n`` random states."""
    return StateSuite.generate(vs, n, seed, fixtures, **kw)
