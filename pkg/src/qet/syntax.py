"""Abstract syntax, parser, pretty-printer, macro expansion and validation
for the classical-quantum while-language.

Program text looks like::

    bool x;
    qreg q[2];
    x = true;
    while (x) { q *= H; x = meas(q); consume(1) }

Declarations (``bool``, ``int``, ``qreg``, ``proc``) come first, followed by
a single statement sequence.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Union

import numpy as np

from .errors import MacroError, ParseError, WellFormednessError

# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Var:
    name: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: int
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BoolLit:
    value: bool
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * == <= < and or
    left: "Expr"
    right: "Expr"
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not:
    operand: "Expr"
    span: tuple | None = field(default=None, compare=False, repr=False)


Expr = Union[Var, Num, BoolLit, BinOp, Not]

ARITH_OPS = ("+", "-", "*")
CMP_OPS = ("==", "<=", "<")
BOOL_OPS = ("and", "or")

# ---------------------------------------------------------------------------
# unitaries

BUILTIN_GATES = {"H": 1, "X": 1, "T": 1, "CNOT": 2, "CZ": 2, "SHIFT": 2}


@dataclass(frozen=True)
class Gate:
    """A builtin gate name, or ``name=None`` with an explicit matrix."""

    name: str | None
    matrix: tuple | None = None

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=complex)


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Skip:
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ApplyU:
    regs: tuple
    gate: Gate
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Measure:
    target: str
    reg: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class MeasureZero:
    """Two-outcome measurement: basis state 0 versus everything else."""

    target: str
    reg: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Consume:
    expr: Expr
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Seq:
    first: "Stmt"
    second: "Stmt"
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Stmt"
    orelse: "Stmt"
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: "Stmt"
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Summarized:
    """``@summary(name) { body }``.

    ``renaming`` maps the names used inside the summary file (procedure
    parameters and locals) to the program-level names at this call site.
    """

    name: str
    body: "Stmt"
    renaming: tuple = ()
    span: tuple | None = field(default=None, compare=False, repr=False)

    def resolve(self, ident: str) -> str:
        return dict(self.renaming).get(ident, ident)


@dataclass(frozen=True)
class InitZero:
    reg: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class InitPlus:
    reg: str
    span: tuple | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    proc: str
    args: tuple
    span: tuple | None = field(default=None, compare=False, repr=False)


Stmt = Union[Skip, Assign, ApplyU, Measure, MeasureZero, Consume, Seq, If,
             While, Summarized, InitZero, InitPlus, Call]


@dataclass(frozen=True)
class Decl:
    kind: str  # bool | int | qreg
    name: str
    dim: int = 0


@dataclass(frozen=True)
class Proc:
    name: str
    params: tuple
    locals: tuple
    body: Stmt


@dataclass(frozen=True)
class Program:
    decls: tuple
    body: Stmt
    procs: tuple = ()
    aux: tuple = ()  # generated bookkeeping variables (desugaring)

    def decl(self, name: str) -> Decl | None:
        for d in self.decls:
            if d.name == name:
                return d
        return None


@dataclass(frozen=True)
class VarSets:
    bools: tuple
    ints: tuple
    qregs: tuple  # ((name, dim), ...) in declaration order
    aux: tuple = ()

    @property
    def dim(self) -> int:
        out = 1
        for _, d in self.qregs:
            out *= d
        return out

    @property
    def reg_dims(self) -> dict:
        return dict(self.qregs)


def seq(*stmts: Stmt) -> Stmt:
    """Right-nested sequence of statements (``skip`` when empty)."""
    stmts = [s for s in stmts if s is not None]
    if not stmts:
        return Skip()
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def flatten(stmt: Stmt) -> list:
    """Sequence components of ``stmt`` with Seq nodes removed."""
    out = []
    stack = [stmt]
    while stack:
        s = stack.pop()
        if isinstance(s, Seq):
            stack.append(s.second)
            stack.append(s.first)
        else:
            out.append(s)
    return out


def walk(stmt: Stmt) -> Iterator[Stmt]:
    """Pre-order traversal of every statement node."""
    yield stmt
    if isinstance(stmt, Seq):
        yield from walk(stmt.first)
        yield from walk(stmt.second)
    elif isinstance(stmt, If):
        yield from walk(stmt.then)
        yield from walk(stmt.orelse)
    elif isinstance(stmt, (While, Summarized)):
        yield from walk(stmt.body)


def expr_vars(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Not):
        return expr_vars(e.operand)
    return set()


def assigned_vars(stmt: Stmt) -> set:
    out = set()
    for s in walk(stmt):
        if isinstance(s, (Assign, Measure, MeasureZero)):
            out.add(s.target)
    return out


def touched_regs(stmt: Stmt) -> set:
    out = set()
    for s in walk(stmt):
        if isinstance(s, ApplyU):
            out.update(s.regs)
        elif isinstance(s, (Measure, MeasureZero, InitZero, InitPlus)):
            out.add(s.reg)
    return out


def has_measurement(stmt: Stmt) -> bool:
    return any(isinstance(s, (Measure, MeasureZero, InitZero, InitPlus)) for s in walk(stmt))


def is_loop_free(stmt: Stmt) -> bool:
    return not any(isinstance(s, While) for s in walk(stmt))


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<ket>\|[0+]>)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>\*=|==|!=|<=|>=|&&|\|\||[-+*/<>=!(){}\[\],;@])
""", re.VERBOSE)

KEYWORDS = {"bool", "int", "qreg", "proc", "skip", "meas", "measzero", "consume",
            "if", "else", "while", "call", "true", "false", "and", "or", "not"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.globals: dict = {}
        self.procs: dict = {}
        self.scope: dict | None = None  # params/locals of the proc being parsed

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "id", "ket")

    def eat(self, text) -> Token:
        if not self.at(text):
            shown = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {shown!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> Token:
        tok = self.tok
        if tok.kind != "id" or tok.text in KEYWORDS:
            self.error(f"expected identifier, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok

    def span(self, tok):
        return (tok.line, tok.col)

    # names
    def lookup(self, tok: Token, kinds=None) -> str:
        name = tok.text
        if self.scope is not None and name in self.scope:
            kind = self.scope[name]
        elif name in self.globals:
            kind = self.globals[name].kind
        else:
            raise ParseError(f"unknown identifier {name!r}", tok.line, tok.col)
        if kinds is not None and kind is not None and kind not in kinds:
            raise ParseError(f"identifier {name!r} is a {kind}, expected {'/'.join(kinds)}",
                             tok.line, tok.col)
        return name

    # program
    def program(self) -> Program:
        decls, procs = [], []
        while self.tok.text in ("bool", "int", "qreg", "proc") and self.tok.kind == "id":
            if self.tok.text == "proc":
                procs.append(self.proc())
            else:
                d = self.decl()
                if d.name in self.globals or d.name in self.procs:
                    self.error(f"duplicate identifier {d.name!r}", self.toks[self.i - 2])
                self.globals[d.name] = d
                decls.append(d)
        body = self.stmts()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")
        return Program(tuple(decls), body, tuple(procs))

    def decl(self) -> Decl:
        kind = self.ident_kw()
        name = self.ident().text
        dim = 0
        if kind == "qreg":
            self.eat("[")
            tok = self.tok
            if tok.kind != "num" or not tok.text.isdigit():
                self.error("expected register dimension")
            self.i += 1
            dim = int(tok.text)
            if dim < 2:
                self.error(f"register {name!r} must have dimension >= 2", tok)
            self.eat("]")
        self.eat(";")
        return Decl(kind, name, dim)

    def ident_kw(self) -> str:
        tok = self.tok
        self.i += 1
        return tok.text

    def proc(self) -> Proc:
        self.eat("proc")
        name_tok = self.ident()
        name = name_tok.text
        if name in self.procs or name in self.globals:
            self.error(f"duplicate identifier {name!r}", name_tok)
        self.eat("(")
        params = []
        if not self.at(")"):
            params.append(self.ident().text)
            while self.at(","):
                self.eat(",")
                params.append(self.ident().text)
        self.eat(")")
        if len(set(params)) != len(params):
            self.error(f"duplicate parameter in proc {name!r}", name_tok)
        self.eat("{")
        self.scope = {p: None for p in params}  # parameters are untyped
        local_decls = []
        while self.tok.text in ("bool", "int", "qreg") and self.tok.kind == "id":
            d = self.decl()
            if d.name in self.scope:
                self.error(f"duplicate identifier {d.name!r}")
            self.scope[d.name] = d.kind
            local_decls.append(d)
        # register before parsing the body so recursive calls are detected later
        self.procs[name] = (tuple(params), None)
        body = self.stmts()
        self.eat("}")
        self.scope = None
        proc = Proc(name, tuple(params), tuple(local_decls), body)
        self.procs[name] = (tuple(params), proc)
        return proc

    def stmts(self) -> Stmt:
        items = []
        while True:
            while self.at(";"):
                self.eat(";")
            if self.tok.kind == "eof" or self.at("}"):
                break
            items.append(self.stmt())
            if not self.at(";"):
                break
        if not items:
            if self.tok.kind == "eof" or self.at("}"):
                self.error("expected a statement")
        return seq(*items)

    def block(self) -> Stmt:
        self.eat("{")
        body = self.stmts()
        self.eat("}")
        return body

    def stmt(self) -> Stmt:
        tok = self.tok
        sp = self.span(tok)
        if tok.kind == "op" and tok.text == "@":
            self.eat("@")
            kw = self.ident_kw()
            if kw != "summary":
                self.error("expected 'summary' after '@'", tok)
            self.eat("(")
            name = self.ident().text
            self.eat(")")
            return Summarized(name, self.block(), span=sp)
        if tok.kind != "id":
            self.error(f"expected a statement, found {tok.text or 'end of input'!r}")
        word = tok.text
        if word == "skip":
            self.i += 1
            return Skip(span=sp)
        if word == "consume":
            self.i += 1
            self.eat("(")
            e = self.expr()
            self.eat(")")
            return Consume(e, span=sp)
        if word == "if":
            self.i += 1
            self.eat("(")
            c = self.expr()
            self.eat(")")
            then = self.block()
            orelse = Skip()
            if self.at("else"):
                self.eat("else")
                orelse = self.block()
            return If(c, then, orelse, span=sp)
        if word == "while":
            self.i += 1
            self.eat("(")
            c = self.expr()
            self.eat(")")
            return While(c, self.block(), span=sp)
        if word == "call" or (word not in KEYWORDS and self.peek().text == "("):
            if word == "call":
                self.i += 1
            name_tok = self.ident()
            if name_tok.text not in self.procs:
                raise ParseError(f"unknown procedure {name_tok.text!r}", name_tok.line, name_tok.col)
            self.eat("(")
            args = []
            if not self.at(")"):
                args.append(self.lookup(self.ident()))
                while self.at(","):
                    self.eat(",")
                    args.append(self.lookup(self.ident()))
            self.eat(")")
            params, _ = self.procs[name_tok.text]
            if len(params) != len(args):
                raise ParseError(f"procedure {name_tok.text!r} expects {len(params)} arguments, "
                                 f"got {len(args)}", name_tok.line, name_tok.col)
            return Call(name_tok.text, tuple(args), span=sp)
        if word in KEYWORDS:
            self.error(f"unexpected keyword {word!r}")
        # id-led statements
        first = self.ident()
        if self.at(",") or self.at("*="):
            regs = [self.lookup(first, ("qreg",))]
            while self.at(","):
                self.eat(",")
                regs.append(self.lookup(self.ident(), ("qreg",)))
            self.eat("*=")
            gate_tok = self.tok
            gate = self.uref()
            if gate.name is not None and BUILTIN_GATES[gate.name] != len(regs):
                raise ParseError(f"gate {gate.name} expects {BUILTIN_GATES[gate.name]} registers, "
                                 f"got {len(regs)}", gate_tok.line, gate_tok.col)
            if len(set(regs)) != len(regs):
                raise ParseError("unitary target registers must be distinct", tok.line, tok.col)
            return ApplyU(tuple(regs), gate, span=sp)
        self.eat("=")
        if self.tok.kind == "ket":
            ket = self.tok.text
            self.i += 1
            reg = self.lookup(first, ("qreg",))
            return InitZero(reg, span=sp) if ket == "|0>" else InitPlus(reg, span=sp)
        if self.tok.text in ("meas", "measzero") and self.peek().text == "(":
            kind = self.tok.text
            self.i += 1
            self.eat("(")
            reg = self.lookup(self.ident())
            self.eat(")")
            target = self.lookup(first)
            return (Measure if kind == "meas" else MeasureZero)(target, reg, span=sp)
        target = self.lookup(first, ("bool", "int"))
        return Assign(target, self.expr(), span=sp)

    def uref(self) -> Gate:
        tok = self.tok
        if tok.kind == "id" and tok.text in BUILTIN_GATES:
            self.i += 1
            return Gate(tok.text)
        if self.at("["):
            return Gate(None, self.matrix())
        self.error(f"expected a gate name or matrix literal, found {tok.text!r}")

    def matrix(self) -> tuple:
        self.eat("[")
        rows = [self.matrix_row()]
        while self.at(","):
            self.eat(",")
            rows.append(self.matrix_row())
        self.eat("]")
        n = len(rows)
        if any(len(r) != n for r in rows):
            self.error("matrix literal must be square")
        return tuple(rows)

    def matrix_row(self) -> tuple:
        self.eat("[")
        row = [self.complex_lit()]
        while self.at(","):
            self.eat(",")
            row.append(self.complex_lit())
        self.eat("]")
        return tuple(row)

    def complex_lit(self) -> complex:
        return parse_complex_tokens(self)

    # expressions: or < and < not < comparison < additive < multiplicative
    def expr(self) -> Expr:
        left = self.and_expr()
        while self.at("||") or self.at("or"):
            tok = self.tok
            self.i += 1
            left = BinOp("or", left, self.and_expr(), span=self.span(tok))
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.at("&&") or self.at("and"):
            tok = self.tok
            self.i += 1
            left = BinOp("and", left, self.not_expr(), span=self.span(tok))
        return left

    def not_expr(self) -> Expr:
        if self.at("!") or self.at("not"):
            tok = self.tok
            self.i += 1
            return Not(self.not_expr(), span=self.span(tok))
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        left = self.add_expr()
        op_tok = self.tok
        if op_tok.kind == "op" and op_tok.text in ("==", "=", "!=", "<=", "<", ">=", ">"):
            self.i += 1
            right = self.add_expr()
            sp = self.span(op_tok)
            op = op_tok.text
            if self.tok.kind == "op" and self.tok.text in ("==", "=", "!=", "<=", "<", ">=", ">"):
                self.error("comparison operators are non-associative")
            if op in ("==", "="):
                return BinOp("==", left, right, span=sp)
            if op == "!=":
                return Not(BinOp("==", left, right, span=sp), span=sp)
            if op == ">":
                return BinOp("<", right, left, span=sp)
            if op == ">=":
                return BinOp("<=", right, left, span=sp)
            return BinOp(op, left, right, span=sp)
        return left

    def add_expr(self) -> Expr:
        left = self.mul_expr()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            tok = self.tok
            self.i += 1
            left = BinOp(tok.text, left, self.mul_expr(), span=self.span(tok))
        return left

    def mul_expr(self) -> Expr:
        left = self.unary()
        while self.at("*"):
            tok = self.tok
            self.i += 1
            left = BinOp("*", left, self.unary(), span=self.span(tok))
        return left

    def unary(self) -> Expr:
        if self.at("-"):
            tok = self.tok
            self.i += 1
            inner = self.unary()
            if isinstance(inner, Num):
                return Num(-inner.value, span=self.span(tok))
            return BinOp("-", Num(0), inner, span=self.span(tok))
        return self.atom()

    def atom(self) -> Expr:
        tok = self.tok
        sp = self.span(tok)
        if tok.kind == "num":
            if not tok.text.isdigit():
                self.error("only integer literals are allowed in expressions")
            self.i += 1
            return Num(int(tok.text), span=sp)
        if self.at("("):
            self.eat("(")
            e = self.expr()
            self.eat(")")
            return e
        if tok.kind == "id" and tok.text in ("true", "false"):
            self.i += 1
            return BoolLit(tok.text == "true", span=sp)
        name = self.lookup(self.ident(), ("bool", "int"))
        return Var(name, span=sp)


_NUM_RE = re.compile(r"\d+(?:\.\d*)?(?:[eE][+-]?\d+)?$")


def _real_tokens(p) -> float | None:
    """NUM [/ NUM]; returns None when the next token is not a number."""
    tok = p.tok
    if tok.kind != "num":
        return None
    p.i += 1
    value = float(tok.text)
    if p.at("/"):
        p.eat("/")
        den = p.tok
        if den.kind != "num":
            p.error("expected denominator")
        p.i += 1
        value /= float(den.text)
    return value


def parse_complex_tokens(p) -> complex:
    """Parse ``[+-] re [(+|-) im i]`` or ``[+-] im i`` from a token stream."""
    sign = 1.0
    if p.tok.kind == "op" and p.tok.text in ("+", "-"):
        sign = -1.0 if p.tok.text == "-" else 1.0
        p.i += 1
    mag = _real_tokens(p)
    if p.tok.kind == "id" and p.tok.text == "i":
        p.i += 1
        return complex(0.0, sign * (1.0 if mag is None else mag))
    if mag is None:
        p.error(f"expected a number, found {p.tok.text!r}")
    value = complex(sign * mag, 0.0)
    if p.tok.kind == "op" and p.tok.text in ("+", "-") and (
            p.peek().kind == "num" or (p.peek().kind == "id" and p.peek().text == "i")):
        # only an imaginary part may follow
        save = p.i
        s2 = -1.0 if p.tok.text == "-" else 1.0
        p.i += 1
        im = _real_tokens(p)
        if p.tok.kind == "id" and p.tok.text == "i":
            p.i += 1
            return value + complex(0.0, s2 * (1.0 if im is None else im))
        p.i = save
    return value


def parse_program(text: str) -> Program:
    """Parse program text; raises :class:`ParseError` with line/column."""
    return _Parser(text).program()


def parse_matrix(text: str) -> np.ndarray:
    """Parse a standalone matrix literal such as ``[[1, -1], [-1, 1]]``."""
    p = _Parser(text)
    m = p.matrix()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return np.array(m, dtype=complex)


def parse_vector(text: str) -> np.ndarray:
    """Parse a vector literal such as ``[1, 0, 0, 1]``."""
    p = _Parser(text)
    v = p.matrix_row()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return np.array(v, dtype=complex)


def parse_expr(text: str, decls: dict | None = None) -> Expr:
    """Parse a program expression.  ``decls`` maps names to kinds
    (``"bool"``/``"int"``); when omitted any identifier is accepted."""
    p = _Parser(text)
    if decls is None:
        p.scope = _AnyScope()
    else:
        p.scope = dict(decls)
    e = p.expr()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return e


class _AnyScope(dict):
    def __contains__(self, key):
        return True

    def __getitem__(self, key):
        return None


# ---------------------------------------------------------------------------
# pretty printer

_LEVEL = {"or": 1, "and": 2, "==": 4, "<=": 4, "<": 4, "+": 5, "-": 5, "*": 6}
_SYM = {"or": "||", "and": "&&", "==": "==", "<=": "<=", "<": "<", "+": "+", "-": "-", "*": "*"}


def _level(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _LEVEL[e.op]
    if isinstance(e, Not):
        return 3
    if isinstance(e, Num) and e.value < 0:
        return 6
    return 7


def pretty_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Not):
        inner = pretty_expr(e.operand)
        return f"!{inner}" if _level(e.operand) >= 7 else f"!({inner})"
    lvl = _LEVEL[e.op]
    left, right = pretty_expr(e.left), pretty_expr(e.right)
    if lvl == 4:
        if _level(e.left) <= 4:
            left = f"({left})"
        if _level(e.right) <= 4:
            right = f"({right})"
    else:
        if _level(e.left) < lvl:
            left = f"({left})"
        if _level(e.right) <= lvl:
            right = f"({right})"
    return f"{left} {_SYM[e.op]} {right}"


def _fmt_complex(z: complex) -> str:
    re_, im = z.real, z.imag
    if im == 0:
        return repr(float(re_))
    if re_ == 0:
        return f"{im!r}i"
    sign = "+" if im >= 0 else "-"
    return f"{re_!r}{sign}{abs(im)!r}i"


def pretty_matrix(m) -> str:
    return "[" + ", ".join("[" + ", ".join(_fmt_complex(complex(z)) for z in row) + "]"
                           for row in m) + "]"


def pretty_stmt(s: Stmt, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(s, Seq):
        parts = flatten(s)
        return ";\n".join(pretty_stmt(p, indent) for p in parts)
    if isinstance(s, Skip):
        return pad + "skip"
    if isinstance(s, Assign):
        return f"{pad}{s.target} = {pretty_expr(s.expr)}"
    if isinstance(s, ApplyU):
        gate = s.gate.name if s.gate.name is not None else pretty_matrix(s.gate.matrix)
        return f"{pad}{', '.join(s.regs)} *= {gate}"
    if isinstance(s, Measure):
        return f"{pad}{s.target} = meas({s.reg})"
    if isinstance(s, MeasureZero):
        return f"{pad}{s.target} = measzero({s.reg})"
    if isinstance(s, Consume):
        return f"{pad}consume({pretty_expr(s.expr)})"
    if isinstance(s, If):
        return (f"{pad}if ({pretty_expr(s.cond)}) {{\n{pretty_stmt(s.then, indent + 1)}\n"
                f"{pad}}} else {{\n{pretty_stmt(s.orelse, indent + 1)}\n{pad}}}")
    if isinstance(s, While):
        return f"{pad}while ({pretty_expr(s.cond)}) {{\n{pretty_stmt(s.body, indent + 1)}\n{pad}}}"
    if isinstance(s, Summarized):
        return f"{pad}@summary({s.name}) {{\n{pretty_stmt(s.body, indent + 1)}\n{pad}}}"
    if isinstance(s, InitZero):
        return f"{pad}{s.reg} = |0>"
    if isinstance(s, InitPlus):
        return f"{pad}{s.reg} = |+>"
    if isinstance(s, Call):
        return f"{pad}call {s.proc}({', '.join(s.args)})"
    raise TypeError(f"not a statement: {s!r}")


def _pretty_decl(d: Decl) -> str:
    return f"qreg {d.name}[{d.dim}];" if d.kind == "qreg" else f"{d.kind} {d.name};"


def pretty(p: Program) -> str:
    lines = [_pretty_decl(d) for d in p.decls]
    for pr in p.procs:
        lines.append(f"proc {pr.name}({', '.join(pr.params)}) {{")
        lines.extend("  " + _pretty_decl(d) for d in pr.locals)
        lines.append(pretty_stmt(pr.body, 1))
        lines.append("}")
    lines.append(pretty_stmt(p.body))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# macro expansion


def _rename_expr(e: Expr, env: dict) -> Expr:
    if isinstance(e, Var):
        return Var(env.get(e.name, e.name), span=e.span)
    if isinstance(e, BinOp):
        return BinOp(e.op, _rename_expr(e.left, env), _rename_expr(e.right, env), span=e.span)
    if isinstance(e, Not):
        return Not(_rename_expr(e.operand, env), span=e.span)
    return e


def _fresh(base: str, taken: set) -> str:
    name, k = base, 1
    while name in taken:
        name = f"{base}{k}"
        k += 1
    taken.add(name)
    return name


RESET_VAR = "_rst"


def is_reset_var(name: str) -> bool:
    return name.startswith(RESET_VAR)


def expand_macros(p: Program) -> Program:
    """Inline every ``call`` and desugar ``q = |0>`` / ``q = |+>``.

    ``q = |0>`` becomes ``m = meas(q); if (m) { q *= X } else { skip }`` with
    one fresh auxiliary Boolean ``m`` shared by all resets; ``q = |+>``
    additionally applies H.  Parameters are substituted simultaneously.  Each
    procedure local gets one fresh program-level name, shared by all call
    sites of that procedure (calls never overlap since there is no recursion).
    """
    procs = {pr.name: pr for pr in p.procs}
    _check_recursion(procs)
    taken = {d.name for d in p.decls} | set(procs) | set(p.aux)
    for pr in p.procs:
        taken.update(d.name for d in pr.locals)
    decls = list(p.decls)
    aux = list(p.aux)
    reset_var: list = []
    local_names: dict = {}

    def reset_of(reg: str) -> str:
        if not reset_var:
            name = _fresh(RESET_VAR, taken)
            reset_var.append(name)
            decls.append(Decl("bool", name))
            aux.append(name)
        return reset_var[0]

    def init_zero(reg, span):
        m = reset_of(reg)
        return Seq(Measure(m, reg, span=span),
                   If(Var(m), ApplyU((reg,), Gate("X")), Skip()), span=span)

    def go(s: Stmt, env: dict) -> Stmt:
        r = lambda n: env.get(n, n)  # noqa: E731
        if isinstance(s, Skip):
            return s
        if isinstance(s, Assign):
            return Assign(r(s.target), _rename_expr(s.expr, env), span=s.span)
        if isinstance(s, ApplyU):
            return ApplyU(tuple(r(q) for q in s.regs), s.gate, span=s.span)
        if isinstance(s, Measure):
            return Measure(r(s.target), r(s.reg), span=s.span)
        if isinstance(s, MeasureZero):
            return MeasureZero(r(s.target), r(s.reg), span=s.span)
        if isinstance(s, Consume):
            return Consume(_rename_expr(s.expr, env), span=s.span)
        if isinstance(s, Seq):
            return Seq(go(s.first, env), go(s.second, env), span=s.span)
        if isinstance(s, If):
            return If(_rename_expr(s.cond, env), go(s.then, env), go(s.orelse, env), span=s.span)
        if isinstance(s, While):
            return While(_rename_expr(s.cond, env), go(s.body, env), span=s.span)
        if isinstance(s, Summarized):
            ren = {k: r(v) for k, v in s.renaming}
            for k, v in env.items():
                ren.setdefault(k, v)
            return Summarized(s.name, go(s.body, env), tuple(sorted(ren.items())), span=s.span)
        if isinstance(s, InitZero):
            return init_zero(r(s.reg), s.span)
        if isinstance(s, InitPlus):
            reg = r(s.reg)
            return Seq(init_zero(reg, s.span), ApplyU((reg,), Gate("H")), span=s.span)
        if isinstance(s, Call):
            pr = procs.get(s.proc)
            if pr is None:
                raise MacroError(f"undeclared procedure {s.proc!r}")
            if len(pr.params) != len(s.args):
                raise MacroError(f"procedure {s.proc!r} expects {len(pr.params)} arguments, "
                                 f"got {len(s.args)}")
            inner = {param: r(arg) for param, arg in zip(pr.params, s.args)}
            for d in pr.locals:
                key = (pr.name, d.name)
                if key not in local_names:
                    local_names[key] = _fresh(f"{d.name}_{pr.name}", taken)
                    decls.append(Decl(d.kind, local_names[key], d.dim))
                inner[d.name] = local_names[key]
            return go(pr.body, inner)
        raise TypeError(f"not a statement: {s!r}")

    body = go(p.body, {})
    return Program(tuple(decls), body, (), tuple(aux))


def _check_recursion(procs: dict) -> None:
    state: dict = {}

    def visit(name, trail):
        if state.get(name) == "done":
            return
        if state.get(name) == "active":
            raise MacroError("recursive procedures: " + " -> ".join(trail + [name]))
        state[name] = "active"
        for s in walk(procs[name].body):
            if isinstance(s, Call):
                if s.proc not in procs:
                    raise MacroError(f"undeclared procedure {s.proc!r}")
                visit(s.proc, trail + [name])
        state[name] = "done"

    for name in procs:
        visit(name, [])


# ---------------------------------------------------------------------------
# validation


def _expr_type(e: Expr, kinds: dict) -> str:
    if isinstance(e, Num):
        return "int"
    if isinstance(e, BoolLit):
        return "bool"
    if isinstance(e, Var):
        k = kinds.get(e.name)
        if k not in ("bool", "int"):
            raise WellFormednessError(f"unknown classical variable {e.name!r}")
        return k
    if isinstance(e, Not):
        if _expr_type(e.operand, kinds) != "bool":
            raise WellFormednessError("negation of a non-Boolean expression")
        return "bool"
    lt, rt = _expr_type(e.left, kinds), _expr_type(e.right, kinds)
    if e.op in ARITH_OPS or e.op in CMP_OPS:
        if lt != "int" or rt != "int":
            raise WellFormednessError(f"operator {e.op!r} expects integer operands")
        return "int" if e.op in ARITH_OPS else "bool"
    if lt != "bool" or rt != "bool":
        raise WellFormednessError(f"operator {e.op!r} expects Boolean operands")
    return "bool"


def check_gate(gate: Gate, dims: list) -> None:
    """Raise unless ``gate`` can act on registers with dimensions ``dims``."""
    if gate.name is None:
        m = gate.as_array()
        total = int(np.prod(dims))
        if m.shape != (total, total):
            raise WellFormednessError(f"matrix of size {m.shape[0]} applied to registers "
                                      f"of total dimension {total}")
        if np.max(np.abs(m.conj().T @ m - np.eye(total))) > 1e-9:
            raise WellFormednessError("matrix literal is not unitary")
        return
    arity = BUILTIN_GATES[gate.name]
    if len(dims) != arity:
        raise WellFormednessError(f"gate {gate.name} expects {arity} registers, got {len(dims)}")
    if gate.name == "SHIFT":
        if dims[0] != 2:
            raise WellFormednessError("SHIFT expects a 2-dimensional direction register first")
    elif any(d != 2 for d in dims):
        raise WellFormednessError(f"gate {gate.name} acts on 2-dimensional registers only")


def validate(p: Program) -> VarSets:
    """Check well-formedness of a macro-free program and return its variable sets."""
    if p.procs:
        raise WellFormednessError("validate expects a macro-free program")
    kinds: dict = {}
    bools, ints, regs = [], [], []
    for d in p.decls:
        if d.name in kinds:
            raise WellFormednessError(f"duplicate identifier {d.name!r}")
        kinds[d.name] = d.kind
        if d.kind == "bool":
            bools.append(d.name)
        elif d.kind == "int":
            ints.append(d.name)
        elif d.kind == "qreg":
            if d.dim < 2:
                raise WellFormednessError(f"register {d.name!r} must have dimension >= 2")
            regs.append((d.name, d.dim))
        else:
            raise WellFormednessError(f"unknown declaration kind {d.kind!r}")
    dims = dict(regs)

    def reg(name):
        if kinds.get(name) != "qreg":
            raise WellFormednessError(f"{name!r} is not a quantum register")
        return dims[name]

    def var(name, kind):
        if kinds.get(name) != kind:
            raise WellFormednessError(f"{name!r} is not a {kind} variable")

    for s in walk(p.body):
        if isinstance(s, Assign):
            if kinds.get(s.target) not in ("bool", "int"):
                raise WellFormednessError(f"assignment to unknown variable {s.target!r}")
            if _expr_type(s.expr, kinds) != kinds[s.target]:
                raise WellFormednessError(f"type mismatch in assignment to {s.target!r}")
        elif isinstance(s, ApplyU):
            if len(set(s.regs)) != len(s.regs):
                raise WellFormednessError("unitary target registers must be distinct")
            check_gate(s.gate, [reg(q) for q in s.regs])
        elif isinstance(s, Measure):
            var(s.target, "bool")
            if reg(s.reg) != 2:
                raise WellFormednessError(f"meas needs a 2-dimensional register, {s.reg!r} "
                                          f"has dimension {dims[s.reg]}; use measzero")
        elif isinstance(s, MeasureZero):
            var(s.target, "bool")
            reg(s.reg)
        elif isinstance(s, Consume):
            if _expr_type(s.expr, kinds) != "int":
                raise WellFormednessError("consume expects an integer expression")
        elif isinstance(s, (If, While)):
            if _expr_type(s.cond, kinds) != "bool":
                raise WellFormednessError("guard must be a Boolean expression")
        elif isinstance(s, (InitZero, InitPlus, Call)):
            raise WellFormednessError("validate expects a macro-free program")
    return VarSets(tuple(bools), tuple(ints), tuple(regs), tuple(a for a in p.aux if a in kinds))


def load_program(text: str) -> tuple:
    """Parse, expand and validate; returns ``(program, varsets)``."""
    prog = expand_macros(parse_program(text))
    return prog, validate(prog)
