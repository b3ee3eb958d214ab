import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as O
from randprog import random_expectation, random_program, random_state
from qet.errors import NonExpectationError, ParseError, WellFormednessError
from qet.expectations import (ZERO, Add, Arith, Const, Fn, Ind, Max, Mul, QuadForm, Scale,
                              StateSuite, classical_check, independence_check, parse_expectation,
                              substitute, to_sexpr, validate_expectation)
from qet.state import basis_state, eval_expr, haar_vector, make_state
from qet.syntax import Assign, VarSets, load_program, parse_expr

VS = VarSets(("x",), ("y", "z"), (("q", 2), ("p", 2)))
DECLS = {"x": "bool", "y": "int", "z": "int"}


def state(amps=None, **store):
    amps = np.eye(VS.dim)[0] if amps is None else amps
    return make_state(VS, store, amps)


def test_constant_zero():
    assert ZERO(state(haar_vector(4, np.random.default_rng(0)))) == 0


def test_coin_toss_invariant_value():
    vs = VarSets(("x",), (), (("q", 2),))
    g = parse_expectation("(mul (ind x) (add (const 1) (quadform (q) [[1,-1],[-1,1]])))",
                          {"x": "bool"})
    a, b = 0.6, 0.8j
    assert g(make_state(vs, {"x": 1}, [a, b])) == pytest.approx(1 + abs(a - b) ** 2)
    assert g(make_state(vs, {"x": 0}, [a, b])) == 0


def test_walk_invariant_at_position_one():
    g = parse_expectation("(add (const 1) (quadform (q p) (diag 0 1 0 1)))")
    assert g(state(np.eye(4)[1])) == pytest.approx(2)
    assert g(state(np.eye(4)[0])) == pytest.approx(1)


def test_quadform_acts_on_listed_registers():
    rng = np.random.default_rng(4)
    v = haar_vector(4, rng)
    qf = QuadForm(("p",), np.diag([0.0, 1.0]))
    assert qf(state(v)) == pytest.approx(abs(v[1]) ** 2 + abs(v[3]) ** 2)
    swapped = QuadForm(("p", "q"), np.diag([0.0, 0.0, 1.0, 0.0]))
    assert swapped(state(v)) == pytest.approx(abs(v[1]) ** 2)


def test_arith_clamps_negative_values():
    assert Arith(parse_expr("y - 5", DECLS))(state(y=2)) == 0.0
    assert Arith(parse_expr("y - 5", DECLS))(state(y=7)) == 2.0


def test_negative_value_is_rejected():
    with pytest.raises(NonExpectationError):
        Fn(lambda s: -1.0)(state())
    with pytest.raises(WellFormednessError):
        Const(-1)
    with pytest.raises(WellFormednessError):
        QuadForm(("q",), np.array([[0, 1], [0, 0]]))
    with pytest.raises(WellFormednessError):
        Scale(-2, ZERO)


def test_validate_against_program_variables():
    validate_expectation(parse_expectation("(ind x)"), VS)
    with pytest.raises(WellFormednessError):
        validate_expectation(parse_expectation("(ind w)"), VS)
    with pytest.raises(WellFormednessError):
        validate_expectation(QuadForm(("q",), np.eye(4)), VS)


def test_classical_check():
    assert classical_check(Mul((Ind(parse_expr("x", DECLS)), Const(Fraction(8, 3)))))
    assert not classical_check(QuadForm(("q",), np.eye(2)))
    assert classical_check(Const(5))


def test_independence_check():
    prog, _ = load_program("int x; int y; x = x + 3")
    stm = prog.body
    assert independence_check(Arith(parse_expr("y", DECLS)), stm)
    assert not independence_check(Arith(parse_expr("y", DECLS)), Assign("y", parse_expr("y + 3", DECLS)))
    assert independence_check(Const(4), stm)
    prog, _ = load_program("bool x; qreg q[2]; qreg p[2]; x = meas(p)")
    assert not independence_check(QuadForm(("q",), np.eye(2)), prog.body)
    prog, _ = load_program("qreg q[2]; qreg p[2]; p *= H")
    assert independence_check(QuadForm(("q",), np.eye(2)), prog.body)
    assert not independence_check(QuadForm(("p",), np.eye(2)), prog.body)


@pytest.mark.parametrize("text", ["(const)", "(foo 1)", "(scale 2)", "(const -1)", "(ind"])
def test_parse_errors(text):
    with pytest.raises((ParseError, WellFormednessError)):
        parse_expectation(text, DECLS)


def test_sexpr_forms():
    e = parse_expectation('(max (scale 1/2 (arith "y + z")) (min (const inf) (ind "!x")))', DECLS)
    assert e(state(y=3, z=1)) == 2.0
    assert e(state(x=0)) == 1.0
    outer = parse_expectation("(quadform (q) (outer [1, 1i]))")
    assert outer(state(np.array([1, 0, 1j, 0]) / math.sqrt(2))) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# properties


def _rand_case(seed):
    rng = np.random.default_rng(seed)
    _, prog, vs = random_program(rng)
    return rng, vs


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_evaluation_matches_oracle_and_roundtrips(seed):
    rng, vs = _rand_case(seed)
    e = random_expectation(vs, rng)
    st_ = random_state(vs, rng)
    space, s, v = O.unpack(st_)
    assert e(st_) == pytest.approx(O.expectation(e, space, s, v), rel=1e-12, abs=1e-12)
    back = parse_expectation(to_sexpr(e), DECLS | {"b0": "bool", "b1": "bool", "i0": "int", "i1": "int"})
    assert back(st_) == pytest.approx(e(st_), rel=1e-12, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_under_positive_composition(seed):
    rng, vs = _rand_case(seed)
    a, b = random_expectation(vs, rng), random_expectation(vs, rng)
    bump = Add((a, Const(float(rng.random()))))
    st_ = random_state(vs, rng)
    r = float(rng.random() * 3)
    for wrap in (lambda u: Add((u, b)), lambda u: Scale(r, u), lambda u: Max(u, b)):
        assert wrap(a)(st_) <= wrap(bump)(st_) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_substitution_by_state_update_matches_rewriting(seed):
    rng, vs = _rand_case(seed)
    f = random_expectation(vs, rng)
    st_ = random_state(vs, rng)
    x = ["i0", "i1", "b0", "b1"][int(rng.integers(4))]
    by = parse_expr("i0 + i1 - 1" if x.startswith("i") else "b1 or i0 < 2",
                    {"b0": "bool", "b1": "bool", "i0": "int", "i1": "int"})
    moved = f(st_.assign(x, eval_expr(by, st_.store)))
    assert substitute(f, x, by)(st_) == pytest.approx(moved, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_classical_expectations_ignore_amplitudes(seed):
    rng, vs = _rand_case(seed)
    e = random_expectation(vs, rng, classical=True)
    assert classical_check(e)
    st_ = random_state(vs, rng)
    other = st_.with_amps(haar_vector(vs.dim, rng))
    assert abs(e(st_) - e(other)) <= 1e-12


def test_suite_is_deterministic():
    a = StateSuite.generate(VS, 20, seed=3, fixtures=[basis_state(VS)])
    b = StateSuite.generate(VS, 20, seed=3, fixtures=[basis_state(VS)])
    assert len(a) == 21 and a.n_fixtures == 1
    assert [s.key() for s in a] == [s.key() for s in b]
    c = StateSuite.generate(VS, 20, seed=4)
    assert [s.key() for s in c] != [s.key() for s in a][1:]
