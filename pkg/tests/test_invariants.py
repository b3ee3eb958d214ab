import math
from fractions import Fraction

import numpy as np
import pytest

import oracle
from conftest import inv_text, load
from qet.errors import MissingInvariant, ParseError, UnsummarizedLoop, WellFormednessError
from qet.expectations import ONE, ZERO, parse_expectation
from qet.invariants import (Outcome, Summary, bound_whole_program, check_summary,
                            check_upper_invariant, label_loops, parse_invariant_file,
                            program_suite)
from qet.state import make_state
from qet.syntax import load_program


def corpus_case(name, n=60, seed=0):
    prog, vs = load(f"{name}.qw")
    inv = parse_invariant_file(inv_text(f"{name}.inv"))
    return prog, vs, inv, program_suite(vs, n, seed)


def loop_of(prog):
    return prog.body.second


def test_loop_labels_are_stable():
    prog, _ = load("chain4.qw")
    infos = sorted(label_loops(prog.body).values(), key=lambda i: i.label)
    assert [i.label for i in infos] == ["chain4.0", "stm1.0", "stm2.0"]
    # a lone loop in a summarized block also answers to the block's name
    assert [i.aliases for i in infos] == [("chain4",), ("stm1",), ("stm2",)]
    prog, _ = load("ct.qw")
    assert [i.label for i in label_loops(prog.body).values()] == ["loop0"]


@pytest.mark.parametrize("name", ["ct", "rus", "walk_n2", "walk_n3"])
def test_bundled_invariants_pass(name):
    prog, vs, inv, suite = corpus_case(name)
    rep = check_upper_invariant(loop_of(prog), inv.post, inv.invariants["loop0"], suite)
    assert rep.passed, rep.describe()
    assert rep.suite_size == len(suite)
    assert rep.worst >= -1e-9


def test_too_small_invariant_fails():
    prog, vs, _, suite = corpus_case("rus")
    g = parse_expectation("(mul (ind x) (const 1))")
    rep = check_upper_invariant(loop_of(prog), ZERO, g, suite)
    assert not rep.passed
    # one round costs 2 and repeats with probability 1/4, so the body
    # premise reads 2 + 1/4·1 = 2.25 against 1 for every x-state
    assert rep.worst == pytest.approx(-1.25, abs=1e-9)
    assert "Fail" in rep.describe()


def test_fuse_summary_passes():
    prog, vs, inv, suite = corpus_case("fuse")
    rep = bound_whole_program(prog, ZERO, inv.invariants, inv.summaries, suite)
    assert rep.passed
    assert len(rep.summary_reports) == 1 and rep.summary_reports[0].passed
    assert all(b == pytest.approx(1.0) for b in rep.bounds)


def test_wrong_fuse_probability_fails():
    prog, vs, inv, suite = corpus_case("fuse")
    bad = parse_invariant_file(
        "(summary fuse (cost 1) (outcome 1/2 ((x 1))) (outcome 1/2 ((x 0))) (scratch y))")
    rep = bound_whole_program(prog, ZERO, inv.invariants, bad.summaries, suite)
    assert not rep.passed


def _noop(cost):
    return Summary("s", Fraction(cost), (Outcome(Fraction(1), ()),))


def test_summary_of_skip():
    prog, vs = load_program("bool x; int n; skip")
    rep = check_summary(prog.body, _noop(0), program_suite(vs, 30, 1))
    assert rep.passed


def test_summary_with_wrong_cost_fails():
    prog, vs = load_program("bool x; int n; consume(2)")
    rep = check_summary(prog.body, _noop(1), program_suite(vs, 30, 1))
    assert not rep.passed
    assert rep.worst == pytest.approx(-1.0)
    # an inequality summary may overshoot but not undershoot
    assert check_summary(prog.body, Summary("s", Fraction(3), _noop(0).outcomes, leq=True),
                         program_suite(vs, 30, 1)).passed
    assert not check_summary(prog.body, Summary("s", Fraction(3), _noop(0).outcomes),
                             program_suite(vs, 30, 1)).passed


def test_summary_wellformedness():
    with pytest.raises(WellFormednessError):
        Summary("s", Fraction(-1), (Outcome(Fraction(1), ()),))
    with pytest.raises(WellFormednessError):
        Summary("s", Fraction(0), (Outcome(Fraction(1, 2), ()),))


@pytest.mark.parametrize("text", ["(invariant loop0)", "(bogus 1)", "(summary)",
                                  "(summary s (cost 1) (wat))"])
def test_invariant_file_errors(text):
    with pytest.raises(ParseError):
        parse_invariant_file(text)


def test_coin_toss_bound_matches_closed_form():
    prog, vs, inv, suite = corpus_case("ct")
    rng = np.random.default_rng(5)
    states = []
    for _ in range(20):
        a = rng.normal(size=2) + 1j * rng.normal(size=2)
        states.append(make_state(vs, {"x": 0}, a / np.linalg.norm(a)))
    rep = bound_whole_program(prog, ZERO, inv.invariants, {}, suite, initial=states)
    assert rep.passed
    for st, b in zip(states, rep.bounds):
        alpha, beta = st.amps
        assert b == pytest.approx(1 + abs(alpha - beta) ** 2, abs=1e-9)


@pytest.mark.parametrize("name,n,expected", [("rus", 60, 8 / 3), ("chain4", 30, 36.0),
                                              ("chain_k4", 20, 1184.0)])
def test_program_bounds(name, n, expected):
    prog, vs, inv, suite = corpus_case(name, n)
    rep = bound_whole_program(prog, inv.post, inv.invariants, inv.summaries, suite)
    assert rep.passed
    assert all(b == pytest.approx(expected, rel=1e-9) for b in rep.bounds)


@pytest.mark.parametrize("name,steps", [("ct", 60), ("rus", 40), ("walk_n2", 40)])
def test_forward_never_exceeds_certified_bound(name, steps):
    prog, vs, inv, suite = corpus_case(name, 12)
    rep = bound_whole_program(prog, inv.post, inv.invariants, inv.summaries, suite)
    assert rep.passed
    for st, b in zip(suite, rep.bounds):
        space, s, vec = oracle.unpack(st)
        cost, _, _ = oracle.forward(space, prog.body, s, vec, steps)
        assert cost <= b + 1e-9


def test_missing_invariant_is_refused():
    prog, vs, _, suite = corpus_case("ct", 5)
    with pytest.raises(MissingInvariant):
        bound_whole_program(prog, ZERO, {}, {}, suite)


def test_unsummarized_loop_is_refused():
    prog, vs = load_program("bool x; x = true; @summary(s) { while (x) { x = false } }")
    with pytest.raises(UnsummarizedLoop):
        bound_whole_program(prog, ZERO, {}, {}, program_suite(vs, 5))


def test_reports_are_deterministic():
    prog, vs, inv, _ = corpus_case("walk_n2")
    reps = [check_upper_invariant(loop_of(prog), ZERO, inv.invariants["loop0"],
                                  program_suite(vs, 40, 7)) for _ in range(2)]
    assert reps[0].to_json() == reps[1].to_json()
    assert reps[0].seed == 7
    other = check_upper_invariant(loop_of(prog), ZERO, inv.invariants["loop0"],
                                  program_suite(vs, 40, 8))
    assert other.residuals != reps[0].residuals


def test_report_json_has_no_bare_infinities():
    prog, vs, _, suite = corpus_case("ct", 5)
    rep = check_upper_invariant(loop_of(prog), ONE, ZERO, suite)
    js = rep.to_json()
    assert all(isinstance(r, (float, str)) for r in js["residuals"])
    assert not any(isinstance(r, float) and math.isinf(r) for r in js["residuals"])
