import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as O
from conftest import load
from randprog import random_expectation, random_program, random_state
from qet.errors import TruncationError
from qet.pars import (Running, Terminal, ecost_approx, expand, expected_value_approx, nf_approx,
                      step)
from qet.state import basis_state, make_state
from qet.syntax import load_program, walk


@pytest.fixture(scope="module")
def ct():
    prog, vs = load("ct.qw")
    return prog, vs


def ct_loop_config(ct, amps):
    prog, vs = ct
    return Running.of(prog.body.second, make_state(vs, {"x": 1}, amps))


def test_skip_step():
    prog, vs = load_program("skip")
    st_ = basis_state(vs)
    c, [(p, out)] = step(Running.of(prog.body, st_))
    assert (c, p) == (0.0, 1.0) and isinstance(out, Terminal) and out.state.key() == st_.key()


@pytest.mark.parametrize("arg, cost", [("1", 1.0), ("0 - 3", 0.0), ("5", 5.0)])
def test_consume_step(arg, cost):
    prog, vs = load_program(f"consume({arg})")
    c, [(p, out)] = step(Running.of(prog.body, basis_state(vs)))
    assert c == cost and isinstance(out, Terminal)


def test_measure_in_sequence_branches(ct):
    prog, vs = ct
    loop = prog.body.second
    a, b = 0.6, 0.8
    cfg = Running((loop.body.second, loop),
                  make_state(vs, {"x": 1}, [a, b]).apply(loop.body.first.gate, ["q"]))
    c, branches = step(cfg)
    assert c == 0 and len(branches) == 2
    by_outcome = {out.state.store["x"]: (p, out) for p, out in branches}
    assert by_outcome[0][0] == pytest.approx((a + b) ** 2 / 2)
    for k, (_, out) in by_outcome.items():
        assert isinstance(out, Running) and out.stack[-1] is loop
        np.testing.assert_allclose(np.abs(out.state.amps), np.eye(2)[k], atol=1e-12)


def test_expand_zero_steps(ct):
    cfg = ct_loop_config(ct, [0, 1])
    rep = expand(cfg, 0)
    assert rep.cost == 0 and rep.terminal == [] and rep.running[0][1] is cfg


def test_coin_toss_four_and_eight_steps(ct):
    cfg = ct_loop_config(ct, [0, 1])
    rep = expand(cfg, 4)
    assert rep.cost == pytest.approx(1.0)
    assert rep.terminal_mass == 0
    assert sorted(w for w, _ in rep.running) == pytest.approx([0.5, 0.5])
    rep = expand(cfg, 8)
    assert rep.cost == pytest.approx(1.5)
    assert rep.terminal_mass == pytest.approx(0.5)


def test_coin_toss_limit(ct):
    rng = np.random.default_rng(5)
    for _ in range(10):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        a, b = v / np.linalg.norm(v)
        cost, mass = ecost_approx(ct_loop_config(ct, [a, b]), 800)
        assert cost == pytest.approx(1 + abs(a - b) ** 2, abs=1e-6)
        assert mass == pytest.approx(1, abs=1e-9)


def test_single_consume():
    prog, vs = load_program("consume(5)")
    assert ecost_approx(Running.of(prog.body, basis_state(vs)), 1) == (5.0, 1.0)
    assert ecost_approx(Running.of(prog.body, basis_state(vs)), 0) == (0.0, 0.0)


def test_rus_forward():
    prog, vs = load("rus.qw")
    cost, mass = ecost_approx(Running.of(prog.body, basis_state(vs)), 400)
    assert cost == pytest.approx(8 / 3, abs=1e-6)


def test_coin_toss_terminal_state(ct):
    prog, vs = ct
    cfg = ct_loop_config(ct, [0.6, 0.8j])
    f = lambda s: 3.0 if s.store["x"] == 0 and abs(s.amps[0]) > 1 - 1e-9 else 0.0  # noqa: E731
    assert expected_value_approx(cfg, f, 600) == pytest.approx(3.0, abs=1e-9)


def test_terminal_config_value():
    prog, vs = load_program("bool x; skip")
    st_ = basis_state(vs, 0, {"x": 1})
    assert expected_value_approx(Terminal(st_), lambda s: 7.0, 1) == 7.0
    assert expected_value_approx(Terminal(st_), lambda s: 7.0, 0) == 0.0


def test_divergent_program_has_empty_normal_form():
    prog, vs = load_program("while (true) { skip }")
    cfg = Running.of(prog.body, basis_state(vs))
    for n in (0, 1, 10, 100):
        assert expected_value_approx(cfg, lambda s: 1.0, n) == 0.0
        assert nf_approx(cfg, n) == []


def test_truncation_is_reported():
    prog, vs = load_program("""
        bool x; qreg q[2]; int n;
        while (n < 6) { q *= H; x = meas(q); if (x) { consume(n) } else { n = n + 0 }; n = n + 1 }
    """)
    cfg = Running.of(prog.body, basis_state(vs))
    full = expand(cfg, 40)
    cut = expand(cfg, 40, branch_cap=1)
    assert cut.truncated and cut.dropped_mass > 0
    assert cut.cost <= full.cost + 1e-12
    with pytest.raises(TruncationError):
        expand(cfg, 40, branch_cap=1, strict=True)


def test_expansion_is_deterministic():
    prog, vs = load("rus.qw")
    a = expand(Running.of(prog.body, basis_state(vs)), 120)
    b = expand(Running.of(prog.body, basis_state(vs)), 120)
    assert a.cost == b.cost and a.costs_per_step == b.costs_per_step
    assert [w for w, _ in a.terminal] == [w for w, _ in b.terminal]


# ---------------------------------------------------------------------------
# properties on random programs


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_each_statement_kind_fires_one_rule(seed):
    rng = np.random.default_rng(seed)
    _, prog, vs = random_program(rng, loops=True)
    st_ = random_state(vs, rng)
    for s in walk(prog.body):
        c, branches = step(Running.of(s, st_))
        assert c >= 0
        assert 1 <= len(branches) <= 2
        assert sum(p for p, _ in branches) == pytest.approx(1, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mass_conservation_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    _, prog, vs = random_program(rng, loops=True)
    cfg = Running.of(prog.body, random_state(vs, rng))
    prev_cost, prev_mass = 0.0, 0.0
    for n in range(0, 25, 3):
        rep = expand(cfg, n)
        assert rep.terminal_mass + rep.residual_mass == pytest.approx(1, abs=1e-9)
        assert rep.cost >= prev_cost - 1e-12 and rep.terminal_mass >= prev_mass - 1e-12
        assert all(c >= 0 for c in rep.costs_per_step)
        prev_cost, prev_mass = rep.cost, rep.terminal_mass


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_forward_engine_matches_unmerged_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    _, prog, vs = random_program(rng, loops=True)
    st_ = random_state(vs, rng)
    f = random_expectation(vs, rng)
    space, s, v = O.unpack(st_)
    cost, terminal, running = O.forward(space, prog.body, s, v, n)
    rep = expand(Running.of(prog.body, st_), n)
    assert rep.cost == pytest.approx(cost, abs=1e-9)
    assert rep.terminal_mass == pytest.approx(sum(w for w, *_ in terminal), abs=1e-9)
    want = math.fsum(w * O.expectation(f, space, s2, v2) for w, s2, v2, _ in terminal)
    got = math.fsum(w * f(t) for w, t in rep.terminal)
    assert got == pytest.approx(want, abs=1e-9)
