import numpy as np
import pytest

import oracle
from conftest import load
from randprog import random_program, random_state
from qet.costs import DensityCost, loewner_leq
from qet.denotational import forward_mixture, strong_adequacy_check
from qet.pars import Running
from qet.state import basis_state, make_state
from qet.syntax import load_program
from qet.transformer import wp_denotational, wp_step_indexed, denot_continuation


def oracle_denotation(prog, st, n=400):
    """Terminal mixture by plain enumeration, keyed like the package's maps."""
    space, s, vec = oracle.unpack(st)
    names, nb = st.store.names, st.store.n_bools
    _, terminal, running = oracle.forward(space, prog.body, s, vec, n)
    assert not running
    out = {}
    for w, s2, v, _ in terminal:
        key = (tuple(s2[x] for x in names[:nb]), tuple(s2[x] for x in names[nb:]))
        out[key] = out.get(key, 0) + w * np.outer(v, v.conj())
    return out


def test_terminal_configuration():
    prog, vs = load_program("bool x; qreg q[2]; skip")
    st = basis_state(vs, 1, {"x": 1})
    rep = strong_adequacy_check(prog.body, st, 3)
    assert rep.passed and rep.gap == 0.0 and rep.residual == 0.0
    (key,) = rep.denotation.keys()
    assert np.allclose(rep.denotation.get(key), np.diag([0, 1]))


def test_hadamard_then_measure_is_a_mixture():
    prog, vs = load_program("bool x; qreg q[2]; q *= H; x = meas(q)")
    den = wp_denotational(prog.body, basis_state(vs, 0)).value
    assert sorted(den.keys()) == [((0,), ()), ((1,), ())]
    assert np.allclose(den.get(((0,), ())), np.diag([0.5, 0]))
    assert np.allclose(den.get(((1,), ())), np.diag([0, 0.5]))


def test_loop_free_programs_match_enumeration():
    rng = np.random.default_rng(17)
    for _ in range(60):
        _, prog, vs = random_program(rng)
        st = random_state(vs, rng)
        den = wp_denotational(prog.body, st).value
        ref = oracle_denotation(prog, st)
        assert set(den.keys()) == set(ref)
        for key, m in ref.items():
            assert np.allclose(den.get(key), m, atol=1e-9)
        assert den.is_valid()
        assert den.trace() == pytest.approx(1.0, abs=1e-9)


def test_coin_toss_adequacy():
    prog, vs = load("ct.qw")
    st = basis_state(vs, 1)
    rep = strong_adequacy_check(prog.body, st, 60, tol=1e-9)
    assert rep.passed
    assert rep.residual <= 2 ** -14
    assert rep.gap <= 2 ** -14 + 1e-9
    assert rep.loewner_ok
    js = rep.to_json()
    assert js["verdict"] == "Pass" and js["steps"] == 60


@pytest.mark.parametrize("name,init", [("ct", 0), ("rus", 0), ("walk_n2", 1), ("walk_n2", 3)])
def test_forward_mixture_mass_and_monotonicity(name, init):
    prog, vs = load(f"{name}.qw")
    st = basis_state(vs, init)
    cfg = Running.of(prog.body, st)
    cs = DensityCost(vs.dim)
    prev = None
    for n in range(0, 40, 3):
        mix, residual = forward_mixture(cfg, n, vs.dim)
        assert mix.is_valid()
        assert mix.trace() + residual == pytest.approx(1.0, abs=1e-9)
        stepped = wp_step_indexed(cfg, denot_continuation, n, cs)
        assert cs.distance(stepped, mix) <= 1e-9
        if prev is not None:
            assert cs.leq(prev, mix, 1e-9)
        prev = mix
    den = wp_denotational(prog.body, st).value
    assert cs.leq(prev, den, 1e-9)
    assert all(loewner_leq(prev.get(k), den.get(k), 1e-9) for k in prev.keys())


def test_random_superposition_start():
    prog, vs = load("ct.qw")
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.normal(size=2) + 1j * rng.normal(size=2)
        st = make_state(vs, {"x": 1}, a / np.linalg.norm(a))
        assert strong_adequacy_check(prog.body, st, 50, tol=1e-9).passed
