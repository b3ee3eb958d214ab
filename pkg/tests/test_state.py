import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as O
from qet.errors import DimensionError, IntegerOverflow
from qet.state import (Store, apply_unitary, basis_state, eval_expr, gate_matrix, haar_vector,
                       make_state, shift_matrix, state_from_json)
from qet.syntax import Gate, VarSets, parse_expr

VS = VarSets(("x",), ("n",), (("q", 2), ("r", 3), ("s", 2)))
KINDS = {"x": "bool", "n": "int"}


def store(**kw):
    return Store.from_dict(kw, tuple(kw), 0)


def test_true_is_one():
    assert eval_expr(parse_expr("true"), store()) == 1


def test_literal_arithmetic():
    assert eval_expr(parse_expr("n + 2", KINDS), store(n=3)) == 5


def test_overflow_is_an_error():
    with pytest.raises(IntegerOverflow):
        eval_expr(parse_expr("n + 1", KINDS), store(n=2**63 - 1))
    with pytest.raises(IntegerOverflow):
        eval_expr(parse_expr("n * 2", KINDS), store(n=-(2**62) - 1))


def test_boolean_connectives():
    s = store(x=1, n=4)
    assert eval_expr(parse_expr("x and n < 5", KINDS), s) == 1
    assert eval_expr(parse_expr("not x or n == 3", KINDS), s) == 0
    assert eval_expr(parse_expr("n <= 4", KINDS), s) == 1


def test_hadamard_on_qubit():
    a, b = 0.6, 0.8j
    out = apply_unitary(gate_matrix(Gate("H"), [2]), [0], (2,), np.array([a, b]))
    np.testing.assert_allclose(out, [(a + b) / math.sqrt(2), (a - b) / math.sqrt(2)])


def test_identity_matrix_leaves_state():
    rng = np.random.default_rng(0)
    v = haar_vector(12, rng)
    np.testing.assert_allclose(apply_unitary(np.eye(3), [1], (2, 3, 2), v), v)


def test_cnot_control_first():
    v = np.zeros(4, complex)
    v[2] = 1  # |10>
    np.testing.assert_array_equal(apply_unitary(gate_matrix(Gate("CNOT"), [2, 2]), [0, 1], (2, 2), v),
                                  [0, 0, 0, 1])
    # control on the second factor when the registers are given in reverse
    np.testing.assert_array_equal(apply_unitary(gate_matrix(Gate("CNOT"), [2, 2]), [1, 0], (2, 2), v),
                                  [0, 0, 1, 0])


def test_t_gate_phase():
    np.testing.assert_allclose(gate_matrix(Gate("T"), [2]), np.diag([1, cmath.exp(1j * math.pi / 4)]))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_unitary(np.eye(2), [1], (2, 3), np.ones(6) / math.sqrt(6))
    with pytest.raises(DimensionError):
        make_state(VS, {}, np.ones(4) / 2)


def test_coin_toss_measurement_probability():
    vs = VarSets(("x",), (), (("q", 2),))
    a, b = 0.6, -0.8
    st = make_state(vs, {}, [a, b]).apply(Gate("H"), ["q"])
    branches = dict((post.store["x"], p) for p, post in st.measure("q", "x"))
    assert branches[0] == pytest.approx(abs(a + b) ** 2 / 2)
    assert branches[1] == pytest.approx(abs(a - b) ** 2 / 2)


def test_measuring_basis_state_gives_one_branch():
    vs = VarSets(("x",), (), (("q", 2),))
    [(p, post)] = basis_state(vs, 0, {"x": 1}).measure("q", "x")
    assert p == 1 and post.store["x"] == 0
    np.testing.assert_array_equal(post.amps, [1, 0])


def test_measzero_on_walk_register():
    n = 3
    vs = VarSets(("x",), (), (("c", 2), ("p", n)))
    st = make_state(vs, {}, haar_vector(2 * n, np.random.default_rng(3)))
    a = np.abs(st.amps) ** 2
    probs = {post.store["x"]: p for p, post in st.measure("p", "x", zero_test=True)}
    assert probs[1] == pytest.approx(1 - (a[0] + a[n]))


def test_meas_requires_qubit():
    st = basis_state(VS)
    with pytest.raises(DimensionError):
        st.measure("r", "x")


def test_state_json_roundtrip():
    st = make_state(VS, {"x": 1, "n": -4}, haar_vector(12, np.random.default_rng(1)))
    back = state_from_json(VS, st.to_json())
    assert back.key() == st.key()
    assert back.store.as_dict() == {"x": 1, "n": -4}


def test_key_ignores_global_phase():
    st = make_state(VS, {}, haar_vector(12, np.random.default_rng(2)))
    assert st.with_amps(st.amps * cmath.exp(0.7j)).key() == st.key()
    assert st.assign("n", 1).key() != st.key()


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_shift_is_permutation(n):
    s = shift_matrix(n)
    assert set(np.unique(s)) == {0.0, 1.0}
    assert (s.sum(axis=0) == 1).all() and (s.sum(axis=1) == 1).all()
    np.testing.assert_allclose(s.T @ s, np.eye(2 * n), atol=1e-12)
    np.testing.assert_array_equal(s, O.shift(n))


def _unitary(dim, rng):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations([0, 1, 2]), st.integers(1, 3))
def test_apply_unitary_matches_dense_embedding(seed, order, k):
    rng = np.random.default_rng(seed)
    dims = (2, 3, 2)
    axes = order[:k]
    u = _unitary(int(np.prod([dims[a] for a in axes])), rng)
    v = haar_vector(12, rng)
    out = apply_unitary(u, axes, dims, v)
    space = O.Space([("q", 2), ("r", 3), ("s", 2)])
    want = space.embed(u, [space.names[a] for a in axes]) @ v
    np.testing.assert_allclose(out, want, atol=1e-12)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(v), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["q", "s", "r"]), st.booleans())
def test_measurement_branches(seed, reg, zero_test):
    if reg == "r":
        zero_test = True
    rng = np.random.default_rng(seed)
    v = haar_vector(12, rng)
    if rng.random() < 0.3:
        v = np.zeros(12, complex)
        v[int(rng.integers(12))] = 1
    st_ = make_state(VS, {}, v)
    out = st_.measure(reg, "x", zero_test=zero_test)
    assert 1 <= len(out) <= 2
    assert sum(p for p, _ in out) == pytest.approx(1, abs=1e-9)
    for _, post in out:
        assert post.norm() == pytest.approx(1, abs=1e-9)
    if len(out) == 2:
        assert abs(np.vdot(out[0][1].amps, out[1][1].amps)) < 1e-9
    space = O.Space(list(VS.qregs))
    want = O.measure(space, reg, "x", {"x": 0, "n": 0}, v, zero_test)
    assert [p for p, _, _ in want] == pytest.approx([p for p, _ in out], abs=1e-12)
