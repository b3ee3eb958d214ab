"""
A Hadamard walk on a cycle
==========================

The walker stops once its position is observed to be 0.  On two positions
the expected number of steps is 2 from position 1 and 1 from position 0.
The quadratic-form invariants below bound the cost for arbitrary
superpositions.
"""

# %%
import numpy as np

from qet import ZERO, Running, basis_state, ecost_approx, load_program, make_state, qect
from qet.cli import corpus_dir
from qet.invariants import check_upper_invariant, parse_invariant_file, program_suite

for n in (2, 3):
    prog, vs = load_program((corpus_dir() / f"walk_n{n}.qw").read_text())
    inv = parse_invariant_file((corpus_dir() / f"walk_n{n}.inv").read_text())
    rep = check_upper_invariant(prog.body.second, ZERO, inv.invariants["loop0"],
                                program_suite(vs, 100, 0))
    print(f"n={n}: {rep.describe()}")

# %% Exact costs from basis states (index = coin * n + position).
prog, vs = load_program((corpus_dir() / "walk_n2.qw").read_text())
for index in range(4):
    st = basis_state(vs, index)
    print(index, qect(prog.body, ZERO, st).value,
          ecost_approx(Running.of(prog.body, st), 400)[0])

# %% The invariant against the true cost on random superpositions.
g2 = parse_invariant_file((corpus_dir() / "walk_n2.inv").read_text()).invariants["loop0"]
rng = np.random.default_rng(1)
for _ in range(5):
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    st = make_state(vs, {"x": 1}, a / np.linalg.norm(a))
    print(f"true {qect(prog.body.second, ZERO, st).value:.6f}  bound {g2(st):.6f}")
