"""
Expected cost of a quantum coin toss
====================================

A qubit is put through a Hadamard gate and measured until the outcome is 0.
Every round costs one unit.  We compute the expected cost three ways and
compare them with the closed form 1 + |alpha - beta|^2.
"""

# %%
import numpy as np

from qet import ZERO, Running, ecost_approx, load_program, make_state, qect
from qet.cli import corpus_dir

prog, vs = load_program((corpus_dir() / "ct.qw").read_text())
print(vs.qregs, vs.bools)

# %% Backward: the loop is solved by Kleene iteration on the states it reaches.
rng = np.random.default_rng(0)
a = rng.normal(size=2) + 1j * rng.normal(size=2)
alpha, beta = a / np.linalg.norm(a)
st = make_state(vs, {"x": 0}, np.array([alpha, beta]))

back = qect(prog.body, ZERO, st)
print("backward", back.value, back.status.value)

# %% Forward: run the small-step semantics and sum the cost paid within n steps.
for n in (10, 50, 200, 800):
    cost, mass = ecost_approx(Running.of(prog.body, st), n)
    print(f"n={n:4d}  cost={cost:.10f}  terminated mass={mass:.6f}")

# %% Closed form
print("1 + |alpha - beta|^2 =", 1 + abs(alpha - beta) ** 2)
