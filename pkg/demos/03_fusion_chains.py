"""
Entangling a chain of qubits with probabilistic fusions
=======================================================

A fusion succeeds with probability 1/4 at a cost of one unit.  Building a
four-qubit chain repeats fusions until all three links hold.  Summaries let
us verify each block once and reuse the result at every call site.
"""

# %%
from qet import ZERO, Running, basis_state, ecost_approx, load_program
from qet.cli import corpus_dir
from qet.invariants import bound_whole_program, parse_invariant_file, program_suite


def certify(name, suite_size):
    prog, vs = load_program((corpus_dir() / f"{name}.qw").read_text())
    inv = parse_invariant_file((corpus_dir() / f"{name}.inv").read_text())
    st = basis_state(vs)
    rep = bound_whole_program(prog, inv.post, inv.invariants, inv.summaries,
                              program_suite(vs, suite_size, 0, [st]), initial=[st])
    for r in rep.summary_reports + rep.loop_reports:
        print("  ", r.describe())
    print(f"{name}: {rep.verdict}, bound {rep.bounds[0]:g}")
    return prog, st


# %%
certify("fuse", 50)
certify("chain4", 50)

# %% Four chains of four qubits, then three fusions to join them.
prog, st = certify("chain_k4", 20)

# %% The forward semantics is far from terminating after a few thousand steps:
# the certified bound holds, but the expected cost is still accumulating.
for n in (500, 2000, 5000):
    cost, mass = ecost_approx(Running.of(prog.body, st), n)
    print(f"n={n:5d}  cost so far={cost:9.3f}  terminated mass={mass:.4f}")
