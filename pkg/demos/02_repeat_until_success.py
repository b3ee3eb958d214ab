"""
Counting T gates in a repeat-until-success circuit
==================================================

Each attempt uses two T gates and succeeds with probability 3/4, so the
expected T-count is 8/3.  The invariant [x] * 8/3 certifies that bound for
every initial state in a random suite.
"""

# %%
from qet import ZERO, Running, basis_state, ecost_approx, load_program, qect
from qet.cli import corpus_dir
from qet.invariants import check_upper_invariant, parse_invariant_file, program_suite

prog, vs = load_program((corpus_dir() / "rus.qw").read_text())
st = basis_state(vs)
print("backward", qect(prog.body, ZERO, st).value)
print("forward ", ecost_approx(Running.of(prog.body, st), 400)[0])

# %% Check both premises of the invariant rule on 200 random states.
inv = parse_invariant_file((corpus_dir() / "rus.inv").read_text())
loop = prog.body.second
report = check_upper_invariant(loop, ZERO, inv.invariants["loop0"], program_suite(vs, 200, 0))
print(report.describe())

# %% A candidate that is too small is rejected, and the report says where.
from qet.expectations import parse_expectation

weak = parse_expectation("(mul (ind x) (const 2))")
bad = check_upper_invariant(loop, ZERO, weak, program_suite(vs, 200, 0))
print(bad.describe())
print("worst state:", program_suite(vs, 200, 0)[bad.worst_index].to_json())
