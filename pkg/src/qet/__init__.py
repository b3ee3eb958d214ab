"""Expected cost analysis for a classical-quantum while language.

Forward: ``expand`` / ``ecost_approx`` run the cost-annotated reduction
semantics.  Backward: ``wp_eval`` evaluates the expectation transformer over
a chosen cost structure.  ``bound_whole_program`` certifies upper bounds from
user-supplied loop invariants and block summaries.
"""
from .costs import (DENOT, ECOST, VALUE, WP, CostStructure, DensityCost, DensityMap, convex_sum,
                    kleene_sup, loewner_leq, structure)
from .denotational import DenotReport, forward_mixture, strong_adequacy_check
from .errors import (ChainViolation, DimensionError, IntegerOverflow, MacroError,
                     MissingInvariant, NonExpectationError, ParseError, QetError, SummaryMisuse,
                     TruncationError, UnsummarizedLoop, WellFormednessError)
from .expectations import (ONE, ZERO, Expectation, StateSuite, classical_check,
                           independence_check, parse_expectation, to_sexpr)
from .invariants import (BoundReport, CheckReport, Summary, bound_whole_program,
                         check_summary, check_upper_invariant, parse_invariant_file)
from .pars import (ExpansionReport, Running, Terminal, ecost_approx, expand,
                   expected_value_approx, nf_approx, step)
from .state import MachineState, apply_unitary, basis_state, eval_expr, make_state
from .syntax import (Program, VarSets, expand_macros, load_program, parse_program, pretty,
                     validate)
from .transformer import (FixpointCfg, Status, WpResult, qect, qev, qwp, wp_denotational,
                          wp_eval, wp_step_indexed)

__all__ = [
    "DENOT", "ECOST", "VALUE", "WP", "CostStructure", "DensityCost", "DensityMap", "convex_sum",
    "kleene_sup", "loewner_leq", "structure",
    "DenotReport", "forward_mixture", "strong_adequacy_check",
    "ChainViolation", "DimensionError", "IntegerOverflow", "MacroError", "MissingInvariant",
    "NonExpectationError", "ParseError", "QetError", "SummaryMisuse", "TruncationError",
    "UnsummarizedLoop", "WellFormednessError",
    "ONE", "ZERO", "Expectation", "StateSuite", "classical_check", "independence_check",
    "parse_expectation", "to_sexpr",
    "BoundReport", "CheckReport", "Summary", "bound_whole_program", "check_summary",
    "check_upper_invariant", "parse_invariant_file",
    "ExpansionReport", "Running", "Terminal", "ecost_approx", "expand", "expected_value_approx",
    "nf_approx", "step",
    "MachineState", "apply_unitary", "basis_state", "eval_expr", "make_state",
    "Program", "VarSets", "expand_macros", "load_program", "parse_program", "pretty", "validate",
    "FixpointCfg", "Status", "WpResult", "qect", "qev", "qwp", "wp_denotational", "wp_eval",
    "wp_step_indexed",
]
