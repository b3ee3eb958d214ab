"""Command-line front end: ``qet <command> PROGRAM [options]``.

Commands: parse, run, wp, check, adequacy, denot, corpus.  Exit status is 0
on success, 1 when a check fails, 2 on usage or input errors.  A human
readable summary goes to stdout; ``--json PATH`` writes the full report
(sorted keys, so identical requests give identical bytes).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .costs import STRUCTURES
from .denotational import density_map_json, strong_adequacy_check
from .errors import DimensionError, MacroError, ParseError, QetError, WellFormednessError
from .expectations import ZERO, Expectation, parse_expectation, to_sexpr
from .invariants import bound_whole_program, parse_invariant_file, program_suite
from .pars import DEFAULT_BRANCH_CAP, Running, expand, expected_value_approx
from .state import MachineState, make_state, state_from_json
from .syntax import load_program, pretty
from .transformer import FixpointCfg, qect, qev, qwp, wp_denotational

ADEQUACY_TOL = 1e-6


class UsageError(Exception):
    """Bad command-line input (exit status 2)."""


INPUT_ERRORS = (ParseError, MacroError, WellFormednessError, DimensionError, OSError,
                json.JSONDecodeError, UsageError)


def corpus_dir() -> Path:
    return Path(str(resources.files("qet") / "corpus"))


def schema_path() -> Path:
    return Path(str(resources.files("qet") / "report.schema.json"))


def resolve_path(path: str) -> Path:
    """An existing path, or else the bundled corpus file of the same name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = corpus_dir() / p.name
    if bundled.exists():
        return bundled
    raise UsageError(f"no such file: {path}")


# ---------------------------------------------------------------------------
# inputs


def initial_state(vs, desc) -> MachineState:
    """``desc`` is None (all-zero), a preset name, a JSON text, a JSON file
    path or an already decoded dict.

    Presets: ``zero``; ``plus`` (|+> on every register); ``basis:K``.
    A dict may hold ``store``, and one of ``amps``, ``basis`` or ``preset``.
    """
    if desc is None:
        desc = {}
    if isinstance(desc, str):
        text = desc.strip()
        if text in ("zero", "plus") or text.startswith("basis:"):
            desc = {"preset": text}
        elif text.startswith("{"):
            desc = json.loads(text)
        else:
            desc = json.loads(resolve_path(text).read_text())
    desc = dict(desc)
    preset = desc.pop("preset", None)
    if preset is None:
        return state_from_json(vs, desc)
    dim = int(np.prod([d for _, d in vs.qregs])) if vs.qregs else 1
    if preset == "zero":
        amps = np.zeros(dim, complex)
        amps[0] = 1
    elif preset == "plus":
        amps = np.ones(dim, complex) / math.sqrt(dim)
    elif preset.startswith("basis:"):
        amps = np.zeros(dim, complex)
        amps[int(preset.split(":", 1)[1])] = 1
    else:
        raise UsageError(f"unknown state preset {preset!r}")
    return make_state(vs, desc.get("store", {}), amps)


def continuation(text, decls=None) -> Expectation:
    """``zero``, ``one``, an s-expression, or a file holding one."""
    if text is None or text == "zero":
        return ZERO
    if text == "one":
        return parse_expectation("(const 1)")
    if text.lstrip().startswith("("):
        return parse_expectation(text, decls)
    return parse_expectation(resolve_path(text).read_text(), decls)


def _decls(vs) -> dict:
    d = {b: "bool" for b in vs.bools}
    d.update({v: "int" for v in vs.ints})
    d.update({q: "qreg" for q, _ in vs.qregs})
    return d


def num(x):
    """JSON-safe number (infinities as strings)."""
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# ---------------------------------------------------------------------------
# commands; each returns (report dict, human lines)


def cmd_parse(args):
    prog, vs = load_program(resolve_path(args.program).read_text())
    dim = int(np.prod([d for _, d in vs.qregs])) if vs.qregs else 1
    rep = {"expanded": pretty(prog), "bools": list(vs.bools), "ints": list(vs.ints),
           "qregs": [[q, d] for q, d in vs.qregs], "dim": dim}
    lines = [pretty(prog), "", f"B = {{{', '.join(vs.bools)}}}  V = {{{', '.join(vs.ints)}}}  "
             f"Q = {{{', '.join(q for q, _ in vs.qregs)}}}  dim {dim}"]
    return rep, lines, True


def cmd_run(args):
    prog, vs = load_program(resolve_path(args.program).read_text())
    st = initial_state(vs, args.init)
    res = expand(Running.of(prog.body, st), args.steps, args.branch_cap)
    rep = {"steps": args.steps, "cost": num(res.cost), "terminal_mass": res.terminal_mass,
           "residual_mass": res.residual_mass, "dropped_mass": res.dropped_mass,
           "truncated": res.truncated, "running_branches": len(res.running),
           "terminal_states": len(res.terminal)}
    lines = [f"steps {args.steps}: expected cost so far {res.cost:.10g}",
             f"terminal mass {res.terminal_mass:.10g}, running mass {res.residual_mass:.10g}"
             f" over {len(res.running)} branches"]
    if res.truncated:
        lines.append(f"TRUNCATED at {args.branch_cap} branches; dropped mass {res.dropped_mass:.3g}")
    if args.cont is not None:
        f = continuation(args.cont, _decls(vs))
        v = expected_value_approx(Running.of(prog.body, st), f, args.steps + 1, args.branch_cap)
        rep["expected_value"] = num(v)
        lines.append(f"expected value of {to_sexpr(f)} over terminal states: {v:.10g}")
    return rep, lines, True


def cmd_wp(args):
    prog, vs = load_program(resolve_path(args.program).read_text())
    st = initial_state(vs, args.init)
    cfg = FixpointCfg(args.max_iter, args.tol)
    name = args.cost_structure
    if name == "denot":
        res = wp_denotational(prog.body, st, cfg)
        rep = {"cost_structure": name, "status": res.status.value,
               "value": density_map_json(res.value), "trace": res.value.trace()}
        lines = [f"denotation: {len(res.value.keys())} classical keys, trace "
                 f"{res.value.trace():.10g} ({res.status.value})"]
        return rep, lines, True
    f = continuation(args.cont, _decls(vs))
    fn = {"ecost": qect, "value": qev, "wp": qwp}[name]
    res = fn(prog.body, f, st, cfg)
    rep = {"cost_structure": name, "continuation": to_sexpr(f), "value": num(res.value),
           "status": res.status.value, "rounds": res.rounds}
    lines = [f"value {res.value:.12g}  status {res.status.value}  ({res.rounds} rounds)"]
    return rep, lines, True


def cmd_check(args):
    if args.invariant is None:
        raise UsageError("check needs --invariant FILE")
    prog, vs = load_program(resolve_path(args.program).read_text())
    inv = parse_invariant_file(resolve_path(args.invariant).read_text())
    post = continuation(args.cont, _decls(vs)) if args.cont is not None else inv.post
    fixtures = [initial_state(vs, args.init)] if args.init is not None else []
    suite = program_suite(vs, args.suite_size, args.seed, fixtures)
    res = bound_whole_program(prog, post, inv.invariants, inv.summaries, suite,
                              tol=args.tol_check)
    rep = res.to_json()
    lines = [r.describe() for r in res.summary_reports + res.loop_reports]
    finite = [b for b in res.bounds if not math.isinf(b)]
    if args.init is not None:
        rep["bound_at_init"] = num(res.bounds[0])
        lines.append(f"{res.verdict}: certified bound {res.bounds[0]:.10g} at the initial state")
    elif finite:
        lines.append(f"{res.verdict}: bounds on suite range over "
                     f"[{min(finite):.10g}, {max(finite):.10g}]")
    else:
        lines.append(res.verdict)
    return rep, lines, res.passed


def cmd_adequacy(args):
    prog, vs = load_program(resolve_path(args.program).read_text())
    st = initial_state(vs, args.init)
    cfg = FixpointCfg(args.max_iter, args.tol)
    f = continuation(args.cont, _decls(vs))
    cfg0 = Running.of(prog.body, st)
    back = qect(prog.body, ZERO, st, cfg)
    fwd = expand(cfg0, args.steps, args.branch_cap)
    back_v = qev(prog.body, f, st, cfg)
    fwd_v = expected_value_approx(cfg0, f, args.steps + 1, args.branch_cap)
    gap_c = _gap(back.value, fwd.cost)
    gap_v = _gap(back_v.value, fwd_v)
    ok = gap_c <= ADEQUACY_TOL and gap_v <= ADEQUACY_TOL
    rep = {"steps": args.steps, "backward_cost": num(back.value), "forward_cost": num(fwd.cost),
           "backward_status": back.status.value, "cost_gap": num(gap_c),
           "backward_value": num(back_v.value), "forward_value": num(fwd_v),
           "value_gap": num(gap_v), "residual_mass": fwd.residual_mass,
           "verdict": "Pass" if ok else "Fail"}
    lines = [f"expected cost: backward {back.value:.10g} ({back.status.value}), forward "
             f"{fwd.cost:.10g} after {args.steps} steps",
             f"expected value of {to_sexpr(f)}: backward {back_v.value:.10g}, forward {fwd_v:.10g}",
             f"residual running mass {fwd.residual_mass:.3g}; "
             f"{'Pass' if ok else 'Fail'} at {ADEQUACY_TOL:g}"]
    return rep, lines, ok


def _gap(a, b) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return abs(a - b)


def cmd_denot(args):
    prog, vs = load_program(resolve_path(args.program).read_text())
    st = initial_state(vs, args.init)
    res = strong_adequacy_check(prog.body, st, args.steps, ADEQUACY_TOL,
                                FixpointCfg(args.max_iter, args.tol))
    rep = res.to_json()
    lines = [f"denotation ({res.status}) vs forward mixture at depth {res.steps}: "
             f"max gap {res.gap:.3g}, residual mass {res.residual:.3g}",
             f"step-indexed gap {res.stepped_gap:.3g}; mixture below denotation: {res.loewner_ok}",
             "Pass" if res.passed else "Fail"]
    return rep, lines, res.passed


def cmd_corpus(args):
    directory = Path(args.program) if args.program else corpus_dir()
    rows, ok = run_corpus(directory, args.only)
    lines = [f"{'scenario':<22} {'expected':>16} {'computed':>16}  verdict"]
    for r in rows:
        lines.append(f"{r['name']:<22} {r['expected']:>16} {r['computed']:>16}  {r['verdict']}"
                     + (f"  ({r['note']})" if r.get("note") else ""))
    return {"rows": rows, "verdict": "Pass" if ok else "Fail"}, lines, ok


# ---------------------------------------------------------------------------
# corpus


def run_corpus(directory: Path | None = None, only=None) -> tuple:
    """Run every scenario of ``manifest.json`` in ``directory``.

    Returns ``(rows, all_passed)``.  Each row records the expected and
    computed values and a verdict.
    """
    directory = Path(directory) if directory is not None else corpus_dir()
    manifest = directory / "manifest.json"
    if not directory.is_dir() or not manifest.exists():
        raise UsageError(f"{directory} holds no corpus manifest")
    scenarios = json.loads(manifest.read_text())["scenarios"]
    if only:
        scenarios = [s for s in scenarios if s["name"] in only or s["program"] in only]
    if not scenarios:
        raise UsageError("no corpus scenarios selected")
    rows = [_scenario(directory, sc) for sc in scenarios]
    return rows, all(r["verdict"] == "Pass" for r in rows)


def _expected(sc):
    e = sc.get("expected")
    return float(Fraction(e)) if isinstance(e, str) else e


def _scenario(directory: Path, sc: dict) -> dict:
    prog, vs = load_program((directory / sc["program"]).read_text())
    st = initial_state(vs, sc.get("init"))
    kind = sc["kind"]
    tol = sc.get("tol", ADEQUACY_TOL)
    want = _expected(sc)
    note = ""
    ok = True
    if kind == "wp":
        f = continuation(sc.get("cont"), _decls(vs))
        got = qect(prog.body, f, st, FixpointCfg(sc.get("max_iter", 10_000))).value
    elif kind == "forward":
        res = expand(Running.of(prog.body, st), sc["steps"])
        got = res.cost
        if "min_terminal_mass" in sc:
            ok = res.terminal_mass >= sc["min_terminal_mass"]
            note = f"terminal mass {res.terminal_mass:.4f}, needs >= {sc['min_terminal_mass']}"
    elif kind == "bound":
        inv = parse_invariant_file((directory / sc["invariant"]).read_text())
        suite = program_suite(vs, sc.get("suite", 200), sc.get("seed", 0), [st])
        res = bound_whole_program(prog, inv.post, inv.invariants, inv.summaries, suite)
        got = res.bounds[0]
        ok = res.passed
        if not ok:
            note = "; ".join(r.describe() for r in res.summary_reports + res.loop_reports
                             if not r.passed)
    else:
        raise UsageError(f"unknown scenario kind {kind!r}")
    relation = sc.get("relation", "eq")
    if want is not None:
        if relation == "eq":
            ok = ok and abs(got - want) <= tol
        else:
            ok = ok and got <= want + tol
    return {"name": sc["name"], "kind": kind,
            "expected": "-" if want is None else (f"{want:.10g}" if relation == "eq"
                                                  else f"<= {want:.10g}"),
            "computed": f"{got:.10g}", "verdict": "Pass" if ok else "Fail", "note": note}


# ---------------------------------------------------------------------------
# entry point


COMMANDS = {"parse": cmd_parse, "run": cmd_run, "wp": cmd_wp, "check": cmd_check,
            "adequacy": cmd_adequacy, "denot": cmd_denot, "corpus": cmd_corpus}


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qet", description="Expected cost analysis of "
                                 "classical-quantum while programs.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("program", nargs="?", help="program file (corpus: corpus directory)")
    ap.add_argument("--init", help="initial state: preset, JSON text or JSON file")
    ap.add_argument("--cont", help="continuation expectation (zero, one, s-expression or file)")
    ap.add_argument("--invariant", help="invariant/summary file for check")
    ap.add_argument("--cost-structure", "--cost", dest="cost_structure", default="ecost",
                    choices=sorted(STRUCTURES))
    ap.add_argument("--steps", type=_nonneg_int, default=1000)
    ap.add_argument("--max-iter", type=_positive_int, default=10_000)
    ap.add_argument("--tol", type=_positive_float, default=1e-9,
                    help="fixed-point convergence tolerance")
    ap.add_argument("--tol-check", type=_positive_float, default=1e-9,
                    help="tolerance of invariant and summary residuals")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--suite-size", type=_nonneg_int, default=200)
    ap.add_argument("--branch-cap", type=_positive_int, default=DEFAULT_BRANCH_CAP)
    ap.add_argument("--only", nargs="*", help="corpus: scenario or program names to run")
    ap.add_argument("--json", dest="json_path", help="write the JSON report here")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command != "corpus" and args.program is None:
        print("qet: a program file is required", file=sys.stderr)
        return 2
    try:
        rep, lines, ok = COMMANDS[args.command](args)
    except INPUT_ERRORS as e:
        print(f"qet: {e}", file=sys.stderr)
        return 2
    except QetError as e:
        print(f"qet: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    rep = {"command": args.command,
           "program": Path(args.program).name if args.program else "corpus",
           "verdict": rep.pop("verdict", "Pass" if ok else "Fail"), **rep}
    print("\n".join(lines))
    if args.json_path:
        Path(args.json_path).write_text(json.dumps(rep, sort_keys=True, indent=2) + "\n")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
