"""``spcf-cex verify FILE``: search a program for reachable errors and print
a concrete breaking context for the first one that validates."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from . import oracle
from .cex import Counterexample, NoModel, Status, build_counterexample, checked
from .logic import BoundedSolver, Prover, SmtLibSolver, SolverFailure
from .machine import Blame, Budget, Exhausted, SearchStats, explore
from .syntax import (
    ParseError,
    Program,
    TypeCheckError,
    opaques,
    parse,
    render,
    typecheck,
)

EXIT_OK, EXIT_CEX, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

ERROR_NAMES = {"div": "Division_by_zero"}


@dataclass(frozen=True)
class RunConfig:
    input_path: str
    max_steps: int = 100_000
    max_states: int = 50_000
    solver_path: Optional[str] = None
    builtin_bound: int = 256
    format: str = "text"
    trace: bool = False
    validate: bool = True
    timeout: Optional[float] = 10.0
    differential: bool = False


def _positive_int(text: str) -> int:
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def _positive_float(text: str) -> float:
    x = float(text)
    if x <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spcf-cex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="search a program for errors")
    v.add_argument("file")
    v.add_argument("--solver", metavar="PATH", help="SMT-LIB2 solver executable (e.g. z3)")
    v.add_argument("--builtin-bound", type=_positive_int, default=256)
    v.add_argument("--max-steps", type=_positive_int, default=100_000)
    v.add_argument("--max-states", type=_positive_int, default=50_000)
    v.add_argument("--timeout", type=_positive_float, default=10.0, metavar="SECS")
    v.add_argument("--format", choices=("text", "json"), default="text")
    v.add_argument("--trace", action="store_true", help="print every reduction step to stderr")
    v.add_argument("--no-validate", dest="validate", action="store_false")
    v.add_argument(
        "--differential",
        action="store_true",
        help="for opaque-free programs, also compare against the concrete interpreter",
    )
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        input_path=args.file,
        max_steps=args.max_steps,
        max_states=args.max_states,
        solver_path=args.solver,
        builtin_bound=args.builtin_bound,
        format=args.format,
        trace=args.trace,
        validate=args.validate,
        timeout=args.timeout,
        differential=args.differential,
    )


def _bindings_json(c: Counterexample) -> dict:
    return {str(label): render(e) for label, e in sorted(c.bindings.items())}


def _model_json(c: Counterexample) -> dict:
    return {str(l): v for l, v in sorted(c.model.items())}


@dataclass
class _Result:
    verdict: str  # counterexample | safe | unknown
    status: str
    counterexample: Optional[Counterexample] = None
    notes: tuple[str, ...] = ()


def search(p: Program, config: RunConfig, prover: Prover, stats: SearchStats, trace=None) -> _Result:
    budget = Budget(config.max_steps, config.max_states, config.timeout)
    notes: list[str] = []
    for outcome in explore(p, budget, prover, trace, stats):
        if isinstance(outcome, Exhausted):
            notes.append(f"search stopped: {outcome.reason}")
            return _Result("unknown", "safe-within-budget", notes=tuple(notes))
        if not isinstance(outcome, Blame):
            continue
        c = build_counterexample(p, outcome, prover.solver)
        if isinstance(c, NoModel):
            notes.append(f"{outcome.label}: no model ({c.reason})")
            continue
        if not config.validate:
            return _Result("counterexample", "found", c, tuple(notes))
        c = checked(p, c)
        if c.validated is Status.YES:
            return _Result("counterexample", "found", c, tuple(notes))
        notes.append(f"{outcome.label}: validation failed ({c.detail})")
    if notes:
        return _Result("unknown", "safe-within-budget", notes=tuple(notes))
    return _Result("safe", "verified")


def _differential(p: Program, result: _Result, config: RunConfig) -> Optional[str]:
    if any(True for _ in opaques(p.root)):
        return None
    concrete = oracle.concrete_eval(p.root, config.max_steps)
    c = result.counterexample
    if isinstance(concrete, oracle.Blamed):
        agree = c is not None and (c.blame, c.op) == (concrete.label, concrete.op)
    else:
        agree = c is None
    return "agree" if agree else "disagree"


def report_json(p: Program, result: _Result, extra: dict) -> str:
    out: dict = {"verdict": result.verdict, "status": result.status}
    c = result.counterexample
    if c is not None:
        out.update(blame=str(c.blame), op=c.op, bindings=_bindings_json(c), model=_model_json(c))
        if c.validated is not Status.NO:
            out["validated"] = c.validated is Status.YES
    out["notes"] = list(result.notes)
    out.update(extra)
    return json.dumps(out, indent=2, sort_keys=True, ensure_ascii=False)


def report_text(p: Program, result: _Result, extra: dict) -> str:
    c = result.counterexample
    lines = []
    if c is None:
        lines.append("verified: no error is reachable" if result.status == "verified" else "no counterexample found within budget")
    else:
        name = ERROR_NAMES.get(c.op, c.op)
        lines.append(f"Error: {name} at {c.blame} ({c.op})")
        lines.append("Breaking context:")
        if not c.bindings:
            lines.append("  (none: the program fails on its own)")
        for label, e in sorted(c.bindings.items()):
            lines.append(f"  • at {label} = {render(e)}")
        if c.validated is not Status.NO:
            lines.append(f"validated: {c.validated.value}")
    lines.extend(f"note: {n}" for n in result.notes)
    lines.append(
        f"states explored: {extra['statesExplored']}, solver queries: {extra['solverQueries']}, backend: {extra['backend']}"
    )
    if "differential" in extra:
        lines.append(f"differential: {extra['differential']}")
    return "\n".join(lines)


def verify(config: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        with open(config.input_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"spcf-cex: cannot read {config.input_path}: {exc.strerror}", file=err)
        return EXIT_USAGE
    try:
        p = parse(text)
        typecheck(p)
    except ParseError as exc:
        print(f"{config.input_path}:{exc.line}:{exc.column}: parse error: {exc.message}", file=err)
        return EXIT_USAGE
    except TypeCheckError as exc:
        print(f"{config.input_path}: type error: {exc}", file=err)
        return EXIT_USAGE

    if config.solver_path:
        solver = SmtLibSolver(config.solver_path, timeout=config.timeout or 10.0)
    else:
        solver = BoundedSolver(config.builtin_bound)
    prover = Prover(solver)
    stats = SearchStats()
    trace = None
    if config.trace:
        def trace(before, rule, after):
            print(f"{after} | {rule}", file=err)

    started = time.monotonic()
    try:
        result = search(p, config, prover, stats, trace)
    except SolverFailure as exc:
        print(f"spcf-cex: solver failure: {exc}", file=err)
        return EXIT_SOLVER
    extra = {
        "statesExplored": stats.states_explored,
        "solverQueries": prover.queries,
        "backend": solver.name,
        "time": round(time.monotonic() - started, 3),
    }
    if config.differential:
        d = _differential(p, result, config)
        if d is not None:
            extra["differential"] = d
    render_report = report_json if config.format == "json" else report_text
    print(render_report(p, result, extra), file=out)
    return EXIT_CEX if result.counterexample is not None else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return verify(_config(args))


if __name__ == "__main__":
    sys.exit(main())
