"""Counterexample generation for Symbolic PCF by symbolic execution.

Typical use::

    from spcf_cex import parse, typecheck, run, build_counterexample, checked

    p = parse(source)
    typecheck(p)
    for blame in run(p).blames:
        c = checked(p, build_counterexample(p, blame))
"""

from .cex import (
    Counterexample,
    NoModel,
    Status,
    build_counterexample,
    checked,
    default_value,
    render_value,
    validate,
)
from .logic import BoundedSolver, Prover, SmtLibSolver, find_solver, translate_heap
from .machine import Answer, Blame, Budget, Exhausted, run
from .syntax import Program, parse, render, typecheck

__all__ = [
    "Answer",
    "Blame",
    "BoundedSolver",
    "Budget",
    "Counterexample",
    "Exhausted",
    "NoModel",
    "Program",
    "Prover",
    "SmtLibSolver",
    "Status",
    "build_counterexample",
    "checked",
    "default_value",
    "find_solver",
    "parse",
    "render",
    "render_value",
    "run",
    "translate_heap",
    "typecheck",
    "validate",
]
