"""Shared helpers for the test suites."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from spcf_cex import oracle
from spcf_cex.cex import NoModel, Status, build_counterexample, checked
from spcf_cex.heap import Arith, CaseS, Const, EqExpr, Heap, IntS, IsZero, OpaqueS, Ref
from spcf_cex.logic import Prover
from spcf_cex.machine import Budget, run
from spcf_cex.syntax import (
    INT,
    Program,
    arrow,
    opaques,
    parse,
    parse_type,
    prim_sites,
    typecheck,
)

T_FUN = arrow(INT, INT)
T_HO = parse_type("((int -> int) -> int)")
HARNESS_TYPES = (INT, T_FUN, T_HO)


def program(src: str) -> Program:
    p = parse(src)
    typecheck(p)
    return p


@dataclass
class Findings:
    """Validated counterexamples per (label, op), plus every one reported."""

    validated: dict
    reported: list
    exhausted: bool


def counterexamples(p: Program, budget: Budget = Budget(), prover: Prover | None = None) -> Findings:
    prover = prover or Prover()
    report = run(p, budget, prover)
    validated: dict = {}
    reported = []
    for b in report.blames:
        if (b.label, b.op) in validated:
            continue
        c = build_counterexample(p, b, prover.solver)
        if isinstance(c, NoModel):
            continue
        c = checked(p, c)
        reported.append(c)
        if c.validated is Status.YES:
            validated[(b.label, b.op)] = c
    return Findings(validated, reported, report.exhausted is not None)


def random_programs(seed: int, count: int, *, opaque_types=HARNESS_TYPES, max_opaques=2,
                    max_depth=4, require_opaque=True, max_instances=None):
    """Deterministic stream of ``count`` random well-typed programs."""
    rng = random.Random(seed)
    values = {}
    produced = 0
    while produced < count:
        gen = oracle.ProgramGenerator(rng, max_depth=max_depth, opaque_types=opaque_types,
                                      max_opaques=max_opaques)
        p = Program.from_expr(gen.program())
        ops = list(opaques(p.root))
        if require_opaque and not ops:
            continue
        if max_instances is not None:
            size = 1
            for _, t in ops:
                if t not in values:
                    values[t] = sum(1 for _ in oracle.enumerate_values(t, 8))
                size *= values[t]
            if size > max_instances:
                continue
        produced += 1
        yield p


def division_sites(p: Program) -> set:
    return {(l, op) for l, op in prim_sites(p.root) if op == "div"}


def worked_example_roles(h: Heap):
    """Locations playing the roles of the worked example's ℓ3 (the input
    passed to g), ℓ4 (g's output) and ℓ5 (the subtraction result)."""
    for l5, s in h.items():
        if not isinstance(s, OpaqueS):
            continue
        eqs = [p.rhs for p in s.preds if isinstance(p, EqExpr)]
        sub = [t for t in eqs if isinstance(t, Arith) and t.op == "-" and t.left == Const(100)]
        zero = Const(0) in eqs or IsZero() in s.preds
        if sub and zero and isinstance(sub[0].right, Ref):
            l4 = sub[0].right.loc
            for _, g in h.items():
                if isinstance(g, CaseS):
                    for inp, out in g.entries:
                        if out == l4:
                            return inp, l4, l5
    raise AssertionError(f"no worked-example shape in {h}")


def random_base_heap(rng: random.Random, max_opaques: int = 3):
    """A small heap of base values with random refinements.

    Returns the heap and its base locations.
    """
    from spcf_cex import heap as H
    from spcf_cex.heap import Not

    h = H.EMPTY
    locs = []
    for _ in range(rng.randint(0, 2)):
        h, l = H.alloc(h, IntS(rng.randint(-4, 4)))
        locs.append(l)
    for _ in range(rng.randint(1, max_opaques)):
        preds = []
        for _ in range(rng.randint(0, 2)):
            kind = rng.random()
            if kind < 0.3:
                preds.append(Not(IsZero()))
            elif locs:
                a = Ref(rng.choice(locs))
                b = Ref(rng.choice(locs)) if rng.random() < 0.5 else Const(rng.randint(-3, 3))
                op = rng.choice(["+", "-", "*", "div"])
                if op == "div":
                    # the engine only divides by a divisor known to be nonzero
                    b = Const(rng.choice([-3, -2, -1, 1, 2, 3]))
                eq = EqExpr(Arith(op, a, b))
                preds.append(Not(eq) if kind < 0.5 else eq)
        h, l = H.alloc(h, OpaqueS(INT, tuple(dict.fromkeys(preds))))
        locs.append(l)
    return h, locs


def assignments(h: Heap, bound: int):
    """Every assignment of the heap's opaque base locations within ±bound,
    with concrete locations fixed to their values."""
    fixed = {l: s.n for l, s in h.items() if isinstance(s, IntS)}
    free = [l for l, s in h.items() if isinstance(s, OpaqueS) and s.type == INT]
    for combo in itertools.product(range(-bound, bound + 1), repeat=len(free)):
        env = dict(fixed)
        env.update(zip(free, combo))
        yield env
