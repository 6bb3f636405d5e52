"""Primitive operations over concrete and symbolic integers.

``delta`` returns every possible outcome of a primitive application
together with the heap refined by the assumption that selects it.
0 is false and any other integer is true; predicates answer 1 or 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .heap import (
    Arith,
    Const,
    EqExpr,
    Heap,
    IntS,
    IsZero,
    Not,
    OpaqueS,
    Predicate,
    Ref,
    Storeable,
    Term,
    euclid_div,
    refine,
    set_concrete,
)
from .logic import Prover, Verdict
from .syntax import INT, PRIMS, LocId


class ArityError(Exception):
    pass


@dataclass(frozen=True)
class Val:
    value: Storeable
    heap: Heap


@dataclass(frozen=True)
class Error:
    op: str
    heap: Heap


DeltaResult = Union[Val, Error]

_ARITH = {"add1": "+", "sub1": "-", "+": "+", "-": "-", "*": "*"}


def _concrete(h: Heap, loc: LocId) -> Optional[int]:
    s = h[loc]
    return s.n if isinstance(s, IntS) else None


def _term(h: Heap, loc: LocId) -> Term:
    n = _concrete(h, loc)
    return Const(n) if n is not None else Ref(loc)


def assume_equal(h: Heap, loc: LocId, rhs: Term) -> Heap:
    """Refine ``loc`` to equal ``rhs``.

    A bare opaque collapses to a concrete integer; one that already carries
    refinements keeps them and gains the equation instead, so nothing it
    knew is lost.
    """
    s = h[loc]
    if isinstance(rhs, Const) and isinstance(s, OpaqueS) and not s.preds:
        return set_concrete(h, loc, rhs.value)
    return refine(h, loc, EqExpr(rhs))


def _branch(
    h: Heap, loc: LocId, p: Predicate, prover: Prover, when_true: Heap, when_false: Heap
) -> list[tuple[bool, Heap]]:
    verdict = prover.prove(h, loc, p)
    if verdict is Verdict.PROVED:
        return [(True, h)]
    if verdict is Verdict.REFUTED:
        return [(False, h)]
    return [(True, when_true), (False, when_false)]


def _is_zero(h: Heap, loc: LocId, prover: Prover) -> list[tuple[bool, Heap]]:
    return _branch(
        h,
        loc,
        IsZero(),
        prover,
        assume_equal(h, loc, Const(0)),
        refine(h, loc, Not(IsZero())),
    )


def delta(h: Heap, op: str, args: list[LocId], prover: Optional[Prover] = None) -> list[DeltaResult]:
    if op not in PRIMS:
        raise ArityError(f"unknown primitive {op}")
    if len(args) != PRIMS[op]:
        raise ArityError(f"{op} takes {PRIMS[op]} argument(s), got {len(args)}")
    prover = prover or Prover()
    values = [_concrete(h, a) for a in args]

    if op == "zero?":
        if values[0] is not None:
            return [Val(IntS(int(values[0] == 0)), h)]
        return [Val(IntS(int(z)), h2) for z, h2 in _is_zero(h, args[0], prover)]

    if op == "=":
        a, b = args
        if values[0] is not None and values[1] is not None:
            return [Val(IntS(int(values[0] == values[1])), h)]
        # refine the symbolic side; refining a concrete location is a no-op
        subject, other = (a, b) if values[0] is None else (b, a)
        rhs = _term(h, other)
        results = _branch(
            h,
            subject,
            EqExpr(rhs),
            prover,
            assume_equal(h, subject, rhs),
            refine(h, subject, Not(EqExpr(rhs))),
        )
        return [Val(IntS(int(eq)), h2) for eq, h2 in results]

    if op == "div":
        n, d = values
        if d == 0:
            return [Error(op, h)]
        if n is not None and d is not None:
            return [Val(IntS(euclid_div(n, d)), h)]
        quotient = OpaqueS(INT, (EqExpr(Arith("div", _term(h, args[0]), _term(h, args[1]))),))
        if d is not None:
            return [Val(quotient, h)]
        out: list[DeltaResult] = []
        for zero, h2 in _is_zero(h, args[1], prover):
            out.append(Error(op, h2) if zero else Val(quotient, h2))
        # non-zero divisor first
        out.sort(key=lambda r: isinstance(r, Error))
        return out

    operands = [_term(h, a) for a in args]
    if op in ("add1", "sub1"):
        operands.append(Const(1))
    arith = _ARITH[op]
    if all(isinstance(t, Const) for t in operands):
        x, y = (t.value for t in operands)
        return [Val(IntS({"+": x + y, "-": x - y, "*": x * y}[arith]), h)]
    return [Val(OpaqueS(INT, (EqExpr(Arith(arith, *operands)),)), h)]
