"""Turning a blamed symbolic path into concrete source text.

The final heap of a blame is translated to a formula and solved; the model
fixes every base-type unknown, and function-typed unknowns are read back
from their refined shapes (case mappings, constant and havoc residues).
The resulting terms replace the opaques and the program is re-run
concretely to confirm the error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from . import oracle
from .heap import CaseS, Heap, IntS, LamS, OpaqueS
from .logic import Sat, Solver, Unsat, formula_vars, solve, translate_heap
from .machine import Blame
from .syntax import (
    INT,
    App,
    Arrow,
    Base,
    Expr,
    If,
    Label,
    Lam,
    Lit,
    Loc,
    LocId,
    PrimApp,
    Program,
    Type,
    Var,
    free_vars,
    opaques,
    replace_opaques,
    substitute,
)

Model = Mapping[LocId, int]


class Status(enum.Enum):
    YES = "yes"
    NO = "no"  # validation not run
    FAILED = "failed"


@dataclass(frozen=True)
class Counterexample:
    bindings: Mapping[Label, Expr]
    blame: Label
    op: str
    model: Model
    validated: Status = Status.NO
    detail: str = ""


@dataclass(frozen=True)
class NoModel:
    reason: str


@dataclass(frozen=True)
class Validated:
    pass


@dataclass(frozen=True)
class ValidationFailed:
    details: str


# ---------------------------------------------------------------------------
# Rendering


def default_value(t: Type, depth: int = 0) -> Expr:
    if isinstance(t, Base):
        return Lit(0)
    name = "f" if isinstance(t.domain, Arrow) else "x"
    if depth:
        name += str(depth)
    return Lam(name, t.domain, default_value(t.codomain, depth + 1))


@dataclass
class _Renderer:
    heap: Heap
    model: Model
    active: set = field(default_factory=set)

    def int_of(self, l: LocId) -> int:
        s = self.heap[l]
        if isinstance(s, IntS):
            return s.n
        # unconstrained locations are absent from the model: any value will do
        return self.model.get(l, 0)

    def value(self, l: LocId) -> Expr:
        s = self.heap[l]
        if l in self.active:
            # a residue mentioning itself cannot be inlined; no rule builds one
            raise ValueError(f"cyclic heap at {l}")
        self.active.add(l)
        try:
            match s:
                case IntS() | OpaqueS(Base(), _):
                    return Lit(self.int_of(l))
                case OpaqueS(t, _):
                    return default_value(t)
                case LamS(x, t, body):
                    return Lam(x, t, self.expr(body))
                case CaseS(cod, entries):
                    return self.case(cod, entries)
        finally:
            self.active.discard(l)
        raise TypeError(s)

    def case(self, cod: Type, entries) -> Expr:
        seen: list[int] = []
        rows = []
        for inp, out in entries:
            c = self.int_of(inp)
            if c in seen:
                continue
            seen.append(c)
            rows.append((c, self.value(out)))
        body = default_value(cod)
        for c, v in reversed(rows):
            body = If(PrimApp("=", (Var("n"), Lit(c)), oracle.SYNTHETIC), v, body)
        return Lam("n", INT, body)

    def expr(self, e: Expr) -> Expr:
        match e:
            case Loc(l):
                return self.value(l)
            case Lam(x, t, body):
                return Lam(x, t, self.expr(body))
            case App(f, a):
                return App(self.expr(f), self.expr(a))
            case If(c, t, f):
                return If(self.expr(c), self.expr(t), self.expr(f))
            case PrimApp(op, args, label):
                return PrimApp(op, tuple(self.expr(a) for a in args), label)
        return e


def render_value(h: Heap, m: Model, l: LocId, t: Optional[Type] = None) -> Expr:
    """Closed source term for location ``l`` under model ``m``."""
    if l not in h:
        if t is None:
            raise KeyError(l)
        return default_value(t)
    return simplify(_Renderer(h, m).value(l))


def instantiate_heap(h: Heap, m: Model) -> Heap:
    """The concrete heap obtained by plugging the model back in: every
    location keeps its name and holds an integer or a lambda."""
    r = _Renderer(h, m)
    store = {}
    for l, s in h.items():
        match s:
            case IntS(n):
                store[l] = IntS(n)
            case OpaqueS(Base(), _):
                store[l] = IntS(r.int_of(l))
            case LamS():
                store[l] = s
            case OpaqueS(t, _):
                lam = default_value(t)
                store[l] = LamS(lam.param, lam.param_type, lam.body)
            case CaseS(cod, entries):
                # outputs stay as locations so the heap structure is preserved
                body: Expr = default_value(cod)
                seen: set[int] = set()
                rows = []
                for inp, out in entries:
                    c = r.int_of(inp)
                    if c not in seen:
                        seen.add(c)
                        rows.append((c, out))
                for c, out in reversed(rows):
                    body = If(PrimApp("=", (Var("n"), Lit(c)), oracle.SYNTHETIC), Loc(out), body)
                store[l] = LamS("n", INT, body)
    return Heap(store, dict(h.opq), h.next_index)


def _closed_value(e: Expr) -> bool:
    return isinstance(e, (Lit, Lam)) and not free_vars(e)


def simplify(e: Expr) -> Expr:
    """Beta-reduce applications of a lambda to a closed value.

    Only values are substituted, so evaluation order and effects (including
    errors raised inside applications of the bound argument) are unchanged.
    """
    match e:
        case Lam(x, t, body):
            return Lam(x, t, simplify(body))
        case App(f, a):
            f, a = simplify(f), simplify(a)
            if isinstance(f, Lam) and _closed_value(a):
                return simplify(substitute(f.body, f.param, a))
            return App(f, a)
        case If(c, t, f):
            return If(simplify(c), simplify(t), simplify(f))
        case PrimApp(op, args, label):
            return PrimApp(op, tuple(simplify(a) for a in args), label)
    return e


# ---------------------------------------------------------------------------
# Construction and validation


def build_counterexample(
    p: Program, b: Blame, solver: Optional[Solver] = None
) -> Union[Counterexample, NoModel]:
    f = translate_heap(b.heap)
    result = solve(f, solver, formula_vars(f))
    if isinstance(result, Unsat):
        return NoModel("path condition is unsatisfiable")
    if not isinstance(result, Sat):
        return NoModel(f"solver gave up: {result.reason}")
    model = dict(result.model)
    bindings: dict[Label, Expr] = {}
    for label, t in opaques(p.root):
        loc = b.heap.opq.get(label)
        if loc is None:
            # never reached on this path
            bindings[label] = default_value(t)
        else:
            bindings[label] = render_value(b.heap, model, loc, t)
    return Counterexample(bindings, b.label, b.op, model)


def plug(p: Program, c: Counterexample) -> Expr:
    return replace_opaques(p.root, c.bindings)


def validate(p: Program, c: Counterexample, budget: int = 10_000) -> Union[Validated, ValidationFailed]:
    result = oracle.concrete_eval(plug(p, c), budget)
    match result:
        case oracle.Blamed(label, op) if label == c.blame and op == c.op:
            return Validated()
        case oracle.Blamed(label, op):
            return ValidationFailed(f"blamed {label} on {op} instead")
        case oracle.Returned(v):
            return ValidationFailed(f"program returned {v!r}")
        case oracle.Diverged():
            return ValidationFailed("timeout")
    raise TypeError(result)


def checked(p: Program, c: Counterexample, budget: int = 10_000) -> Counterexample:
    """``c`` with its validation status filled in."""
    v = validate(p, c, budget)
    if isinstance(v, Validated):
        return _replace(c, Status.YES, "")
    return _replace(c, Status.FAILED, v.details)


def _replace(c: Counterexample, status: Status, detail: str) -> Counterexample:
    return Counterexample(c.bindings, c.blame, c.op, c.model, status, detail)
