"""The path condition: a heap of concrete values, refined opaques,
lambdas and case mappings.

Heaps are immutable; every operation returns a new heap.  Location names
come from a counter carried by the heap itself, so two branches forked from
the same state allocate the same names independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Union

from .syntax import (
    INT,
    Arrow,
    Base,
    Expr,
    Label,
    Lam,
    Loc,
    LocId,
    Type,
    infer,
    render,
    subterms,
)


class HeapError(Exception):
    pass


class RefineNonBase(HeapError):
    pass


class DuplicateCaseInput(HeapError):
    pass


# ---------------------------------------------------------------------------
# Arithmetic terms over locations (shared with the logic module)


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Ref:
    loc: LocId

    def __str__(self) -> str:
        return str(self.loc)


ARITH_OPS = ("+", "-", "*", "div")


@dataclass(frozen=True)
class Arith:
    op: str
    left: "Term"
    right: "Term"

    def __str__(self) -> str:
        op = "/" if self.op == "div" else self.op
        return f"{_paren(self.left)}{op}{_paren(self.right)}"


def _paren(t: "Term") -> str:
    if isinstance(t, Arith) or (isinstance(t, Const) and t.value < 0):
        return f"({t})"
    return str(t)


Term = Union[Const, Ref, Arith]


def term_locs(t: Term) -> Iterator[LocId]:
    match t:
        case Ref(loc):
            yield loc
        case Arith(_, a, b):
            yield from term_locs(a)
            yield from term_locs(b)


def euclid_div(a: int, b: int) -> int:
    """SMT-LIB integer division: the remainder is always non-negative."""
    return a // b if b > 0 else -(a // -b)


def apply_arith(op: str, a: int, b: int) -> int:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "div":
        # division by zero only occurs under an inconsistent assignment;
        # SMT-LIB leaves it unspecified, we fix it to 0
        return euclid_div(a, b) if b != 0 else 0
    raise ValueError(op)


def eval_term(t: Term, env: Mapping[LocId, int]) -> int:
    match t:
        case Const(v):
            return v
        case Ref(loc):
            return env[loc]
        case Arith(op, a, b):
            return apply_arith(op, eval_term(a, env), eval_term(b, env))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Predicates


@dataclass(frozen=True)
class IsZero:
    def __str__(self) -> str:
        return "zero?"


@dataclass(frozen=True)
class Not:
    pred: "Predicate"

    def __str__(self) -> str:
        if isinstance(self.pred, IsZero):
            return "≠0"
        return f"¬{self.pred}"


@dataclass(frozen=True)
class EqExpr:
    rhs: Term

    def __str__(self) -> str:
        return f"(≡ {self.rhs})"


Predicate = Union[IsZero, Not, EqExpr]


def pred_locs(p: Predicate) -> Iterator[LocId]:
    match p:
        case Not(q):
            yield from pred_locs(q)
        case EqExpr(rhs):
            yield from term_locs(rhs)


def holds(p: Predicate, value: int, env: Mapping[LocId, int]) -> bool:
    match p:
        case IsZero():
            return value == 0
        case Not(q):
            return not holds(q, value, env)
        case EqExpr(rhs):
            return value == eval_term(rhs, env)
    raise TypeError(p)


# ---------------------------------------------------------------------------
# Storeables


@dataclass(frozen=True)
class IntS:
    n: int
    # refinements of a collapsed opaque, kept so they still reach the solver
    residual: tuple[Predicate, ...] = ()

    def __str__(self) -> str:
        return str(self.n)


@dataclass(frozen=True)
class LamS:
    param: str
    param_type: Type
    body: Expr

    def __str__(self) -> str:
        return render(Lam(self.param, self.param_type, self.body))


@dataclass(frozen=True)
class OpaqueS:
    type: Type
    preds: tuple[Predicate, ...] = ()

    def __str__(self) -> str:
        if not self.preds:
            return f"•{self.type}"
        return "•{" + ", ".join([str(self.type), *map(str, self.preds)]) + "}"


@dataclass(frozen=True)
class CaseS:
    codomain: Type
    entries: tuple[tuple[LocId, LocId], ...] = ()

    def __str__(self) -> str:
        body = ", ".join(f"{i}↦{o}" for i, o in self.entries)
        return f"case[{body}]"


Storeable = Union[IntS, LamS, OpaqueS, CaseS]


def is_base(s: Storeable) -> bool:
    return isinstance(s, IntS) or (isinstance(s, OpaqueS) and s.type == INT)


def storeable_locs(s: Storeable) -> Iterator[LocId]:
    match s:
        case IntS(_, residual):
            for p in residual:
                yield from pred_locs(p)
        case OpaqueS(_, preds):
            for p in preds:
                yield from pred_locs(p)
        case CaseS(_, entries):
            for i, o in entries:
                yield i
                yield o
        case LamS(_, _, body):
            for e in subterms(body):
                if isinstance(e, Loc):
                    yield e.loc


# ---------------------------------------------------------------------------
# Heap


@dataclass(frozen=True)
class Heap:
    store: Mapping[LocId, Storeable] = field(default_factory=dict)
    opq: Mapping[Label, LocId] = field(default_factory=dict)
    next_index: int = 0

    def __getitem__(self, loc: LocId) -> Storeable:
        return self.store[loc]

    def __contains__(self, loc: LocId) -> bool:
        return loc in self.store

    def __iter__(self) -> Iterator[LocId]:
        return iter(self.store)

    def __len__(self) -> int:
        return len(self.store)

    def items(self):
        return self.store.items()

    def _with(self, loc: LocId, s: Storeable) -> "Heap":
        store = dict(self.store)
        store[loc] = s
        return replace(self, store=store)

    def __str__(self) -> str:
        return "[" + ", ".join(f"{l} ↦ {s}" for l, s in self.store.items()) + "]"

    def loc_type(self, loc: LocId) -> Type:
        match self.store[loc]:
            case IntS():
                return INT
            case OpaqueS(t, _):
                return t
            case CaseS(cod, _):
                return Arrow(INT, cod)
            case LamS(param, t, body):
                return Arrow(t, infer(body, {param: t}, self.loc_type))
        raise TypeError(loc)


EMPTY = Heap()


def alloc(h: Heap, s: Storeable) -> tuple[Heap, LocId]:
    loc = LocId(h.next_index)
    store = dict(h.store)
    store[loc] = s
    return replace(h, store=store, next_index=h.next_index + 1), loc


def alloc_opaque(h: Heap, label: Label, t: Type) -> tuple[Heap, LocId]:
    """Allocate the opaque from source site ``label``, reusing an earlier
    allocation: an opaque stands for one fixed value."""
    if label in h.opq:
        return h, h.opq[label]
    h, loc = alloc(h, OpaqueS(t))
    opq = dict(h.opq)
    opq[label] = loc
    return replace(h, opq=opq), loc


def refine(h: Heap, loc: LocId, p: Predicate) -> Heap:
    s = h[loc]
    if isinstance(s, IntS):
        return h
    if not isinstance(s, OpaqueS) or s.type != INT:
        raise RefineNonBase(f"{loc} holds {s}")
    if p in s.preds:
        return h
    return h._with(loc, OpaqueS(s.type, s.preds + (p,)))


def set_concrete(h: Heap, loc: LocId, n: int) -> Heap:
    s = h[loc]
    if isinstance(s, IntS):
        if s.n != n:
            raise HeapError(f"{loc} already holds {s.n}")
        return h
    if not (isinstance(s, OpaqueS) and s.type == INT):
        raise RefineNonBase(f"{loc} holds {s}")
    return h._with(loc, IntS(n, s.preds))


def extend_case(h: Heap, fn: LocId, inp: LocId, out: LocId) -> Heap:
    s = h[fn]
    match s:
        case OpaqueS(Arrow(Base(), cod), _):
            return h._with(fn, CaseS(cod, ((inp, out),)))
        case CaseS(cod, entries):
            if any(i == inp for i, _ in entries):
                raise DuplicateCaseInput(f"{inp} already mapped by {fn}")
            return h._with(fn, CaseS(cod, entries + ((inp, out),)))
    raise HeapError(f"{fn} holds {s}, not a base-domain opaque function")


def update(h: Heap, loc: LocId, s: Storeable) -> Heap:
    """Overwrite ``loc``; used by the machine when refining an opaque
    function into one of its shapes."""
    if loc not in h:
        raise HeapError(f"{loc} not allocated")
    return h._with(loc, s)


def is_closed(h: Heap) -> bool:
    dom = set(h.store)
    if not set(h.opq.values()) <= dom:
        return False
    return all(l in dom for s in h.store.values() for l in storeable_locs(s))
