"""Small-step symbolic reduction over ⟨expression, heap⟩ states and a
breadth-first search of the resulting execution graph."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union

from . import heap as H
from .delta import Error as DeltaError
from .delta import delta
from .heap import CaseS, Heap, IntS, LamS, OpaqueS
from .logic import Prover
from .syntax import (
    App,
    Arrow,
    Base,
    Err,
    Expr,
    If,
    Label,
    Lam,
    Lit,
    Loc,
    LocId,
    Opq,
    PrimApp,
    Program,
    Type,
    Var,
    render,
    substitute,
)


class StuckState(Exception):
    """No rule applies to a non-answer: an engine bug or ill-typed input."""


@dataclass(frozen=True)
class State:
    expr: Expr
    heap: Heap = H.EMPTY
    steps: int = 0

    def __str__(self) -> str:
        return f"⟨{render(self.expr)}⟩ | {self.heap}"


# ---------------------------------------------------------------------------
# Outcomes


@dataclass(frozen=True)
class Answer:
    loc: LocId
    heap: Heap
    type: Type


@dataclass(frozen=True)
class Blame:
    label: Label
    op: str
    heap: Heap


@dataclass(frozen=True)
class Exhausted:
    reason: str  # "step-budget" | "state-budget" | "timeout" | "solver-unknown"


Outcome = Union[Answer, Blame, Exhausted]


@dataclass(frozen=True)
class Budget:
    max_steps: int = 100_000
    max_states: int = 50_000
    timeout: Optional[float] = None


@dataclass
class SearchReport:
    outcomes: list[Outcome] = field(default_factory=list)
    states_explored: int = 0
    solver_queries: int = 0

    @property
    def blames(self) -> list[Blame]:
        return [o for o in self.outcomes if isinstance(o, Blame)]

    @property
    def answers(self) -> list[Answer]:
        return [o for o in self.outcomes if isinstance(o, Answer)]

    @property
    def exhausted(self) -> Optional[Exhausted]:
        return next((o for o in self.outcomes if isinstance(o, Exhausted)), None)


# ---------------------------------------------------------------------------
# Evaluation contexts


@dataclass(frozen=True)
class IfFrame:
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class FnFrame:
    arg: Expr


@dataclass(frozen=True)
class ArgFrame:
    fn: Loc


@dataclass(frozen=True)
class PrimFrame:
    op: str
    done: tuple[Expr, ...]
    rest: tuple[Expr, ...]
    label: Label


Frame = Union[IfFrame, FnFrame, ArgFrame, PrimFrame]
Context = tuple[Frame, ...]


def plug(ctx: Context, e: Expr) -> Expr:
    for frame in reversed(ctx):
        match frame:
            case IfFrame(t, f):
                e = If(e, t, f)
            case FnFrame(arg):
                e = App(e, arg)
            case ArgFrame(fn):
                e = App(fn, e)
            case PrimFrame(op, done, rest, label):
                e = PrimApp(op, done + (e,) + rest, label)
    return e


def decompose(e: Expr) -> Optional[tuple[Context, Expr]]:
    """Split ``e`` into an evaluation context and its redex, call-by-value
    and left to right.  Returns None when ``e`` is already an answer."""
    frames: list[Frame] = []
    while True:
        match e:
            case Loc() | Err() if not frames:
                return None
            case If(c, t, f) if not isinstance(c, Loc):
                frames.append(IfFrame(t, f))
                e = c
            case App(fn, arg) if not isinstance(fn, Loc):
                frames.append(FnFrame(arg))
                e = fn
            case App(fn, arg) if not isinstance(arg, Loc):
                frames.append(ArgFrame(fn))
                e = arg
            case PrimApp(op, args, label) if not all(isinstance(a, Loc) for a in args):
                i = next(i for i, a in enumerate(args) if not isinstance(a, Loc))
                frames.append(PrimFrame(op, args[:i], args[i + 1 :], label))
                e = args[i]
            case Var(name):
                raise StuckState(f"free variable {name}")
            case _:
                return tuple(frames), e


# ---------------------------------------------------------------------------
# Reduction rules

RULES = (
    "Opq", "Conc", "IfTrue", "IfFalse", "Prim", "AppLam", "AppOpq1", "AppOpq2",
    "AppOpq3", "AppHavoc", "AppCase1", "AppCase2", "Error",
)  # fmt: skip


def _fresh_opaque(h: Heap, t: Type) -> tuple[Heap, LocId]:
    return H.alloc(h, OpaqueS(t))


def _param_name(t: Type) -> str:
    return "f" if isinstance(t, Arrow) else "x"


def _case_hit(h: Heap, case: CaseS, x: LocId) -> Optional[LocId]:
    for inp, out in case.entries:
        if inp == x:
            return out
    sx = h[x]
    if isinstance(sx, IntS):
        for inp, out in case.entries:
            si = h[inp]
            if isinstance(si, IntS) and si.n == sx.n:
                return out
    return None


def reduce_redex(e: Expr, h: Heap, prover: Prover) -> list[tuple[str, Expr, Heap]]:
    """All ⟨rule, expr', heap'⟩ for a redex (not under a context)."""
    match e:
        case Opq(t, label):
            h2, loc = H.alloc_opaque(h, label, t)
            return [("Opq", Loc(loc), h2)]
        case Lit(n):
            h2, loc = H.alloc(h, IntS(n))
            return [("Conc", Loc(loc), h2)]
        case Lam(param, t, body):
            h2, loc = H.alloc(h, LamS(param, t, body))
            return [("Conc", Loc(loc), h2)]
        case If(Loc(c), then, orelse):
            out = []
            for r in delta(h, "zero?", [c], prover):
                # zero? answering 0 means the condition is true
                if r.value.n == 0:
                    out.append(("IfTrue", then, r.heap))
                else:
                    out.append(("IfFalse", orelse, r.heap))
            return out
        case PrimApp(op, args, label):
            out = []
            for r in delta(h, op, [a.loc for a in args], prover):
                if isinstance(r, DeltaError):
                    out.append(("Prim", Err(label, op), r.heap))
                else:
                    h2, loc = H.alloc(r.heap, r.value)
                    out.append(("Prim", Loc(loc), h2))
            return out
        case App(Loc(f), Loc(x)):
            return _apply(f, x, h)
        case Err():
            return [("Error", e, h)]
    raise StuckState(f"no rule for {render(e)}")


def _apply(f: LocId, x: LocId, h: Heap) -> list[tuple[str, Expr, Heap]]:
    s = h[f]
    match s:
        case LamS(param, _, body):
            return [("AppLam", substitute(body, param, Loc(x)), h)]
        case OpaqueS(Arrow(Base(), cod), _):
            h2, la = _fresh_opaque(h, cod)
            h2 = H.extend_case(h2, f, x, la)
            return [("AppOpq1", Loc(la), h2)]
        case OpaqueS(Arrow(Arrow(t1, t2) as dom, cod), _):
            out = []
            # constant function: ignores its argument
            h2, la = _fresh_opaque(h, cod)
            h2 = H.update(h2, f, LamS(_param_name(dom), dom, Loc(la)))
            out.append(("AppOpq2", Loc(la), h2))
            if isinstance(cod, Arrow):
                # delays exploring the argument behind a closure
                h3, l1 = _fresh_opaque(h, s.type)
                h3 = H.update(
                    h3,
                    f,
                    LamS("f", dom, Lam("y", cod.domain, App(App(Loc(l1), Var("f")), Var("y")))),
                )
                out.append(("AppOpq3", Lam("y", cod.domain, App(App(Loc(l1), Loc(x)), Var("y"))), h3))
            # havoc: feed the argument an unknown, pass the result to an unknown context
            h4, l1 = _fresh_opaque(h, t1)
            h4, l2 = _fresh_opaque(h4, Arrow(t2, cod))
            h4 = H.update(h4, f, LamS("f", dom, App(Loc(l2), App(Var("f"), Loc(l1)))))
            out.append(("AppHavoc", App(Loc(l2), App(Loc(x), Loc(l1))), h4))
            return out
        case CaseS(cod, _):
            hit = _case_hit(h, s, x)
            if hit is not None:
                return [("AppCase1", Loc(hit), h)]
            h2, la = _fresh_opaque(h, cod)
            h2 = H.extend_case(h2, f, x, la)
            return [("AppCase2", Loc(la), h2)]
    raise StuckState(f"cannot apply {f} ↦ {s}")


def step_rules(s: State, prover: Optional[Prover] = None) -> list[tuple[str, State]]:
    prover = prover or Prover()
    split = decompose(s.expr)
    if split is None:
        raise StuckState("state is already an answer")
    ctx, redex = split
    if isinstance(redex, Err):
        return [("Error", State(redex, s.heap, s.steps + 1))]
    return [
        (rule, State(plug(ctx, e2), h2, s.steps + 1))
        for rule, e2, h2 in reduce_redex(redex, s.heap, prover)
    ]


def step(s: State, prover: Optional[Prover] = None) -> list[State]:
    return [t for _, t in step_rules(s, prover)]


# ---------------------------------------------------------------------------
# Labels


def compute_labels(h: Heap, e: Expr, _seen: Optional[set] = None) -> set[Label]:
    """Primitive-application sites reachable from ``e``, through the heap."""
    seen = set() if _seen is None else _seen
    out: set[Label] = set()
    stack = [e]
    while stack:
        e = stack.pop()
        match e:
            case PrimApp(_, args, label):
                out.add(label)
                stack.extend(args)
            case App(fn, arg):
                stack.extend((fn, arg))
            case If(c, t, f):
                stack.extend((c, t, f))
            case Lam(body=body):
                stack.append(body)
            case Loc(loc) if loc not in seen and loc in h:
                seen.add(loc)
                s = h[loc]
                if isinstance(s, LamS):
                    stack.append(s.body)
    return out


# ---------------------------------------------------------------------------
# Search


Tracer = Callable[[State, str, State], None]


@dataclass
class SearchStats:
    states_explored: int = 0
    steps: int = 0


def explore(
    program: Program,
    budget: Budget = Budget(),
    prover: Optional[Prover] = None,
    trace: Optional[Tracer] = None,
    stats: Optional[SearchStats] = None,
) -> Iterator[Outcome]:
    """Breadth-first search yielding terminal outcomes as they are reached.

    Budgets are shared by the whole search.  When one runs out an
    ``Exhausted`` outcome is yielded and the search stops.
    """
    prover = prover or Prover()
    stats = stats if stats is not None else SearchStats()
    known = program.known_labels
    frontier = deque([State(program.root)])
    deadline = time.monotonic() + budget.timeout if budget.timeout else None
    while frontier:
        if stats.states_explored >= budget.max_states:
            yield Exhausted("state-budget")
            return
        if stats.steps >= budget.max_steps:
            yield Exhausted("step-budget")
            return
        if deadline is not None and time.monotonic() > deadline:
            yield Exhausted("timeout")
            return
        s = frontier.popleft()
        match s.expr:
            case Loc(loc):
                yield Answer(loc, s.heap, s.heap.loc_type(loc))
                continue
            case Err(label, op):
                if label in known:
                    yield Blame(label, op, s.heap)
                continue
        stats.states_explored += 1
        for rule, t in step_rules(s, prover):
            stats.steps += 1
            if trace is not None:
                trace(s, rule, t)
            frontier.append(t)


def run(
    program: Program,
    budget: Budget = Budget(),
    prover: Optional[Prover] = None,
    trace: Optional[Tracer] = None,
) -> SearchReport:
    prover = prover or Prover()
    before = prover.queries
    stats = SearchStats()
    outcomes = list(explore(program, budget, prover, trace, stats))
    return SearchReport(outcomes, stats.states_explored, prover.queries - before)
