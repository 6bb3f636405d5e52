"""Trusted baselines for testing the symbolic engine.

* ``concrete_eval``: a plain environment-based call-by-value interpreter
  for opaque-free programs, sharing nothing with the machine but the AST.
* ``enumerate_values``: closed terms of a type, in the shapes opaque
  refinement distinguishes.
* ``check_instantiation``: a bounded checker for the approximation relation
  between a concrete and an abstract state.
* ``ProgramGenerator``: well-typed random programs for differential suites.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Union

from .heap import CaseS, Heap, IntS, LamS, OpaqueS, euclid_div, holds, pred_locs
from .syntax import (
    INT,
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
    Type,
    Var,
    relabel,
    substitute,
)

# Label used for primitive sites inside synthesized terms; source labels
# start at 1 so this one is never part of the known program portion.
SYNTHETIC = Label(0)


# ---------------------------------------------------------------------------
# Concrete interpreter


@dataclass(frozen=True)
class Closure:
    param: str
    body: Expr
    env: tuple

    def __repr__(self) -> str:
        return "<closure>"


@dataclass(frozen=True)
class Returned:
    value: Union[int, Closure]


@dataclass(frozen=True)
class Blamed:
    label: Label
    op: str


@dataclass(frozen=True)
class Diverged:
    budget: int


ConcreteResult = Union[Returned, Blamed, Diverged]


class _Raise(Exception):
    def __init__(self, label: Label, op: str):
        self.label = label
        self.op = op


class _OutOfFuel(Exception):
    pass


def _lookup(env: tuple, name: str):
    while env:
        (n, v), env = env
        if n == name:
            return v
    raise NameError(name)


def _prim(op: str, args: list[int], label: Label) -> int:
    match op:
        case "zero?":
            return int(args[0] == 0)
        case "add1":
            return args[0] + 1
        case "sub1":
            return args[0] - 1
        case "+":
            return args[0] + args[1]
        case "-":
            return args[0] - args[1]
        case "*":
            return args[0] * args[1]
        case "=":
            return int(args[0] == args[1])
        case "div":
            if args[1] == 0:
                raise _Raise(label, op)
            return euclid_div(args[0], args[1])
    raise ValueError(op)


class _Evaluator:
    def __init__(self, budget: int):
        self.fuel = budget

    def tick(self) -> None:
        self.fuel -= 1
        if self.fuel < 0:
            raise _OutOfFuel

    def eval(self, e: Expr, env: tuple):
        match e:
            case Lit(n):
                return n
            case Var(name):
                return _lookup(env, name)
            case Lam(param, _, body):
                return Closure(param, body, env)
            case App(fn, arg):
                f = self.eval(fn, env)
                a = self.eval(arg, env)
                self.tick()
                return self.eval(f.body, ((f.param, a), f.env))
            case If(c, t, f):
                v = self.eval(c, env)
                self.tick()
                return self.eval(t if v != 0 else f, env)
            case PrimApp(op, args, label):
                vals = [self.eval(a, env) for a in args]
                self.tick()
                return _prim(op, vals, label)
            case Opq():
                raise ValueError("concrete evaluation of an opaque value")
        raise ValueError(f"cannot evaluate {e!r}")


def concrete_eval(e: Expr, budget: int = 10_000) -> ConcreteResult:
    """Call-by-value evaluation of a closed, opaque-free expression."""
    ev = _Evaluator(budget)
    try:
        return Returned(ev.eval(e, ()))
    except _Raise as r:
        return Blamed(r.label, r.op)
    except (_OutOfFuel, RecursionError):
        return Diverged(budget)


# ---------------------------------------------------------------------------
# Enumeration of closed values


def _ints(bound: int) -> Iterator[int]:
    yield 0
    for k in range(1, bound + 1):
        yield k
        yield -k


def enumerate_values(t: Type, bound: int) -> Iterator[Expr]:
    """Closed values of type ``t`` with integers in ``-bound..bound``.

    Base-domain functions are constants and single-point case functions
    ``λx. if (= x c) v d``; functions of a higher-order argument are
    constants and one-application shapes ``λf. (k (f v))``.
    """
    if isinstance(t, Base):
        for n in _ints(bound):
            yield Lit(n)
        return
    dom, cod = t.domain, t.codomain
    if isinstance(dom, Base):
        for v in enumerate_values(cod, bound):
            yield Lam("x", INT, v)
        for c in _ints(bound):
            for v, d in itertools.product(list(enumerate_values(cod, bound)), repeat=2):
                if v != d:
                    yield Lam(
                        "x",
                        INT,
                        If(PrimApp("=", (Var("x"), Lit(c)), SYNTHETIC), v, d),
                    )
        return
    for v in enumerate_values(cod, bound):
        yield Lam("f", dom, v)
    ks = list(enumerate_values(Arrow(dom.codomain, cod), bound))
    for v in enumerate_values(dom.domain, bound):
        for k in ks:
            yield Lam("f", dom, App(k, App(Var("f"), v)))


# ---------------------------------------------------------------------------
# Approximation checker


@dataclass(frozen=True)
class InstantiationWitness:
    mapping: Mapping[LocId, LocId]
    checked_depth: int


@dataclass(frozen=True)
class NoWitness:
    budget: int
    reason: str = ""


class _Mismatch(Exception):
    pass


def concrete_labels(h: Heap, e: Expr) -> set[Label]:
    from .machine import compute_labels

    return compute_labels(h, e)


def run_concrete(e: Expr, h: Heap, budget: int):
    """Step a concrete state until it is an answer; None if out of budget."""
    from .machine import State, step

    s = State(e, h)
    for _ in range(budget):
        if isinstance(s.expr, (Loc, Err)):
            return s
        succ = step(s)
        if len(succ) != 1:
            return None
        s = succ[0]
    return s if isinstance(s.expr, (Loc, Err)) else None


def _trace_concrete(e: Expr, h: Heap, budget: int) -> Iterator:
    from .machine import State, step

    s = State(e, h)
    for _ in range(budget):
        yield s
        if isinstance(s.expr, (Loc, Err)):
            return
        succ = step(s)
        if len(succ) != 1:
            return
        s = succ[0]


class _Matcher:
    def __init__(self, conc: Heap, abst: Heap, known: frozenset, budget: int):
        self.conc = conc
        self.abst = abst
        self.known = known
        self.budget = budget
        self.F: dict[LocId, LocId] = {}
        self.pending: list[LocId] = []
        self.done: set[LocId] = set()

    def copy(self) -> "_Matcher":
        m = _Matcher(self.conc, self.abst, self.known, self.budget)
        m.F = dict(self.F)
        m.pending = list(self.pending)
        m.done = set(self.done)
        return m

    def bind(self, a: LocId, c: LocId) -> None:
        if a in self.F:
            if self.F[a] != c:
                raise _Mismatch(f"{a} already instantiated by {self.F[a]}, not {c}")
            return
        if c not in self.conc:
            raise _Mismatch(f"{c} not in the concrete heap")
        self.F[a] = c
        self.pending.append(a)

    def unknown_free(self, e: Expr) -> bool:
        return not (concrete_labels(self.conc, e) & self.known)

    # states -----------------------------------------------------------

    def expr(self, ce: Expr, ae: Expr, names: Mapping[str, str] = {}) -> None:
        if isinstance(ce, Err) and ce.label not in self.known:
            return  # errors of the unknown portion are ignored
        if isinstance(ce, Opq) and ce.label in self.conc.opq:
            ce = Loc(self.conc.opq[ce.label])  # already fixed by the heap
        match ae:
            case Err(label, op):
                if not (isinstance(ce, Err) and ce.label == label and ce.op == op):
                    raise _Mismatch("different errors")
                return
            case Opq(t, label):
                if label in self.abst.opq:
                    return self.expr(ce, Loc(self.abst.opq[label]), names)
                if ce == ae:
                    return  # the same unreached unknown on both sides
                if isinstance(ce, Loc) and not self.unknown_free(ce):
                    raise _Mismatch("opaque instantiated with known code")
                if not isinstance(ce, (Loc, Lit, Lam)) or not self.unknown_free(ce):
                    raise _Mismatch("opaque must be instantiated by a value")
                return
            case Loc(a):
                if isinstance(ce, Loc):
                    return self.bind(a, ce.loc)
                if isinstance(ce, (Lit, Lam)):
                    return self.value(ce, a)
                if isinstance(ae, Loc) and self._opq_app(ce, ae):
                    return
                raise _Mismatch(f"{a} vs non-value")
        if isinstance(ae, App) and isinstance(ae.fn, Loc) and isinstance(ae.arg, Loc):
            if not isinstance(ce, (Loc, Err)) and self._opq_app(ce, ae):
                return
        match ae, ce:
            case Lit(n), Lit(m) if n == m:
                return
            case Var(x), Var(y) if names.get(x, x) == y:
                return
            case Lam(x, t, body), Lam(y, t2, body2) if t == t2:
                return self.expr(body2, body, {**names, x: y})
            case App(f, a), App(f2, a2):
                self.expr(f2, f, names)
                return self.expr(a2, a, names)
            case If(c, t, e), If(c2, t2, e2):
                self.expr(c2, c, names)
                self.expr(t2, t, names)
                return self.expr(e2, e, names)
            case PrimApp(op, args, label), PrimApp(op2, args2, label2) if (
                op == op2 and label == label2 and len(args) == len(args2)
            ):
                for x, y in zip(args2, args):
                    self.expr(x, y, names)
                return
        raise _Mismatch("shape mismatch")

    def _opq_app(self, ce: Expr, ae: Expr) -> bool:
        """Opq-App: ``ce`` is reachable from the concrete application that
        instantiates the opaque application ``ae``."""
        if not isinstance(ae, App):
            return False
        f, x = ae.fn.loc, ae.arg.loc
        sf = self.abst[f] if f in self.abst else None
        if not (isinstance(sf, OpaqueS) and isinstance(sf.type, Arrow)):
            return False
        if isinstance(ce, (Loc, Err)) or not self.unknown_free(ce):
            return False
        cf, cx = self.F.get(f), self.F.get(x)
        if cf is None or cx is None or not isinstance(self.conc[cf], LamS):
            return False
        lam = self.conc[cf]
        start = substitute(lam.body, lam.param, Loc(cx))
        return any(s.expr == ce for s in _trace_concrete(start, self.conc, self.budget))

    # values and heaps -------------------------------------------------

    def value(self, ce: Expr, a: LocId) -> None:
        """A concrete value term against the abstract value stored at ``a``."""
        sa = self.abst[a]
        match sa, ce:
            case IntS(n), Lit(m) if n == m:
                return
            case OpaqueS(t, preds), Lit(m) if t == INT:
                if all(self._pred_holds(p, m) for p in preds):
                    return
            case OpaqueS(t, ()), Lam():
                if self.unknown_free(ce):
                    return
            case LamS(x, t, body), Lam(y, t2, body2) if t == t2:
                return self.expr(body2, body, {x: y})
        raise _Mismatch(f"{ce!r} does not instantiate {sa}")

    def _pred_holds(self, p, value: int) -> bool:
        env = {}
        for l in pred_locs(p):
            if l not in self.F:
                self.bind(l, l) if l in self.conc else None
            c = self.F.get(l)
            sc = self.conc[c] if c is not None else None
            if not isinstance(sc, IntS):
                return False
            env[l] = sc.n
        return holds(p, value, env)

    def location(self, a: LocId) -> None:
        c = self.F[a]
        sa, sc = self.abst[a], self.conc[c]
        match sa:
            case IntS(n):
                if not (isinstance(sc, IntS) and sc.n == n):
                    raise _Mismatch(f"Heap-Int: {a} ↦ {n} vs {c} ↦ {sc}")
            case OpaqueS(t, preds):
                if t == INT:
                    if not isinstance(sc, IntS):
                        raise _Mismatch(f"{c} is not an integer")
                    for p in preds:
                        if not self._pred_holds(p, sc.n):
                            raise _Mismatch(f"Heap-Opq-2: {c} ↦ {sc.n} fails {p}")
                elif not isinstance(sc, LamS) or not self.unknown_free(Loc(c)):
                    raise _Mismatch(f"Heap-Opq-1: {c} ↦ {sc}")
            case LamS(x, t, body):
                if not (isinstance(sc, LamS) and sc.param_type == t):
                    raise _Mismatch(f"Heap-Lam: {c} ↦ {sc}")
                self.expr(sc.body, body, {x: sc.param})
            case CaseS(_, entries):
                if not (isinstance(sc, LamS) and sc.param_type == INT):
                    raise _Mismatch(f"Heap-Case-1: {c} ↦ {sc}")
                if not self.unknown_free(Loc(c)):
                    raise _Mismatch("Heap-Case-1: mapping instantiated with known code")
                for inp, out in entries:
                    if inp not in self.F:
                        self.bind(inp, inp)
                    start = substitute(sc.body, sc.param, Loc(self.F[inp]))
                    final = run_concrete(start, self.conc, self.budget)
                    if final is None or not isinstance(final.expr, Loc):
                        raise _Mismatch(f"Heap-Case-2: {c} on {self.F[inp]} did not return")
                    # the callee may have allocated: continue in the extended heap
                    self.conc = final.heap
                    self.bind(out, final.expr.loc)

    def settle(self) -> None:
        while self.pending:
            a = self.pending.pop()
            if a in self.done:
                continue
            self.done.add(a)
            self.location(a)


def _complete(m: _Matcher) -> Optional[_Matcher]:
    """Instantiate abstract locations not reached from the expression."""
    m.settle()
    rest = [a for a in sorted(m.abst) if a not in m.F]
    if not rest:
        return m
    a = rest[0]
    candidates = ([a] if a in m.conc else []) + [c for c in sorted(m.conc) if c != a]
    for c in candidates:
        trial = m.copy()
        try:
            trial.bind(a, c)
            done = _complete(trial)
        except _Mismatch:
            continue
        if done is not None:
            return done
    return None


def check_instantiation(concrete, abstract, known_labels, budget: int = 1000):
    """Search for a location map under which ``concrete`` instantiates
    ``abstract``.  ``NoWitness`` means "not shown within budget"."""
    m = _Matcher(concrete.heap, abstract.heap, frozenset(known_labels), budget)
    try:
        m.expr(concrete.expr, abstract.expr)
        done = _complete(m)
    except _Mismatch as exc:
        return NoWitness(budget, str(exc))
    if done is None:
        return NoWitness(budget, "no consistent instantiation of the remaining heap")
    return InstantiationWitness(dict(done.F), budget)


# ---------------------------------------------------------------------------
# Random well-typed programs

PRIM_WEIGHTS = [("div", 4), ("-", 3), ("+", 2), ("*", 1), ("=", 1), ("zero?", 1), ("add1", 1), ("sub1", 1)]


@dataclass
class ProgramGenerator:
    """Random closed programs of type int.

    ``opaque_types`` lists the opaque types that may appear; the generator
    places at most ``max_opaques`` opaque occurrences.
    """

    rng: random.Random
    max_depth: int = 4
    literal_bound: int = 8
    opaque_types: tuple[Type, ...] = ()
    max_opaques: int = 1
    _opaques: int = field(default=0, init=False)
    _names: int = field(default=0, init=False)

    def program(self) -> Expr:
        self._opaques = 0
        self._names = 0
        return relabel(self.expr(INT, {}, self.max_depth))

    def _fresh(self) -> str:
        self._names += 1
        return f"v{self._names}"

    def _opaque(self, t: Type) -> Optional[Expr]:
        if t in self.opaque_types and self._opaques < self.max_opaques:
            self._opaques += 1
            return Opq(t, Label(0))
        return None

    def lit(self) -> Expr:
        return Lit(self.rng.randint(-self.literal_bound, self.literal_bound))

    def divisor(self, env: dict[str, Type], depth: int) -> Expr:
        # bias divisors towards values that can hit zero
        if self.rng.random() < 0.5:
            shift = self.rng.randint(-self.literal_bound, self.literal_bound)
            return PrimApp("-", (self.expr(INT, env, depth), Lit(shift)), Label(0))
        return self.expr(INT, env, depth)

    def expr(self, t: Type, env: dict[str, Type], depth: int) -> Expr:
        r = self.rng
        if isinstance(t, Arrow):
            opq = self._opaque(t) if r.random() < 0.5 else None
            if opq is not None:
                return opq
            names = [x for x, tx in env.items() if tx == t]
            if names and r.random() < 0.3:
                return Var(r.choice(names))
            x = self._fresh()
            return Lam(x, t.domain, self.expr(t.codomain, {**env, x: t.domain}, max(depth - 1, 0)))
        ints = [x for x, tx in env.items() if tx == INT]
        if depth <= 0:
            if ints and r.random() < 0.6:
                return Var(r.choice(ints))
            opq = self._opaque(INT) if r.random() < 0.3 else None
            return opq or self.lit()
        choice = r.random()
        if choice < 0.15:
            opq = self._opaque(INT)
            if opq is not None:
                return opq
        if choice < 0.3:
            return Var(r.choice(ints)) if ints and r.random() < 0.6 else self.lit()
        if choice < 0.6:
            ops, weights = zip(*PRIM_WEIGHTS)
            op = r.choices(ops, weights)[0]
            if op == "div":
                return PrimApp(op, (self.expr(INT, env, depth - 1), self.divisor(env, depth - 1)), Label(0))
            arity = 1 if op in ("zero?", "add1", "sub1") else 2
            return PrimApp(op, tuple(self.expr(INT, env, depth - 1) for _ in range(arity)), Label(0))
        if choice < 0.75:
            return If(*(self.expr(INT, env, depth - 1) for _ in range(3)))
        # application of a function-typed expression
        fn_types = [tx for tx in self.opaque_types if isinstance(tx, Arrow) and tx.codomain == INT]
        fn_types.append(Arrow(INT, INT))
        ft = r.choice(fn_types)
        fn = self.expr(ft, env, depth - 1)
        return App(fn, self.expr(ft.domain, env, depth - 1))
