"""First-order translation of heaps, the three-valued proof relation, and
solver backends.

Two backends are provided.  ``BoundedSolver`` is a hermetic search over
integer assignments with propagation of defining equations; it answers
``Unknown`` whenever its bound cut the search short.  ``SmtLibSolver``
drives an external SMT-LIB2 process such as ``z3 -in``.
"""

from __future__ import annotations

import enum
import itertools
import logging
import os
import re
import shlex
import shutil
import subprocess
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Protocol, Sequence, Union

from .heap import (
    Arith,
    CaseS,
    Const,
    EqExpr,
    Heap,
    IntS,
    IsZero,
    LamS,
    Not,
    OpaqueS,
    Predicate,
    Ref,
    Term,
    eval_term,
    holds,
    is_base,
    pred_locs,
    term_locs,
)
from .syntax import App, Lam, Loc, LocId, Var

log = logging.getLogger(__name__)


class SolverFailure(Exception):
    """The backend died or answered something we could not read."""


class UntranslatablePredicate(Exception):
    pass


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Neg:
    body: "Formula"


@dataclass(frozen=True)
class And:
    items: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    premise: "Formula"
    conclusion: "Formula"


@dataclass(frozen=True)
class Bool:
    value: bool


Formula = Union[Eq, Neg, And, Or, Implies, Bool]
TRUE = Bool(True)
FALSE = Bool(False)


def conj(parts: Iterable[Formula]) -> Formula:
    out: list[Formula] = []
    for p in parts:
        if isinstance(p, And):
            out.extend(p.items)
        elif p == FALSE:
            return FALSE
        elif p != TRUE:
            out.append(p)
    if not out:
        return TRUE
    return out[0] if len(out) == 1 else And(tuple(out))


def implies(a: Formula, b: Formula) -> Formula:
    if b == TRUE or a == FALSE:
        return TRUE
    if a == TRUE:
        return b
    return Implies(a, b)


def negate(f: Formula) -> Formula:
    if isinstance(f, Bool):
        return Bool(not f.value)
    if isinstance(f, Neg):
        return f.body
    return Neg(f)


def conjuncts(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, And):
        return f.items
    if f == TRUE:
        return ()
    return (f,)


def formula_vars(f: Formula) -> set[LocId]:
    out: set[LocId] = set()

    def go(f: Formula) -> None:
        match f:
            case Eq(a, b):
                out.update(term_locs(a))
                out.update(term_locs(b))
            case Neg(g):
                go(g)
            case And(items) | Or(items):
                for g in items:
                    go(g)
            case Implies(a, b):
                go(a)
                go(b)

    go(f)
    return out


def evaluate(f: Formula, env: Mapping[LocId, int]) -> bool:
    """Truth of ``f`` under a total assignment, using the engine's arithmetic."""
    match f:
        case Eq(a, b):
            return eval_term(a, env) == eval_term(b, env)
        case Neg(g):
            return not evaluate(g, env)
        case And(items):
            return all(evaluate(g, env) for g in items)
        case Or(items):
            return any(evaluate(g, env) for g in items)
        case Implies(a, b):
            return not evaluate(a, env) or evaluate(b, env)
        case Bool(v):
            return v
    raise TypeError(f)


def show(f: Formula) -> str:
    match f:
        case Eq(a, b):
            return f"({a} = {b})"
        case Neg(Eq(a, b)):
            return f"({a} ≠ {b})"
        case Neg(g):
            return f"¬{show(g)}"
        case And(items):
            return "(" + " ∧ ".join(map(show, items)) + ")"
        case Or(items):
            return "(" + " ∨ ".join(map(show, items)) + ")"
        case Implies(a, b):
            return f"({show(a)} ⇒ {show(b)})"
        case Bool(v):
            return "true" if v else "false"
    raise TypeError(f)


# ---------------------------------------------------------------------------
# Heap translation


def base_locs(h: Heap) -> list[LocId]:
    """Every base-typed location; these are the formula's variables."""
    return sorted(l for l, s in h.items() if is_base(s))


def translate_pred(loc: LocId, p: Predicate) -> Formula:
    match p:
        case IsZero():
            return Eq(Ref(loc), Const(0))
        case Not(q):
            return negate(translate_pred(loc, q))
        case EqExpr(rhs):
            return Eq(Ref(loc), rhs)
    raise UntranslatablePredicate(repr(p))


def translate_binding(h: Heap, loc: LocId) -> Formula:
    s = h[loc]
    match s:
        case IntS(n, residual):
            return conj([Eq(Ref(loc), Const(n)), *(translate_pred(loc, p) for p in residual)])
        case OpaqueS(_, preds):
            return conj(translate_pred(loc, p) for p in preds)
        case CaseS(_, entries):
            return conj(
                implies(Eq(Ref(i1), Ref(i2)), equal_locs(h, o1, o2))
                for (i1, o1), (i2, o2) in itertools.combinations(entries, 2)
            )
    return TRUE


def translate_heap(h: Heap) -> Formula:
    return conj(translate_binding(h, loc) for loc in sorted(h))


def equal_locs(h: Heap, a: LocId, b: LocId) -> Formula:
    """Equality of two heap values: plain equality at base type, structural
    on the function shapes opaque refinement produces."""
    if a == b:
        return TRUE
    sa, sb = h[a], h[b]
    if is_base(sa) and is_base(sb):
        return Eq(Ref(a), Ref(b))
    return _equal_functions(h, sa, sb)


def residue_shape(s: LamS) -> Optional[tuple]:
    """Classify a lambda left behind by refining an opaque function.

    ``("const", La)`` for ``λx.La``; ``("havoc", L2, L1)`` for
    ``λx.(L2 (x L1))``; ``("curried", L1)`` for ``λx.λy.((L1 x) y)``.
    """
    x, body = s.param, s.body
    match body:
        case Loc(la):
            return ("const", la)
        case App(Loc(l2), App(Var(v), Loc(l1))) if v == x:
            return ("havoc", l2, l1)
        case Lam(y, _, App(App(Loc(l1), Var(v)), Var(w))) if v == x and w == y and y != x:
            return ("curried", l1)
    return None


def _equal_functions(h: Heap, sa, sb) -> Formula:
    if sa == sb:
        return TRUE
    if isinstance(sa, OpaqueS) or isinstance(sb, OpaqueS):
        # an unrefined opaque function can be chosen equal to anything
        return TRUE
    if isinstance(sa, CaseS) and isinstance(sb, CaseS):
        return conj(
            implies(Eq(Ref(i1), Ref(i2)), equal_locs(h, o1, o2))
            for i1, o1 in sa.entries
            for i2, o2 in sb.entries
        )
    if isinstance(sa, LamS) and isinstance(sb, LamS):
        ka, kb = residue_shape(sa), residue_shape(sb)
        if ka is not None and kb is not None and ka[0] == kb[0]:
            return conj(equal_locs(h, p, q) for p, q in zip(ka[1:], kb[1:]))
    return FALSE


# ---------------------------------------------------------------------------
# SMT-LIB rendering


def smt_term(t: Term) -> str:
    match t:
        case Const(v):
            return str(v) if v >= 0 else f"(- {-v})"
        case Ref(loc):
            return str(loc)
        case Arith(op, a, b):
            return f"({op} {smt_term(a)} {smt_term(b)})"
    raise TypeError(t)


def smt_formula(f: Formula) -> str:
    match f:
        case Eq(a, b):
            return f"(= {smt_term(a)} {smt_term(b)})"
        case Neg(g):
            return f"(not {smt_formula(g)})"
        case And(items):
            return "(and " + " ".join(map(smt_formula, items)) + ")"
        case Or(items):
            return "(or " + " ".join(map(smt_formula, items)) + ")"
        case Implies(a, b):
            return f"(=> {smt_formula(a)} {smt_formula(b)})"
        case Bool(v):
            return "true" if v else "false"
    raise TypeError(f)


def smtlib_script(
    f: Formula, variables: Iterable[LocId] = (), logic: str = "QF_NIA", get_model: bool = True
) -> str:
    names = sorted(set(variables) | formula_vars(f))
    lines = [f"(set-logic {logic})"]
    lines += [f"(declare-const {v} Int)" for v in names]
    lines += [f"(assert {smt_formula(c)})" for c in conjuncts(f)]
    if f == FALSE:
        lines.append("(assert false)")
    lines.append("(check-sat)")
    if get_model:
        lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Solver results


@dataclass(frozen=True)
class Sat:
    model: dict[LocId, int]


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = ""


SolveResult = Union[Sat, Unsat, Unknown]


class Solver(Protocol):
    name: str

    def check(self, f: Formula, variables: Iterable[LocId] = ()) -> SolveResult: ...


# ---------------------------------------------------------------------------
# Built-in bounded backend


class _Conflict(Exception):
    pass


class _OutOfNodes(Exception):
    pass


def _occurrences(t: Term, v: LocId) -> int:
    return sum(1 for l in term_locs(t) if l == v)


def _invert(t: Term, target: int, env: Mapping[LocId, int], v: LocId) -> Optional[int]:
    """Solve ``t = target`` for the single unknown ``v`` occurring once in ``t``.

    Returns None when the equation does not pin ``v`` down; raises
    ``_Conflict`` when it has no solution.
    """
    match t:
        case Ref():
            return target
        case Arith(op, a, b):
            unknown_left = any(l == v for l in term_locs(a))
            sub, known = (a, eval_term(b, env)) if unknown_left else (b, eval_term(a, env))
            if op == "+":
                return _invert(sub, target - known, env, v)
            if op == "-":
                return _invert(sub, target + known if unknown_left else known - target, env, v)
            if op == "*":
                if known == 0:
                    if target != 0:
                        raise _Conflict
                    return None
                if target % known:
                    raise _Conflict
                return _invert(sub, target // known, env, v)
            return None
    raise TypeError(t)


@dataclass
class _Clause:
    formula: Formula
    vars: frozenset[LocId]


class BoundedSolver:
    """Backtracking search over integer assignments.

    Equations with a single unknown are solved directly (so values they
    force may lie outside the bound); every other variable is tried over
    ``-bound..bound`` with iterative deepening.  ``Unsat`` is reported only
    when no variable had to be cut off at the bound.
    """

    name = "builtin"

    def __init__(self, bound: int = 256, node_limit: int = 50_000):
        self.bound = bound
        self.node_limit = node_limit

    def check(self, f: Formula, variables: Iterable[LocId] = ()) -> SolveResult:
        if f == FALSE:
            return Unsat()
        clauses = [_Clause(c, frozenset(formula_vars(c))) for c in conjuncts(f)]
        all_vars = set(variables) | formula_vars(f)
        model: dict[LocId, int] = {v: 0 for v in all_vars}
        unknown = False
        for comp_vars, comp in _components(clauses):
            result = self._solve_component(comp, comp_vars)
            if isinstance(result, Unsat):
                return result
            if isinstance(result, Unknown):
                unknown = True
            else:
                model.update(result.model)
        if unknown:
            return Unknown(f"no model with values within ±{self.bound}")
        return Sat(model)

    def _solve_component(self, clauses: list[_Clause], variables: set[LocId]) -> SolveResult:
        nodes = [0]
        levels = []
        b = 1
        while b < self.bound:
            levels.append(b)
            b *= 2
        levels.append(self.bound)
        for bound in levels:
            truncated = [False]
            try:
                env = self._dfs({}, clauses, variables, bound, truncated, nodes)
            except _OutOfNodes:
                return Unknown("search budget exhausted")
            if env is not None:
                return Sat(env)
            if not truncated[0]:
                return Unsat()
        return Unknown(f"no model with values within ±{self.bound}")

    def _propagate(self, env: dict[LocId, int], clauses: list[_Clause]) -> Optional[dict]:
        progress = True
        while progress:
            progress = False
            for c in clauses:
                missing = [v for v in c.vars if v not in env]
                if not missing:
                    if not evaluate(c.formula, env):
                        return None
                    continue
                if len(missing) != 1 or not isinstance(c.formula, Eq):
                    continue
                v = missing[0]
                a, b = c.formula.left, c.formula.right
                if _occurrences(a, v) + _occurrences(b, v) != 1:
                    continue
                side, other = (a, b) if _occurrences(a, v) else (b, a)
                try:
                    value = _invert(side, eval_term(other, env), env, v)
                except _Conflict:
                    return None
                if value is not None:
                    env[v] = value
                    progress = True
        return env

    def _dfs(self, env, clauses, variables, bound, truncated, nodes) -> Optional[dict]:
        nodes[0] += 1
        if nodes[0] > self.node_limit:
            raise _OutOfNodes
        env = self._propagate(dict(env), clauses)
        if env is None:
            return None
        free = [v for v in variables if v not in env]
        if not free:
            return env
        weight = {v: 0 for v in free}
        for c in clauses:
            for v in c.vars:
                if v in weight:
                    weight[v] += 1
        v = min(free, key=lambda v: (-weight[v], v))
        for value in _values(bound):
            env[v] = value
            found = self._dfs(env, clauses, variables, bound, truncated, nodes)
            if found is not None:
                return found
        truncated[0] = True
        return None


def _values(bound: int) -> Iterator[int]:
    yield 0
    for k in range(1, bound + 1):
        yield k
        yield -k


def _components(clauses: list[_Clause]) -> list[tuple[set[LocId], list[_Clause]]]:
    parent: dict[LocId, LocId] = {}

    def find(v: LocId) -> LocId:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for c in clauses:
        for v in c.vars:
            parent.setdefault(v, v)
        vs = sorted(c.vars)
        for other in vs[1:]:
            parent[find(other)] = find(vs[0])
    groups: dict[Optional[LocId], tuple[set, list]] = {}
    for c in clauses:
        key = find(min(c.vars)) if c.vars else None
        vs, cs = groups.setdefault(key, (set(), []))
        vs.update(c.vars)
        cs.append(c)
    return [groups[k] for k in sorted(groups, key=lambda k: (k is not None, k))]


# ---------------------------------------------------------------------------
# External SMT-LIB2 backend

_MODEL_ENTRY = re.compile(r"\(define-fun\s+(\S+)\s+\(\)\s+Int\s+(\(\s*-\s*\d+\s*\)|-?\d+)\s*\)")


def parse_smt_value(text: str) -> int:
    text = text.strip()
    if text.startswith("("):
        return -int(text.strip("() ").lstrip("-").strip())
    return int(text)


class SmtLibSolver:
    """One fresh solver process per query, talking SMT-LIB2 over stdin/stdout."""

    name = "smtlib"

    def __init__(self, command: Union[str, Sequence[str]], timeout: float = 10.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise ValueError("empty solver command")
        if len(argv) == 1 and os.path.basename(argv[0]).startswith("z3"):
            argv.append("-in")
        self.argv = argv
        self.timeout = timeout
        self.logic = "QF_NIA"

    def _run(self, script: str) -> str:
        try:
            proc = subprocess.run(
                self.argv, input=script, capture_output=True, text=True, timeout=self.timeout
            )
        except subprocess.TimeoutExpired:
            return "unknown"
        except OSError as exc:
            raise SolverFailure(f"cannot run {self.argv[0]}: {exc}") from exc
        return proc.stdout

    def check(self, f: Formula, variables: Iterable[LocId] = ()) -> SolveResult:
        variables = list(variables)
        out = self._run(smtlib_script(f, variables, self.logic))
        if self.logic != "ALL" and re.search(r"\(error[^)]*logic", out):
            self.logic = "ALL"
            out = self._run(smtlib_script(f, variables, self.logic))
        answer = next((w for w in out.split() if w in ("sat", "unsat", "unknown")), None)
        if answer is None:
            raise SolverFailure(f"unexpected solver output: {out[:200]!r}")
        if answer == "unsat":
            return Unsat()
        if answer == "unknown":
            return Unknown("solver said unknown")
        model = {v: 0 for v in set(variables) | formula_vars(f)}
        names = {str(v): v for v in model}
        for name, value in _MODEL_ENTRY.findall(out):
            if name in names:
                model[names[name]] = parse_smt_value(value)
        return Sat(model)


def find_solver(path: Optional[str] = None) -> Optional[SmtLibSolver]:
    """An external backend for ``path``, or for a ``z3`` on PATH."""
    if path:
        return SmtLibSolver(path)
    found = shutil.which("z3")
    return SmtLibSolver([found, "-in"]) if found else None


def solve(f: Formula, solver: Optional[Solver] = None, variables: Iterable[LocId] = ()) -> SolveResult:
    return (solver or BoundedSolver()).check(f, variables)


# ---------------------------------------------------------------------------
# Proof relation


class Verdict(enum.Enum):
    PROVED = "✓"
    REFUTED = "✗"
    AMBIG = "?"


@dataclass
class Conflict:
    heap: Heap
    loc: LocId
    pred: Predicate
    detail: str


@dataclass
class Prover:
    """Decides ``Σ ⊢ L : P`` by two solver queries.

    With ``audit`` on, both queries always run (and concrete shortcuts are
    cross-checked against the solver); any query that comes out both
    proved and refuted, or disagrees with direct evaluation, is recorded in
    ``conflicts``.
    """

    solver: Solver = field(default_factory=BoundedSolver)
    audit: bool = False
    queries: int = 0
    conflicts: list[Conflict] = field(default_factory=list)

    def check(self, f: Formula, variables: Iterable[LocId] = ()) -> SolveResult:
        self.queries += 1
        return self.solver.check(f, variables)

    def prove(self, h: Heap, loc: LocId, p: Predicate) -> Verdict:
        direct = self._direct(h, loc, p)
        if direct is not None and not self.audit:
            return direct
        phi = translate_heap(h)
        psi = translate_pred(loc, p)
        variables = base_locs(h)
        known = set(conjuncts(phi))
        refuted = negate(psi) in known or isinstance(
            self.check(conj([phi, psi]), variables), Unsat
        )
        proved = False
        if not refuted or self.audit:
            proved = psi in known or isinstance(
                self.check(conj([phi, negate(psi)]), variables), Unsat
            )
        verdict = Verdict.REFUTED if refuted else Verdict.PROVED if proved else Verdict.AMBIG
        if self.audit:
            if proved and refuted:
                self.conflicts.append(Conflict(h, loc, p, "both proved and refuted"))
            if direct is not None and verdict is not direct:
                self.conflicts.append(Conflict(h, loc, p, f"solver {verdict}, direct {direct}"))
        return direct if direct is not None else verdict

    @staticmethod
    def _direct(h: Heap, loc: LocId, p: Predicate) -> Optional[Verdict]:
        """Verdict by evaluation when everything involved is concrete."""
        s = h[loc]
        if not isinstance(s, IntS):
            return None
        env = {}
        for l in pred_locs(p):
            t = h[l]
            if not isinstance(t, IntS):
                return None
            env[l] = t.n
        return Verdict.PROVED if holds(p, s.n, env) else Verdict.REFUTED


def prove(h: Heap, loc: LocId, p: Predicate, solver: Optional[Solver] = None) -> Verdict:
    return Prover(solver or BoundedSolver()).prove(h, loc, p)
