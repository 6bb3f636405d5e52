"""End-to-end acceptance checks, one test per criterion.

Criteria 1 to 6 share one auditing prover; criterion 7 then inspects every
query it answered.  Run them together (``pytest tests/test_acceptance.py``)
so the audit sees the full query stream.
"""

import itertools
import random
import re
import time

import pytest
from corpus import HIGHER_ORDER_DIV, PROGRAMS, WORKED_EXAMPLE
from support import (
    HARNESS_TYPES,
    assignments,
    counterexamples,
    division_sites,
    random_base_heap,
    random_programs,
    worked_example_roles,
)

from spcf_cex import heap as H
from spcf_cex import oracle
from spcf_cex.cex import (
    NoModel,
    Status,
    Validated,
    build_counterexample,
    checked,
    validate,
)
from spcf_cex.delta import Error, delta
from spcf_cex.heap import Arith, Const, EqExpr, IntS, IsZero, Not, Ref, holds
from spcf_cex.logic import (
    Prover,
    Verdict,
    base_locs,
    evaluate,
    smtlib_script,
    translate_heap,
)
from spcf_cex.machine import Answer, Blame, Budget, run
from spcf_cex.syntax import (
    App,
    Label,
    Lit,
    Var,
    opaques,
    parse,
    replace_opaques,
    subterms,
)

AUDIT = Prover(audit=True)
BUDGET = Budget(max_states=2000)


def first_validated(p):
    for b in run(p, BUDGET, AUDIT).blames:
        c = build_counterexample(p, b, AUDIT.solver)
        if not isinstance(c, NoModel):
            c = checked(p, c)
            if c.validated is Status.YES:
                return b, c
    return None, None


@pytest.mark.criterion(1, "worked example: validated context, l4 = 100, l5 = 0, under 1 s")
def test_criterion_1_worked_example():
    started = time.monotonic()
    p = parse(WORKED_EXAMPLE)
    b, c = first_validated(p)
    elapsed = time.monotonic() - started
    assert c is not None
    l3, l4, l5 = worked_example_roles(b.heap)
    assert (c.model[l4], c.model[l5]) == (100, 0)
    # the context applies f to a function answering 100 on the reached
    # input, then applies the result to an integer
    term = c.bindings[Label(1)]
    reached = c.model.get(l3, 0)
    calls = [t for t in subterms(term) if isinstance(t, App) and t.fn == Var("f")]
    answers = [oracle.concrete_eval(App(t.arg, Lit(reached))) for t in calls if not isinstance(t.arg, Lit)]
    assert oracle.Returned(100) in answers
    assert any(isinstance(t.arg, Lit) for t in calls)
    plugged = replace_opaques(p.root, c.bindings)
    assert oracle.concrete_eval(plugged) == oracle.Blamed(Label(2), "div")
    assert elapsed < 1.0, elapsed


@pytest.mark.criterion(2, "escaping divider: blames the division, never the opaque, context applies to 0")
def test_criterion_2_escaping_divider():
    started = time.monotonic()
    p = parse(HIGHER_ORDER_DIV)
    report = run(p, BUDGET, AUDIT)
    b, c = first_validated(p)
    elapsed = time.monotonic() - started
    assert {bl.label for bl in report.blames} == {Label(2)}
    assert c is not None and (c.blame, c.op) == (Label(2), "div")
    term = c.bindings[Label(1)]
    assert any(isinstance(t, App) and t.fn == Var("f") and t.arg == Lit(0) for t in subterms(term))
    assert elapsed < 1.0, elapsed


@pytest.mark.criterion(3, "soundness: every reported counterexample validates (55 + 1000 programs)")
def test_criterion_3_soundness():
    assert len(PROGRAMS) >= 50
    corpus = [parse(src) for _, src, _ in PROGRAMS] + list(random_programs(3, 1000))
    reported = failed = 0
    for p in corpus:
        found = counterexamples(p, BUDGET, AUDIT)
        for c in found.reported:
            reported += 1
            if c.validated is not Status.YES:
                failed += 1
    print(f"{reported} counterexamples reported, {failed} failed validation")
    assert reported > 100
    assert failed == 0


def _enumerated_errors(p, values, found):
    """Errors reachable by some instantiation of the opaques, stopping at the
    first one the engine missed."""
    ops = list(opaques(p.root))
    labels = [label for label, _ in ops]
    for combo in itertools.product(*(values[t] for _, t in ops)):
        result = oracle.concrete_eval(replace_opaques(p.root, dict(zip(labels, combo))), 10_000)
        if isinstance(result, oracle.Blamed) and (result.label, result.op) not in found:
            return (result.label, result.op), combo
    return None


@pytest.mark.criterion(4, "relative completeness: no enumerated error missed (bound 8, 10^4 steps)")
@pytest.mark.slow
def test_criterion_4_relative_completeness():
    values = {t: list(oracle.enumerate_values(t, 8)) for t in HARNESS_TYPES}
    checked_programs = enumerated = 0
    misses = []
    for p in random_programs(11, 150, max_instances=100_000):
        checked_programs += 1
        found = counterexamples(p, Budget(max_states=20_000), AUDIT)
        if division_sites(p) <= set(found.validated):
            continue  # nothing left to miss
        enumerated += 1
        miss = _enumerated_errors(p, values, set(found.validated))
        if miss is not None:
            misses.append((p, miss))
    print(f"{checked_programs} programs, {enumerated} enumerated exhaustively, {len(misses)} misses")
    assert not misses, misses[:3]


def _machine_outcome(p):
    report = run(p, Budget(max_states=10_000), AUDIT)
    assert len(report.outcomes) == 1, report.outcomes
    [o] = report.outcomes
    if isinstance(o, Blame):
        return oracle.Blamed(o.label, o.op)
    assert isinstance(o, Answer)
    return oracle.Returned(o.heap[o.loc].n)


@pytest.mark.criterion(5, "differential: machine and concrete interpreter agree on 1000 programs")
def test_criterion_5_differential():
    disagreements = []
    kinds = {"value": 0, "blame": 0}
    for p in random_programs(5, 1000, opaque_types=(), require_opaque=False):
        expected = oracle.concrete_eval(p.root)
        got = _machine_outcome(p)
        kinds["blame" if isinstance(expected, oracle.Blamed) else "value"] += 1
        if got != expected:
            disagreements.append((p.root, got, expected))
    print(kinds)
    assert kinds["blame"] > 20 and kinds["value"] > 500
    assert not disagreements, disagreements[:3]


@pytest.mark.criterion(6, "delta branches: pairwise exclusive, jointly covering (200 heaps, bound 16)")
def test_criterion_6_delta_branches():
    rng = random.Random(6)
    ops = ["zero?", "add1", "sub1", "+", "-", "*", "=", "div"]
    calls = split = 0
    while calls < 200:
        h, locs = random_base_heap(rng, max_opaques=2)
        envs = [env for env in assignments(h, 16) if evaluate(translate_heap(h), env)]
        if not envs:
            continue  # the engine never reaches an unsatisfiable heap
        op = ops[calls % len(ops)]
        calls += 1
        arity = 1 if op in ("zero?", "add1", "sub1") else 2
        args = [rng.choice(locs) for _ in range(arity)]
        results = delta(h, op, args, AUDIT)
        assert results
        split += len(results) > 1
        for env in envs:
            sat = [r for r in results if evaluate(translate_heap(r.heap), env)]
            assert len(sat) == 1, (h, op, args, env, results)
            if op == "div" and env[args[1]] == 0:
                assert isinstance(sat[0], Error)
    print(f"{split} of 200 calls branched")
    assert split > 20


@pytest.mark.criterion(7, "proof relation: no query both proved and refuted; concrete verdicts agree")
def test_criterion_7_proof_consistency():
    # concrete heaps: the solver's verdict must match direct evaluation
    rng = random.Random(7)
    for _ in range(300):
        h = H.EMPTY
        h, a = H.alloc(h, IntS(rng.randint(-9, 9)))
        h, b = H.alloc(h, IntS(rng.randint(-9, 9)))
        p = rng.choice([IsZero(), Not(IsZero()), EqExpr(Const(rng.randint(-3, 3))),
                        EqExpr(Arith(rng.choice("+-*"), Ref(b), Const(rng.randint(-3, 3))))])
        expected = Verdict.PROVED if holds(p, h[a].n, {b: h[b].n}) else Verdict.REFUTED
        assert AUDIT.prove(h, a, p) is expected
    print(f"{AUDIT.queries} solver queries audited")
    assert AUDIT.queries > 1000
    assert AUDIT.conflicts == []


# Canonical form of the worked example's final-heap query: locations are
# renamed x0, x1, ... in order of first appearance.
GOLDEN = """\
(set-logic QF_NIA)
(declare-const x0 Int)
(declare-const x1 Int)
(declare-const x2 Int)
(declare-const x3 Int)
(declare-const x4 Int)
(assert (= x1 1))
(assert (= x2 100))
(assert (= x4 (- 100 x3)))
(assert (= x4 0))
(check-sat)
(get-model)
"""


def canonical(script: str) -> tuple[str, dict]:
    names: dict[str, str] = {}

    def rename(m):
        return names.setdefault(m.group(0), f"x{len(names)}")

    return re.sub(r"\bL\d+\b", rename, script), names


@pytest.mark.criterion(8, "translation golden test: worked-example heap as SMT-LIB2")
def test_criterion_8_translation_golden():
    [b] = run(parse(WORKED_EXAMPLE)).blames
    h = b.heap
    script = smtlib_script(translate_heap(h), base_locs(h))
    text, names = canonical(script)
    assert text == GOLDEN
    l3, l4, l5 = (names[str(l)] for l in worked_example_roles(h))
    for v in (l3, l4, l5):
        assert f"(declare-const {v} Int)" in text
    assert f"(assert (= {l5} (- 100 {l4})))" in text
    assert f"(assert (= {l5} 0))" in text or f"(assert (= 0 {l5}))" in text
    # equivalence, not just shape: the constraints force l4 = 100
    p = parse(WORKED_EXAMPLE)
    assert validate(p, build_counterexample(p, b)) == Validated()
