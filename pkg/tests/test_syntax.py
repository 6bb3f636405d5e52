import random

import pytest
from corpus import PROGRAMS, WORKED_EXAMPLE
from hypothesis import given, settings
from hypothesis import strategies as st

from spcf_cex import oracle
from spcf_cex.syntax import (
    INT,
    App,
    Arrow,
    Label,
    Lam,
    Lit,
    Opq,
    ParseError,
    PrimApp,
    Program,
    TypeCheckError,
    Var,
    arrow,
    free_vars,
    labels,
    opaques,
    parse,
    parse_expr,
    parse_type,
    prim_sites,
    relabel,
    render,
    replace_opaques,
    substitute,
    subterms,
    typecheck,
)

# -- parse ------------------------------------------------------------------


def test_parse_identity_lambda():
    assert parse_expr("(λ (x : int) x)") == Lam("x", INT, Var("x"))


def test_parse_worked_example_shape():
    p = parse(WORKED_EXAMPLE)
    fn_t = arrow(INT, INT)
    opq_t = Arrow(Arrow(fn_t, fn_t), INT)
    assert isinstance(p.root, App)
    assert p.root.fn == Opq(opq_t, Label(1))
    g = p.root.arg
    assert isinstance(g, Lam) and g.param == "g" and g.param_type == fn_t
    n = g.body
    assert isinstance(n, Lam) and n.param == "n" and n.param_type == INT
    div = n.body
    assert isinstance(div, PrimApp) and div.op == "div" and div.label == Label(2)
    assert div.args[0] == Lit(1)
    sub = div.args[1]
    assert sub == PrimApp("-", (Lit(100), App(Var("g"), Var("n"))), Label(3))


def test_parse_division_by_literal_zero():
    assert parse_expr("(div 1 0)") == PrimApp("div", (Lit(1), Lit(0)), Label(1))


def test_parse_labels_left_to_right():
    e = parse_expr("(+ (• int) (div (• int) 2))")
    assert labels(e) == [Label(1), Label(2), Label(3), Label(4)]
    assert [l for l, _ in opaques(e)] == [Label(2), Label(4)]
    assert [l for l, _ in prim_sites(e)] == [Label(1), Label(3)]


def test_parse_alternative_spellings():
    a = parse_expr("(lambda (f : (int → int)) ((opaque ((int -> int) -> int)) f))")
    b = parse_expr("(λ (f : (int -> int)) ((• ((int -> int) -> int)) f))")
    assert a == b


def test_parse_comments_and_whitespace():
    src = "; a comment\n(add1 ; inline\n  41)\n"
    assert parse_expr(src) == PrimApp("add1", (Lit(41),), Label(1))


def test_parse_negative_literals():
    assert parse_expr("(- -3 4)") == PrimApp("-", (Lit(-3), Lit(4)), Label(1))


def test_curried_application_sugar():
    assert parse_expr("(f 1 2)") == App(App(Var("f"), Lit(1)), Lit(2))


def test_parse_type_right_nested_chain():
    assert parse_type("(int -> int -> int)") == arrow(INT, INT, INT)
    assert parse_type("((int -> int) -> int)") == Arrow(arrow(INT, INT), INT)


@pytest.mark.parametrize(
    "src, line, column",
    [
        ("(add1 1", 1, 1),
        ("(add1 1))", 1, 9),
        ("\n  (λ (x int) x)", 2, 6),
        ("(if 1 2)", 1, 1),
        ("(• )", 1, 1),
        ("()", 1, 1),
    ],
)
def test_parse_errors_carry_position(src, line, column):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert (info.value.line, info.value.column) == (line, column)


def test_parse_error_on_empty_input():
    with pytest.raises(ParseError):
        parse("   ; nothing\n")


# -- typecheck --------------------------------------------------------------


def test_typecheck_identity():
    assert typecheck(Lam("x", INT, Var("x"))) == Arrow(INT, INT)


def test_typecheck_rejects_applying_a_number():
    with pytest.raises(TypeCheckError):
        typecheck(App(Lit(1), Lit(2)))


def test_typecheck_worked_example_is_int():
    assert typecheck(parse(WORKED_EXAMPLE)) == INT


@pytest.mark.parametrize(
    "src",
    [
        "((• (int -> int)) (λ (x : int) x))",
        "((• ((int -> int) -> int)) 3)",
        "(add1 (• (int -> int)))",
        "(if (• (int -> int)) 1 2)",
        "(if 1 (• int) (• (int -> int)))",
        "y",
        "(div 1)",
    ],
)
def test_typecheck_rejects_mismatched_annotations(src):
    with pytest.raises(TypeCheckError):
        typecheck(parse(src))


@pytest.mark.parametrize("name, src, _", PROGRAMS)
def test_corpus_typechecks_at_int(name, src, _):
    assert typecheck(parse(src)) == INT


def test_program_records_known_labels_and_opaque_types():
    p = parse("(div (• int) ((• (int -> int)) 3))")
    assert p.known_labels == frozenset({Label(1)})
    assert p.opaque_types == {Label(2): INT, Label(3): arrow(INT, INT)}


# -- helpers ----------------------------------------------------------------


def test_substitute_respects_shadowing():
    e = parse_expr("((λ (x : int) x) x)")
    assert substitute(e, "x", Lit(5)) == parse_expr("((λ (x : int) x) 5)")


def test_free_vars():
    assert free_vars(parse_expr("(λ (x : int) (+ x y))")) == {"y"}


def test_replace_opaques_by_label():
    p = parse("(div 1 (• int))")
    assert replace_opaques(p.root, {Label(2): Lit(3)}) == PrimApp("div", (Lit(1), Lit(3)), Label(1))


def test_render_worked_example_is_the_source():
    assert render(parse(WORKED_EXAMPLE).root) == WORKED_EXAMPLE


# -- properties -------------------------------------------------------------

TYPES = (INT, arrow(INT, INT), parse_type("((int -> int) -> int)"))


def _random_expr(seed):
    gen = oracle.ProgramGenerator(random.Random(seed), max_depth=5, opaque_types=TYPES, max_opaques=3)
    return gen.program()


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_parse_render_round_trip(seed):
    e = _random_expr(seed)
    assert parse_expr(render(e)) == e


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_labels_are_unique(seed):
    e = _random_expr(seed)
    sites = [t for t in subterms(e) if isinstance(t, (Opq, PrimApp))]
    assert len(set(labels(e))) == len(sites)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_generated_programs_typecheck(seed):
    assert typecheck(Program.from_expr(_random_expr(seed))) == INT


def test_relabel_matches_parse_order():
    e = parse_expr("(div (• int) (+ 1 (• int)))")
    assert relabel(e) == e
