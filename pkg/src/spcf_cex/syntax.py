"""Abstract syntax, s-expression reader, printer and type checker for SPCF.

Surface programs are parenthesized s-expressions::

    ((• (((int -> int) -> (int -> int)) -> int))
     (λ (g : (int -> int)) (λ (n : int) (div 1 (- 100 (g n))))))

Every opaque ``(• T)`` and every primitive application is given a label
``ℓ1, ℓ2, ...`` in left-to-right source order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Union

# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class Base:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class Arrow:
    domain: "Type"
    codomain: "Type"

    def __str__(self) -> str:
        return f"({self.domain} -> {self.codomain})"


Type = Union[Base, Arrow]
INT = Base()


def arrow(*types: Type) -> Type:
    """Right-nested arrow: ``arrow(a, b, c)`` is ``a -> (b -> c)``."""
    result = types[-1]
    for t in reversed(types[:-1]):
        result = Arrow(t, result)
    return result


# ---------------------------------------------------------------------------
# Labels and locations


@dataclass(frozen=True, order=True)
class Label:
    index: int

    def __str__(self) -> str:
        return f"ℓ{self.index}"


@dataclass(frozen=True, order=True)
class LocId:
    index: int

    def __str__(self) -> str:
        return f"L{self.index}"


# ---------------------------------------------------------------------------
# Expressions

PRIMS = {
    "zero?": 1,
    "add1": 1,
    "sub1": 1,
    "+": 2,
    "-": 2,
    "*": 2,
    "div": 2,
    "=": 2,
}


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Opq:
    type: Type
    label: Label


@dataclass(frozen=True)
class Lam:
    param: str
    param_type: Type
    body: "Expr"


@dataclass(frozen=True)
class App:
    fn: "Expr"
    arg: "Expr"


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True)
class PrimApp:
    op: str
    args: tuple["Expr", ...]
    label: Label


@dataclass(frozen=True)
class Loc:
    """A heap location; appears only in machine states."""

    loc: LocId


@dataclass(frozen=True)
class Err:
    """``err^ℓ_O``: primitive ``op`` at site ``label`` failed."""

    label: Label
    op: str


Expr = Union[Var, Lit, Opq, Lam, App, If, PrimApp, Loc, Err]

VALUE_FORMS = (Lit, Lam, Opq)


def is_answer(e: Expr) -> bool:
    return isinstance(e, (Loc, Err))


@dataclass(frozen=True)
class Program:
    root: Expr
    known_labels: frozenset[Label]
    opaque_types: Mapping[Label, Type] = field(hash=False, compare=False)

    @classmethod
    def from_expr(cls, root: Expr) -> "Program":
        known = frozenset(l for l, _ in prim_sites(root))
        return cls(root, known, dict(opaques(root)))


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class TypeCheckError(Exception):
    def __init__(self, message: str, term: Optional[Expr] = None):
        if term is not None:
            message = f"{message} in {render(term)}"
        super().__init__(message)
        self.term = term


# ---------------------------------------------------------------------------
# Traversal helpers


def subterms(e: Expr) -> Iterator[Expr]:
    """Pre-order, left-to-right walk."""
    stack = [e]
    while stack:
        e = stack.pop()
        yield e
        match e:
            case Lam(body=body):
                stack.append(body)
            case App(fn, arg):
                stack.extend((arg, fn))
            case If(c, t, f):
                stack.extend((f, t, c))
            case PrimApp(args=args):
                stack.extend(reversed(args))


def prim_sites(e: Expr) -> Iterator[tuple[Label, str]]:
    for s in subterms(e):
        if isinstance(s, PrimApp):
            yield s.label, s.op


def opaques(e: Expr) -> Iterator[tuple[Label, Type]]:
    for s in subterms(e):
        if isinstance(s, Opq):
            yield s.label, s.type


def labels(e: Expr) -> list[Label]:
    return [s.label for s in subterms(e) if isinstance(s, (Opq, PrimApp))]


def free_vars(e: Expr) -> frozenset[str]:
    match e:
        case Var(name):
            return frozenset([name])
        case Lam(param, _, body):
            return free_vars(body) - {param}
        case App(fn, arg):
            return free_vars(fn) | free_vars(arg)
        case If(c, t, f):
            return free_vars(c) | free_vars(t) | free_vars(f)
        case PrimApp(args=args):
            return frozenset().union(*map(free_vars, args))
        case _:
            return frozenset()


def substitute(e: Expr, name: str, replacement: Expr) -> Expr:
    """``[replacement/name]e``.

    Capture cannot happen when ``replacement`` is closed (a location or a
    closed term), which is the only way the machine calls this.
    """
    match e:
        case Var(n):
            return replacement if n == name else e
        case Lam(param, t, body):
            if param == name:
                return e
            return Lam(param, t, substitute(body, name, replacement))
        case App(fn, arg):
            return App(substitute(fn, name, replacement), substitute(arg, name, replacement))
        case If(c, t, f):
            return If(
                substitute(c, name, replacement),
                substitute(t, name, replacement),
                substitute(f, name, replacement),
            )
        case PrimApp(op, args, label):
            return PrimApp(op, tuple(substitute(a, name, replacement) for a in args), label)
        case _:
            return e


def replace_opaques(e: Expr, bindings: Mapping[Label, Expr]) -> Expr:
    """Plug closed terms in for the opaque occurrences they are bound to."""
    match e:
        case Opq(_, label) if label in bindings:
            return bindings[label]
        case Lam(param, t, body):
            return Lam(param, t, replace_opaques(body, bindings))
        case App(fn, arg):
            return App(replace_opaques(fn, bindings), replace_opaques(arg, bindings))
        case If(c, t, f):
            return If(*(replace_opaques(x, bindings) for x in (c, t, f)))
        case PrimApp(op, args, label):
            return PrimApp(op, tuple(replace_opaques(a, bindings) for a in args), label)
        case _:
            return e


def relabel(e: Expr, start: int = 1) -> Expr:
    """Renumber opaque and primitive labels sequentially in source order."""
    counter = iter(range(start, 1 << 62))

    def go(e: Expr) -> Expr:
        match e:
            case Opq(t, _):
                return Opq(t, Label(next(counter)))
            case Lam(param, t, body):
                return Lam(param, t, go(body))
            case App(fn, arg):
                fn2 = go(fn)
                return App(fn2, go(arg))
            case If(c, t, f):
                c2 = go(c)
                t2 = go(t)
                return If(c2, t2, go(f))
            case PrimApp(op, args, _):
                label = Label(next(counter))
                return PrimApp(op, tuple(go(a) for a in args), label)
            case _:
                return e

    return go(e)


# ---------------------------------------------------------------------------
# Reader

_TOKEN = re.compile(r"\s+|;[^\n]*|[()]|:|[^\s():;]+")

LAMBDA_WORDS = {"λ", "lambda"}
OPAQUE_WORDS = {"•", "opaque"}
ARROW_WORDS = {"->", "→"}
_INT = re.compile(r"-?[0-9]+\Z")
_IDENT = re.compile(r"[^\s():;0-9-][^\s():;]*\Z")
RESERVED = LAMBDA_WORDS | OPAQUE_WORDS | ARROW_WORDS | {"if", "int"} | set(PRIMS)


@dataclass
class _Tok:
    text: str
    line: int
    col: int


@dataclass
class _List:
    items: list
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        s = m.group()
        if not s.isspace() and not s.startswith(";"):
            tokens.append(_Tok(s, line, m.start() - line_start + 1))
        for i, ch in enumerate(s):
            if ch == "\n":
                line += 1
                line_start = m.start() + i + 1
    return tokens


def _read(tokens: list[_Tok]) -> list:
    stack: list[_List] = [_List([], 1, 1)]
    for tok in tokens:
        if tok.text == "(":
            stack.append(_List([], tok.line, tok.col))
        elif tok.text == ")":
            if len(stack) == 1:
                raise ParseError("unexpected ')'", tok.line, tok.col)
            done = stack.pop()
            stack[-1].items.append(done)
        else:
            stack[-1].items.append(tok)
    if len(stack) > 1:
        raise ParseError("unclosed '('", stack[-1].line, stack[-1].col)
    return stack[0].items


def _pos(node) -> tuple[int, int]:
    return node.line, node.col


def _is_word(node, words) -> bool:
    return isinstance(node, _Tok) and node.text in words


class _Builder:
    def __init__(self) -> None:
        self.next_label = 1

    def label(self) -> Label:
        lab = Label(self.next_label)
        self.next_label += 1
        return lab

    def type(self, node) -> Type:
        if isinstance(node, _Tok):
            if node.text == "int":
                return INT
            raise ParseError(f"unknown type {node.text!r}", *_pos(node))
        items = node.items
        # (a -> b -> c) is accepted and read right-nested
        if len(items) >= 3 and len(items) % 2 == 1 and all(
            _is_word(x, ARROW_WORDS) for x in items[1::2]
        ):
            return arrow(*(self.type(x) for x in items[0::2]))
        if len(items) == 1:
            return self.type(items[0])
        raise ParseError("malformed type", *_pos(node))

    def expr(self, node) -> Expr:
        if isinstance(node, _Tok):
            text = node.text
            if _INT.match(text):
                return Lit(int(text))
            if text in RESERVED or not _IDENT.match(text):
                raise ParseError(f"unexpected {text!r}", *_pos(node))
            return Var(text)
        items = node.items
        if not items:
            raise ParseError("empty form", *_pos(node))
        head = items[0]
        if _is_word(head, OPAQUE_WORDS):
            if len(items) != 2:
                raise ParseError("opaque needs exactly one type", *_pos(node))
            return Opq(self.type(items[1]), self.label())
        if _is_word(head, LAMBDA_WORDS):
            if len(items) != 3 or not isinstance(items[1], _List):
                raise ParseError("expected (λ (x : T) body)", *_pos(node))
            binder = items[1].items
            if (
                len(binder) != 3
                or not isinstance(binder[0], _Tok)
                or not _IDENT.match(binder[0].text)
                or binder[0].text in RESERVED
                or not _is_word(binder[1], {":"})
            ):
                raise ParseError("expected binder (x : T)", *_pos(items[1]))
            return Lam(binder[0].text, self.type(binder[2]), self.expr(items[2]))
        if _is_word(head, {"if"}):
            if len(items) != 4:
                raise ParseError("if takes three expressions", *_pos(node))
            c = self.expr(items[1])
            t = self.expr(items[2])
            return If(c, t, self.expr(items[3]))
        if isinstance(head, _Tok) and head.text in PRIMS:
            if len(items) < 2:
                raise ParseError(f"{head.text} needs arguments", *_pos(node))
            label = self.label()
            return PrimApp(head.text, tuple(self.expr(x) for x in items[1:]), label)
        if len(items) < 2:
            raise ParseError("application needs an argument", *_pos(node))
        # (f a b) is curried application ((f a) b)
        result = self.expr(head)
        for item in items[1:]:
            result = App(result, self.expr(item))
        return result


def parse_expr(text: str) -> Expr:
    forms = _read(_tokenize(text))
    if len(forms) != 1:
        if not forms:
            raise ParseError("empty program", 1, 1)
        raise ParseError("expected a single expression", *_pos(forms[1]))
    return _Builder().expr(forms[0])


def parse_type(text: str) -> Type:
    forms = _read(_tokenize(text))
    if len(forms) != 1:
        raise ParseError("expected a single type", 1, 1)
    return _Builder().type(forms[0])


def parse(text: str) -> Program:
    return Program.from_expr(parse_expr(text))


# ---------------------------------------------------------------------------
# Printer


def render(e: Expr) -> str:
    match e:
        case Var(name):
            return name
        case Lit(value):
            return str(value)
        case Opq(t, _):
            return f"(• {t})"
        case Lam(param, t, body):
            return f"(λ ({param} : {t}) {render(body)})"
        case App(fn, arg):
            return f"({render(fn)} {render(arg)})"
        case If(c, t, f):
            return f"(if {render(c)} {render(t)} {render(f)})"
        case PrimApp(op, args, _):
            return f"({op} {' '.join(map(render, args))})"
        case Loc(loc):
            return str(loc)
        case Err(label, op):
            return f"err^{label}_{op}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Type checking


def infer(
    e: Expr,
    env: Mapping[str, Type] | None = None,
    loc_type: Callable[[LocId], Type] | None = None,
) -> Type:
    """Type of ``e`` under ``env``; locations are typed through ``loc_type``."""
    env = env or {}
    match e:
        case Var(name):
            if name not in env:
                raise TypeCheckError(f"unbound variable {name}", e)
            return env[name]
        case Lit():
            return INT
        case Opq(t, _):
            return t
        case Lam(param, t, body):
            return Arrow(t, infer(body, {**env, param: t}, loc_type))
        case App(fn, arg):
            ft = infer(fn, env, loc_type)
            if not isinstance(ft, Arrow):
                raise TypeCheckError(f"applying a non-function of type {ft}", e)
            at = infer(arg, env, loc_type)
            if at != ft.domain:
                raise TypeCheckError(f"argument has type {at}, expected {ft.domain}", e)
            return ft.codomain
        case If(c, t, f):
            if infer(c, env, loc_type) != INT:
                raise TypeCheckError("condition must be int", e)
            tt = infer(t, env, loc_type)
            if infer(f, env, loc_type) != tt:
                raise TypeCheckError("branches disagree", e)
            return tt
        case PrimApp(op, args, _):
            if len(args) != PRIMS[op]:
                raise TypeCheckError(f"{op} takes {PRIMS[op]} argument(s)", e)
            for a in args:
                if infer(a, env, loc_type) != INT:
                    raise TypeCheckError(f"{op} expects int arguments", e)
            return INT
        case Loc(loc):
            if loc_type is None:
                raise TypeCheckError("location outside a machine state", e)
            return loc_type(loc)
        case Err():
            raise TypeCheckError("error answer has no type", e)
    raise TypeError(f"not an expression: {e!r}")


def typecheck(p: Program | Expr) -> Type:
    root = p.root if isinstance(p, Program) else p
    return infer(root)
