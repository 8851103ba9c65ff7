"""Arithmetic expression language used for the scalar fields of problem files.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

So ``-2^2 == -4``, ``2^3^2 == 512`` and ``2^-1 == 0.5``. ``pi`` is the only
named constant. Evaluation is numpy-aware: bindings may be floats or arrays
and the result broadcasts accordingly. All error offsets are byte offsets
into the UTF-8 encoding of the source text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "tanh": (1, np.tanh),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}
CONSTANTS = {"pi": np.pi}


class ExprError(Exception):
    code = "expr"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.message = message
        self.offset = offset


class ExprSyntaxError(ExprError):
    code = "syntax"


class UnknownIdentifierError(ExprError):
    code = "unknown-identifier"


class ArityError(ExprError):
    code = "arity"


class ExprDomainError(ExprError):
    code = "domain"


# -- AST ------------------------------------------------------------------
# ``pos`` is excluded from equality so that structural comparison ignores
# where a node came from.


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Num) and self.value == other.value

    def __hash__(self):
        return hash(("num", self.value))


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name

    def __hash__(self):
        return hash(("var", self.name))


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Neg) and self.operand == other.operand

    def __hash__(self):
        return hash(("neg", self.operand))


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = 0

    def __eq__(self, other):
        return (
            isinstance(other, BinOp)
            and self.op == other.op
            and self.left == other.left
            and self.right == other.right
        )

    def __hash__(self):
        return hash(("bin", self.op, self.left, self.right))


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Call) and self.name == other.name and self.args == other.args

    def __hash__(self):
        return hash(("call", self.name, self.args))


Node = Union[Num, Var, Neg, BinOp, Call]


# -- lexer ----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int  # byte offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    i = 0
    byte = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", byte)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), byte))
        byte += len(m.group().encode("utf-8"))
        i = m.end()
    toks.append(_Tok("end", "", byte))
    return toks


# -- parser ---------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, allowed_vars):
        self.toks = _tokenize(text)
        self.i = 0
        self.allowed = frozenset(allowed_vars)

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok.text != text or tok.kind == "end":
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", tok.pos)
        return self.take()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            tok = self.take()
            node = BinOp(tok.text, node, self.term(), tok.pos)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().text in ("*", "/") and self.peek().kind == "op":
            tok = self.take()
            node = BinOp(tok.text, node, self.unary(), tok.pos)
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return Neg(self.unary(), tok.pos)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            return BinOp("^", base, self.unary(), tok.pos)
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "num":
            value = float(tok.text)
            if not np.isfinite(value):
                raise ExprSyntaxError(f"number {tok.text!r} is out of range", tok.pos)
            return Num(value, tok.pos)
        if tok.kind == "name":
            if self.peek().text == "(" and self.peek().kind == "op":
                return self.call(tok)
            if tok.text in FUNCTIONS:
                raise ArityError(f"function {tok.text!r} used without arguments", tok.pos)
            if tok.text in self.allowed:
                return Var(tok.text, tok.pos)
            if tok.text in CONSTANTS:
                return Var(tok.text, tok.pos)
            raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.pos)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "end":
            raise ExprSyntaxError("unexpected end of input", tok.pos)
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.pos)

    def call(self, name_tok: _Tok) -> Node:
        if name_tok.text not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name_tok.text!r}", name_tok.pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek().kind == "op" and self.peek().text == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name_tok.text][0]
        if len(args) != arity:
            raise ArityError(
                f"{name_tok.text} expects {arity} argument(s), got {len(args)}", name_tok.pos
            )
        return Call(name_tok.text, tuple(args), name_tok.pos)


# -- evaluation -----------------------------------------------------------


def _domain(cond, message, pos):
    if np.any(cond):
        raise ExprDomainError(message, pos)


def _eval(node: Node, env: dict):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in env:
            return env[node.name]
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        raise ExprDomainError(f"variable {node.name!r} is not bound", node.pos)
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _domain(np.asarray(b) == 0, "division by zero", node.pos)
            return np.true_divide(a, b)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            out = np.power(np.asarray(a, dtype=float), b)
        _domain(
            np.isnan(out) & ~(np.isnan(a) | np.isnan(b)),
            "power of a negative base with a non-integer exponent",
            node.pos,
        )
        _domain(np.isinf(out) & (np.asarray(a) == 0), "zero raised to a negative power", node.pos)
        return out[()] if np.ndim(out) == 0 else out
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.name == "log":
            _domain(np.asarray(args[0]) <= 0, "log of a nonpositive number", node.pos)
        elif node.name == "sqrt":
            _domain(np.asarray(args[0]) < 0, "sqrt of a negative number", node.pos)
        fn = FUNCTIONS[node.name][1]
        with np.errstate(over="ignore"):
            out = fn(*args)
        return out[()] if np.ndim(out) == 0 else out
    raise TypeError(f"not an expression node: {node!r}")


def _fmt_num(v: float) -> str:
    return repr(float(v))


def to_text(node: Node) -> str:
    """Canonical, fully parenthesised rendering that re-parses to ``node``."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(node)


def _free_vars(node: Node, acc: set):
    if isinstance(node, Var):
        if node.name not in CONSTANTS:
            acc.add(node.name)
    elif isinstance(node, Neg):
        _free_vars(node.operand, acc)
    elif isinstance(node, BinOp):
        _free_vars(node.left, acc)
        _free_vars(node.right, acc)
    elif isinstance(node, Call):
        for a in node.args:
            _free_vars(a, acc)
    return acc


class Expr:
    """A parsed expression together with its source text and variable set."""

    def __init__(self, text: str, allowed_vars=("t",)):
        self.text = text
        self.allowed_vars = tuple(allowed_vars)
        self.ast = _Parser(text, self.allowed_vars).parse()
        self.variables = frozenset(_free_vars(self.ast, set()))

    def eval(self, **bindings):
        missing = self.variables - set(bindings)
        if missing:
            raise ExprDomainError(f"unbound variable(s): {', '.join(sorted(missing))}", 0)
        return _eval(self.ast, bindings)

    __call__ = eval

    def canonical(self) -> str:
        return to_text(self.ast)

    def __repr__(self):
        return f"Expr({self.text!r})"


def parse(text: str, allowed_vars=("t",)) -> Expr:
    return Expr(text, allowed_vars)


def evaluate(e: Expr, bindings: dict):
    return e.eval(**bindings)
