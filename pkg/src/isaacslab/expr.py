"""A small arithmetic expression language for model coefficients.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

``-x^2`` therefore parses as ``-(x^2)`` and ``^`` is right associative.
Variables are ``t``, ``x1..xd``, ``u1..um`` and ``v1..vk``. Evaluation is
numpy-vectorised: bindings may be scalars or broadcastable arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ArityError, EvaluationError, ExpressionSyntaxError, UnknownIdentifierError

FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "tanh": (1, np.tanh),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_VARIABLE = re.compile(r"t|[xuv][1-9][0-9]*")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

_BINARY_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = []
        pos = 0
        while pos < len(src):
            if src[pos:].strip() == "":
                break
            m = _TOKEN.match(src, pos)
            if m is None or m.end() == pos:
                bad = pos + len(src[pos:]) - len(src[pos:].lstrip())
                self._fail(f"unexpected character {src[bad]!r}", bad)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.tokens.append(("end", "", len(src)))
        self.i = 0

    def _fail(self, message, pos, cls=ExpressionSyntaxError):
        raise cls(message, self.src, _byte_offset(self.src, pos))

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.take()
        if value != text or kind != "op":
            self._fail(f"expected {text!r}, found {value or 'end of input'!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            self._fail(f"unexpected token {value!r}", pos)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            x = float(value)
            if not math.isfinite(x):
                self._fail(f"literal {value!r} is not finite", pos)
            return Num(x)
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if value not in FUNCTIONS:
                    self._fail(f"unknown function {value!r}", pos, UnknownIdentifierError)
                self.take()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[value][0]
                if len(args) != arity:
                    self._fail(f"{value} takes {arity} argument(s), got {len(args)}", pos, ArityError)
                return Call(value, tuple(args))
            if value in FUNCTIONS:
                self._fail(f"function {value!r} requires parentheses", pos)
            if not _VARIABLE.fullmatch(value):
                self._fail(f"unknown identifier {value!r}", pos, UnknownIdentifierError)
            return Var(value)
        if (kind, value) == ("op", "("):
            e = self.expr()
            self.expect(")")
            return e
        self._fail(f"unexpected token {value or 'end of input'!r}", pos)


def parse_expression(src: str) -> Expr:
    """Parse ``src`` into an expression tree."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionSyntaxError("empty expression", str(src), 0)
    return _Parser(src).parse()


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _BINARY_PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def to_source(e: Expr) -> str:
    """Print ``e`` with the minimal parentheses that reparse to the same tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = to_source(e.operand)
        if _prec(e.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    p = _BINARY_PREC[e.op]
    left, right = to_source(e.left), to_source(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _NEG_PREC:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}" if p < 2 else f"{left}{e.op}{right}"


def variables(e: Expr) -> frozenset:
    """Names of all variables referenced by ``e``."""
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= variables(a)
        return out
    return frozenset()


def _first_bad(value, env):
    """Bindings at the first non-finite entry, for error messages."""
    arr = np.asarray(value)
    if arr.ndim == 0:
        return {k: float(np.asarray(v).ravel()[0]) if np.size(v) == 1 else "array" for k, v in env.items()}
    idx = np.unravel_index(int(np.argmax(~np.isfinite(arr))), arr.shape)
    point = {}
    for k, v in env.items():
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            point[k] = float(v)
        else:
            b = np.broadcast_to(v, arr.shape) if v.shape != arr.shape else v
            point[k] = float(b[idx])
    return point


def _check(value, env, what):
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(value)
    if not np.all(ok):
        raise EvaluationError(f"non-finite result in {what}", _first_bad(value, env))
    return value


def _eval(e: Expr, env: Mapping[str, object]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvaluationError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Call):
        fn = FUNCTIONS[e.func][1]
        return _check(fn(*[_eval(a, env) for a in e.args]), env, f"{e.func}()")
    a, b = _eval(e.left, env), _eval(e.right, env)
    if e.op == "+":
        out = np.add(a, b)
    elif e.op == "-":
        out = np.subtract(a, b)
    elif e.op == "*":
        out = np.multiply(a, b)
    elif e.op == "/":
        out = np.divide(a, b)
    else:
        out = np.power(np.asarray(a, dtype=float), b)
    return _check(out, env, f"'{e.op}'")


def evaluate(e: Expr, env: Mapping[str, object]):
    """Vectorised evaluation; raises :class:`EvaluationError` on any non-finite intermediate."""
    with np.errstate(all="ignore"):
        return _eval(e, env)


def eval_expression(e: Expr, bindings: Mapping[str, float]) -> float:
    """Scalar evaluation of ``e`` under ``bindings``."""
    return float(evaluate(e, {k: float(v) for k, v in bindings.items()}))
