"""Arithmetic expressions over named variables with forward-mode derivatives.

The grammar is deliberately small: numeric literals, variables, ``+ - * / ^``,
unary minus, and the functions ``sin cos exp log sqrt tanh``.  Every primitive
is smooth on its domain, so dual-number differentiation is exact (no
truncation error).  Domain violations (log of a nonpositive value, division by
zero, fractional powers of negative numbers) raise :class:`ExprEvalError`
instead of producing NaNs.

Precedence, tightest first: ``^`` (right associative), unary minus, ``* /``,
``+ -``.  So ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2) = 512``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Call",
    "ExprError", "ExprSyntaxError", "ExprEvalError",
    "FUNCTIONS", "parse", "to_string", "variables", "rename_variables",
    "evaluate", "eval_dual", "gradient", "jacobian", "Dual",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")


class ExprError(Exception):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


class ExprEvalError(ExprError):
    """Unbound variable or a primitive evaluated outside its domain."""


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str  # member of FUNCTIONS
    arg: Expr


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            # skip over trailing whitespace before declaring an error
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ExprSyntaxError(f"unexpected character {stripped[0]!r}", at)
        start = m.start("num") if m.group("num") else (
            m.start("name") if m.group("name") else m.start("op"))
        kind = "num" if m.group("num") else ("name" if m.group("name") else "op")
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected {op!r}", pos)
        self.advance()

    # expr := term (('+'|'-') term)*
    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.parse_term())
            else:
                return node

    # term := factor (('*'|'/') factor)*
    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.parse_factor())
            else:
                return node

    # factor := '-' factor | power
    def parse_factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.parse_factor())
        return self.parse_power()

    # power := atom ('^' factor)?     (right associative; exponent may be signed)
    def parse_power(self) -> Expr:
        node = self.parse_atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", node, self.parse_factor())
        return node

    def parse_atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", pos)
                self.advance()
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(text, arg)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if kind == "eof":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected token {text!r}", pos)


def parse(text: str) -> Expr:
    """Parse ``text`` into an :class:`Expr`, or raise :class:`ExprSyntaxError`."""
    parser = _Parser(text)
    node = parser.parse_expr()
    kind, tok, pos = parser.peek()
    if kind != "eof":
        if tok == ")":
            raise ExprSyntaxError("unbalanced ')'", pos)
        raise ExprSyntaxError(f"trailing input {tok!r}", pos)
    return node


# ---------------------------------------------------------------------------
# Printing / inspection

def to_string(e: Expr) -> str:
    """Fully parenthesized rendering; ``parse(to_string(e)) == e``."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    raise TypeError(f"not an Expr: {e!r}")


def variables(e: Expr) -> frozenset[str]:
    """Set of variable names appearing in ``e``."""
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        return variables(e.arg)
    raise TypeError(f"not an Expr: {e!r}")


def rename_variables(e: Expr, mapping: dict[str, str]) -> Expr:
    """Return a copy of ``e`` with variable names substituted via ``mapping``."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        return Var(mapping.get(e.name, e.name))
    if isinstance(e, Neg):
        return Neg(rename_variables(e.arg, mapping))
    if isinstance(e, BinOp):
        return BinOp(e.op, rename_variables(e.left, mapping),
                     rename_variables(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.fn, rename_variables(e.arg, mapping))
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Dual numbers

class Dual:
    """Value/derivative pair for forward-mode differentiation."""

    __slots__ = ("val", "dot")

    def __init__(self, val: float, dot: float = 0.0):
        self.val = float(val)
        self.dot = float(dot)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.dot!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.dot + other.dot)
        return Dual(self.val + other, self.dot)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.dot - other.dot)
        return Dual(self.val - other, self.dot)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.dot)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val,
                        self.dot * other.val + self.val * other.dot)
        return Dual(self.val * other, self.dot * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.val == 0.0:
                raise ExprEvalError("division by zero")
            v = self.val / other.val
            return Dual(v, (self.dot - v * other.dot) / other.val)
        if other == 0.0:
            raise ExprEvalError("division by zero")
        return Dual(self.val / other, self.dot / other)

    def __rtruediv__(self, other):
        if self.val == 0.0:
            raise ExprEvalError("division by zero")
        v = other / self.val
        return Dual(v, -v * self.dot / self.val)

    def __neg__(self):
        return Dual(-self.val, -self.dot)


def _val(x) -> float:
    return x.val if isinstance(x, Dual) else float(x)


def _dot(x) -> float:
    return x.dot if isinstance(x, Dual) else 0.0


def _pow_int(x: float, c: int) -> float:
    # Python's ** raises OverflowError instead of following IEEE; divergence
    # must surface as inf so integrators can report where it happened
    try:
        return x ** c
    except OverflowError:
        return math.inf if (x > 0.0 or c % 2 == 0) else -math.inf


def _power(base, exponent):
    """x^y for floats/duals with the domain rules of the language."""
    xv, yv = _val(base), _val(exponent)
    dual = isinstance(base, Dual) or isinstance(exponent, Dual)
    exponent_varies = _dot(exponent) != 0.0

    if not exponent_varies and float(yv).is_integer():
        c = int(yv)
        if xv == 0.0:
            if c == 0:
                warnings.warn("0^0 evaluated as 1", RuntimeWarning, stacklevel=2)
                return Dual(1.0, 0.0) if dual else 1.0
            if c < 0:
                raise ExprEvalError("zero raised to a negative power")
            v = 0.0
            if not dual:
                return v
            return Dual(v, _dot(base) if c == 1 else 0.0)
        v = _pow_int(xv, c)
        if not dual:
            return v
        db = _dot(base)
        d = 0.0 if db == 0.0 else c * _pow_int(xv, c - 1) * db
        return Dual(v, d)

    # genuinely real exponent: restrict to positive bases
    if xv <= 0.0:
        raise ExprEvalError(
            f"{xv!r} ^ {yv!r}: non-integer exponent requires a positive base")
    try:
        v = xv ** yv
    except OverflowError:
        v = math.inf
    if not dual:
        return v
    d = v * (_dot(exponent) * math.log(xv) + yv * _dot(base) / xv)
    return Dual(v, d)


def _apply_fn(fn: str, x):
    xv = _val(x)
    if fn == "sin":
        v, dv = math.sin(xv), math.cos(xv)
    elif fn == "cos":
        v, dv = math.cos(xv), -math.sin(xv)
    elif fn == "exp":
        try:
            v = math.exp(xv)
        except OverflowError:
            v = math.inf
        dv = v
    elif fn == "tanh":
        v = math.tanh(xv)
        dv = 1.0 - v * v
    elif fn == "log":
        if xv <= 0.0:
            raise ExprEvalError(f"log of nonpositive value {xv!r}")
        v, dv = math.log(xv), 1.0 / xv
    elif fn == "sqrt":
        if xv < 0.0:
            raise ExprEvalError(f"sqrt of negative value {xv!r}")
        if xv == 0.0:
            if _dot(x) != 0.0:
                raise ExprEvalError("sqrt derivative at zero is unbounded")
            v, dv = 0.0, 0.0
        else:
            v = math.sqrt(xv)
            dv = 0.5 / v
    else:  # pragma: no cover - parser rejects unknown functions
        raise ExprEvalError(f"unknown function {fn!r}")
    if isinstance(x, Dual):
        return Dual(v, dv * x.dot)
    return v


def _evaluate(e: Expr, env):
    """Evaluate with an env of floats and/or Duals."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExprEvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_evaluate(e.arg, env)
    if isinstance(e, BinOp):
        left = _evaluate(e.left, env)
        right = _evaluate(e.right, env)
        op = e.op
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if op == "/":
            if _val(right) == 0.0:
                raise ExprEvalError("division by zero")
            return left / right
        if op == "^":
            return _power(left, right)
        raise ExprEvalError(f"unknown operator {op!r}")  # pragma: no cover
    if isinstance(e, Call):
        return _apply_fn(e.fn, _evaluate(e.arg, env))
    raise TypeError(f"not an Expr: {e!r}")


def evaluate(e: Expr, env: dict[str, float]) -> float:
    """Evaluate ``e`` against ``env``; raises :class:`ExprEvalError` on
    unbound variables or domain violations."""
    result = _evaluate(e, env)
    return result.val if isinstance(result, Dual) else float(result)


def eval_dual(e: Expr, env: dict[str, float], seed: str) -> tuple[float, float]:
    """Return ``(value, d value / d seed)`` by dual-number evaluation."""
    dual_env = dict(env)
    if seed in dual_env:
        dual_env[seed] = Dual(dual_env[seed], 1.0)
    result = _evaluate(e, dual_env)
    if isinstance(result, Dual):
        return result.val, result.dot
    return float(result), 0.0


def gradient(e: Expr, names, env: dict[str, float]) -> np.ndarray:
    """Partial derivatives of ``e`` with respect to each name in ``names``."""
    return np.array([eval_dual(e, env, name)[1] for name in names], dtype=float)


def jacobian(exprs, names, env: dict[str, float]) -> np.ndarray:
    """Jacobian matrix J[i, j] = d exprs[i] / d names[j] at ``env``."""
    exprs = list(exprs)
    names = list(names)
    out = np.zeros((len(exprs), len(names)))
    for i, expr in enumerate(exprs):
        for j, name in enumerate(names):
            out[i, j] = eval_dual(expr, env, name)[1]
    return out
