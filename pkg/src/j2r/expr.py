"""A small closed arithmetic language for expression post-processors.

Formulas look like Python (``pow(p1.value, p2.value)``, ``0.1*p1.value``) and
are tokenized with :mod:`ast`, but only the constructs below are accepted:
numeric literals, ``<name>.value`` operand references, unary minus, the binary
operators ``+ - * / % **`` and calls to a fixed set of math functions.
Everything evaluates in 64-bit floating point.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Callable, Mapping, Union

from .errors import EvaluationError, ExpressionError, OperandTypeError, UnboundOperandError


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class Ref:
    name: str

    def __str__(self) -> str:
        return f"{self.name}.value"


@dataclass(frozen=True)
class Neg:
    operand: Expr

    def __str__(self) -> str:
        return f"(-({self.operand}))"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple[Expr, ...]

    def __str__(self) -> str:
        return f"{self.func}({', '.join(str(a) for a in self.args)})"


Expr = Union[Num, Ref, Neg, BinOp, Call]


def round_half_away(x: float, digits: int = 0) -> float:
    """Round to ``digits`` decimals, halves away from zero, on the shortest repr of ``x``.

    Working on the decimal repr means 0.005 -> 0.01 and 2.675 -> 2.68, which is
    what a reader of the printed value expects.
    """
    return float(quantize(x, digits))


def quantize(x: float, digits: int) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 800
        return Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)


def _round(x: float, digits: float = 0) -> float:
    if digits != int(digits):
        raise ValueError("round() digits must be an integer")
    return round_half_away(x, int(digits))


def _log(x: float) -> float:
    if x <= 0:
        raise ValueError("log of a non-positive number")
    return math.log(x)


def _log2(x: float) -> float:
    if x <= 0:
        raise ValueError("log2 of a non-positive number")
    return math.log2(x)


def _log10(x: float) -> float:
    if x <= 0:
        raise ValueError("log10 of a non-positive number")
    return math.log10(x)


def _variadic(fn: Callable) -> Callable:
    def wrapped(*args: float) -> float:
        if not args:
            raise ValueError(f"{fn.__name__}() needs at least one argument")
        return fn(args)
    return wrapped


# name -> (callable, allowed argument counts; None = one or more)
FUNCTIONS: dict[str, tuple[Callable[..., float], tuple[int, ...] | None]] = {
    "pow": (math.pow, (2,)),
    "sqrt": (math.sqrt, (1,)),
    "exp": (math.exp, (1,)),
    "log": (_log, (1,)),
    "log2": (_log2, (1,)),
    "log10": (_log10, (1,)),
    "floor": (lambda x: float(math.floor(x)), (1,)),
    "ceil": (lambda x: float(math.ceil(x)), (1,)),
    "abs": (abs, (1,)),
    "min": (_variadic(min), None),
    "max": (_variadic(max), None),
    "round": (_round, (1, 2)),
    "sin": (math.sin, (1,)),
    "cos": (math.cos, (1,)),
    "tan": (math.tan, (1,)),
}

_BINOPS: dict[type, str] = {
    ast.Add: "+",
    ast.Sub: "-",
    ast.Mult: "*",
    ast.Div: "/",
    ast.Mod: "%",
    ast.Pow: "**",
}


def parse_expression(text: str) -> Expr:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return _convert(tree.body, text)


def _convert(node: ast.AST, text: str) -> Expr:
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return Num(float(node.value))
    if isinstance(node, ast.Attribute):
        if node.attr == "value" and isinstance(node.value, ast.Name):
            return Ref(node.value.id)
        raise ExpressionError(f"in {text!r}: operands are referenced as '<name>.value'")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return Neg(_convert(node.operand, text))
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return BinOp(_BINOPS[type(node.op)], _convert(node.left, text), _convert(node.right, text))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError(f"in {text!r}: unsupported function call")
        if node.keywords:
            raise ExpressionError(f"in {text!r}: keyword arguments are not supported")
        name = node.func.id
        arities = FUNCTIONS[name][1]
        n = len(node.args)
        if (arities is None and n < 1) or (arities is not None and n not in arities):
            raise ExpressionError(f"in {text!r}: wrong number of arguments to {name}()")
        return Call(name, tuple(_convert(a, text) for a in node.args))
    if isinstance(node, ast.Name):
        raise ExpressionError(f"in {text!r}: bare name '{node.id}', did you mean '{node.id}.value'?")
    raise ExpressionError(f"in {text!r}: unsupported construct {ast.dump(node)[:40]}")


def references(expr: Expr) -> set[str]:
    if isinstance(expr, Ref):
        return {expr.name}
    if isinstance(expr, Neg):
        return references(expr.operand)
    if isinstance(expr, BinOp):
        return references(expr.left) | references(expr.right)
    if isinstance(expr, Call):
        return set().union(*(references(a) for a in expr.args)) if expr.args else set()
    return set()


def eval_expr(expr: Expr, bindings: Mapping[str, object]) -> float:
    value = _eval(expr, bindings)
    if not math.isfinite(value):
        raise EvaluationError(f"{expr} evaluates to a non-finite number")
    return value


def _eval(expr: Expr, bindings: Mapping[str, object]) -> float:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Ref):
        if expr.name not in bindings:
            raise UnboundOperandError(f"operand '{expr.name}' is not bound (not captured by 'match'?)")
        v = bindings[expr.name]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise OperandTypeError(f"operand '{expr.name}' is not numeric: {v!r}")
        return float(v)
    if isinstance(expr, Neg):
        return -_eval(expr.operand, bindings)
    if isinstance(expr, BinOp):
        a = _eval(expr.left, bindings)
        b = _eval(expr.right, bindings)
        try:
            if expr.op == "+":
                return a + b
            if expr.op == "-":
                return a - b
            if expr.op == "*":
                return a * b
            if expr.op == "/":
                return a / b
            if expr.op == "%":
                return a % b
            return math.pow(a, b)
        except (ArithmeticError, ValueError) as exc:
            raise EvaluationError(f"cannot evaluate {expr}: {exc}") from None
    fn = FUNCTIONS[expr.func][0]
    args = [_eval(a, bindings) for a in expr.args]
    try:
        return float(fn(*args))
    except (ArithmeticError, ValueError) as exc:
        raise EvaluationError(f"cannot evaluate {expr}: {exc}") from None
