"""A small expression language for scenario-defined fields.

Expressions are ordinary infix arithmetic over named variables (``t``,
``q1`` .. ``qd``, ``v1`` .. ``vd``) and scenario parameters, with the
functions ``exp``, ``ln``/``log``, ``sin``, ``cos``, ``tan``, ``sqrt`` and
``abs``.  Powers may be written ``x**2`` or ``x^2``.

The text is parsed with :mod:`ast` and only whitelisted node types are
accepted; the tree is then rebuilt as a sympy expression so analytic
derivatives are available on request.

>>> f = Expression.parse("beta * v1^2 / (alpha + q1)", ["t", "q1", "v1"],
...                      {"alpha": 1.0, "beta": 2.0})
>>> float(f(0.0, 1.0, 3.0))
9.0
"""

from __future__ import annotations

import ast
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

_FUNCTIONS = {
    "exp": sp.exp,
    "ln": sp.log,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
}
_CONSTANTS = {"pi": sp.pi, "e": sp.E}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


class ExpressionError(ValueError):
    pass


def _build(node, symbols: Mapping[str, sp.Symbol], params: Mapping[str, float], text: str):
    if isinstance(node, ast.Expression):
        return _build(node.body, symbols, params, text)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        left = _build(node.left, symbols, params, text)
        right = _build(node.right, symbols, params, text)
        return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand, symbols, params, text)
        return -inner if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return sp.Integer(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in symbols:
            return symbols[node.id]
        if node.id in params:
            return sp.Float(params[node.id])
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError(f"unsupported function call in {text!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument in {text!r}")
        return _FUNCTIONS[node.func.id](_build(node.args[0], symbols, params, text))
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {text!r}")


class Expression:
    """A parsed expression, callable on numpy arrays (broadcasting)."""

    def __init__(self, expr: sp.Expr, variables: Sequence[str], text: str | None = None):
        self.expr = expr
        self.variables = tuple(variables)
        self.text = text if text is not None else str(expr)
        self._symbols = [sp.Symbol(name) for name in self.variables]
        self._fn = sp.lambdify(self._symbols, expr, modules="numpy")

    @classmethod
    def parse(cls, text, variables: Sequence[str], params: Mapping[str, float] | None = None):
        params = dict(params or {})
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(float(text))
        if not isinstance(text, str):
            raise ExpressionError(f"expression must be a string or number, got {text!r}")
        symbols = {name: sp.Symbol(name) for name in variables}
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
        return cls(_build(tree, symbols, params, text), variables, text)

    def diff(self, name: str) -> "Expression":
        return Expression(sp.diff(self.expr, sp.Symbol(name)), self.variables,
                          f"d({self.text})/d{name}")

    @property
    def is_constant(self) -> bool:
        return not (self.expr.free_symbols & set(self._symbols))

    def depends_on(self, name: str) -> bool:
        return sp.Symbol(name) in self.expr.free_symbols

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        arrays = [np.asarray(a, dtype=float) for a in args]
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(*arrays), dtype=float)
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        return np.broadcast_to(out, shape)

    def __repr__(self):
        return f"Expression({self.text!r})"


def coordinate_names(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(d)]
