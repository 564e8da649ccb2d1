"""Safe arithmetic expressions over a single variable.

Scenario configs describe per-state rules ("(i+1)**2", "0.5 + 0.25/max(i,1)")
as strings.  Expressions are parsed with :mod:`ast`, checked against a small
whitelist (arithmetic operators plus exp/log/min/max/pow), and compiled once.
Evaluation works elementwise on numpy arrays as well as on scalars, so rules
can be applied to whole index ranges at once.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

from .errors import ValidationError

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)

_FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "min": np.minimum,
    "max": np.maximum,
    "pow": np.power,
}


def _check(node: ast.AST, variable: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, variable)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _ALLOWED_BINOPS):
            raise ValidationError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, variable)
        _check(node.right, variable)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _ALLOWED_UNARY):
            raise ValidationError(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand, variable)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ValidationError("only exp/log/min/max/pow calls are allowed")
        if node.keywords:
            raise ValidationError("keyword arguments are not allowed")
        for arg in node.args:
            _check(arg, variable)
    elif isinstance(node, ast.Name):
        if node.id != variable:
            raise ValidationError(
                f"unknown name {node.id!r}; only {variable!r} is available"
            )
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ValidationError(f"literal {node.value!r} is not numeric")
    else:
        raise ValidationError(f"syntax element {type(node).__name__} not allowed")


def compile_expression(source: str, variable: str = "i") -> Callable:
    """Compile ``source`` into a function of one (scalar or array) argument.

    Raises :class:`ValidationError` if the expression uses anything outside
    the arithmetic whitelist.
    """
    if not isinstance(source, str) or not source.strip():
        raise ValidationError("expression must be a non-empty string")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {source!r}: {exc}") from exc
    _check(tree, variable)
    code = compile(tree, f"<expr {source!r}>", "eval")
    namespace = {**_FUNCTIONS, "__builtins__": {}}

    def evaluate(value):
        return eval(code, namespace, {variable: value})  # noqa: S307 (whitelisted AST)

    evaluate.source = source  # type: ignore[attr-defined]
    evaluate.variable = variable  # type: ignore[attr-defined]
    return evaluate
