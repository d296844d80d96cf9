"""Tiny arithmetic expression language for user-supplied periodic data.

Problem files carry residual certificates and forcing terms as strings such as
``"1 - cos(2*pi*t/T)"``.  They are parsed with :mod:`ast` and evaluated with
numpy, so only a whitelisted subset of Python syntax is accepted: numbers,
names bound at compile time, ``+ - * / **``, unary signs and calls to
``sin``/``cos``.  Checked trees are compiled to bytecode once.
"""
from __future__ import annotations

import ast
import math
from typing import Callable, Iterable

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos}
_CONSTS = {"pi": np.pi}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


class ExpressionError(ValueError):
    """Raised for expressions outside the supported mini-language."""


def _check(node: ast.AST, names: set[str]) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in names and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.UAdd, ast.USub)):
            raise ExpressionError("unsupported unary operator")
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin() and cos() calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id}() takes exactly one argument")
        _check(node.args[0], names)
    else:
        raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def compile_expression(source: str, variables: Iterable[str], **constants: float) -> Callable:
    """Compile ``source`` into a function of ``variables`` (positional).

    Extra keyword ``constants`` (for instance ``T=3.14``) are bound into the
    namespace.  The result broadcasts over numpy arrays and always returns
    floats/arrays of floats.

    >>> h = compile_expression("1 - cos(2*pi*t/T)", ["t"], T=2.0)
    >>> round(h(0.5), 12)
    1.0
    """
    variables = list(variables)
    try:
        tree = ast.parse(str(source), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    names = set(variables) | set(constants)
    _check(tree, names)
    # the tree is whitelisted above, so compiling it cannot reach anything else
    code = compile(tree, "<expression>", "eval")
    env = {"__builtins__": {}}
    env.update(_FUNCS)
    env.update(_CONSTS)
    env.update({k: float(v) for k, v in constants.items()})
    scalar_env = dict(env, sin=math.sin, cos=math.cos)

    def fn(*args):
        if len(args) != len(variables):
            raise TypeError(f"expected {len(variables)} arguments, got {len(args)}")
        if all(np.ndim(a) == 0 for a in args):
            return float(eval(code, scalar_env, dict(zip(variables, args))))
        arrs = [np.asarray(a, dtype=float) for a in args]
        out = eval(code, env, dict(zip(variables, arrs)))
        shape = np.broadcast(*arrs).shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape) * 1.0

    fn.source = source
    return fn
