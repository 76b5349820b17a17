"""Small arithmetic-expression compiler for user-supplied fields and curves.

Expressions are parsed with :mod:`ast` and checked against a whitelist before
being turned into numpy-evaluable closures. Grammar (informal)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := ('+' | '-') factor | power
    power   := atom ('^' factor)?          # '**' is accepted as well
    atom    := NUMBER | NAME | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

    FUNC    := sin | cos | tan | exp | log | sqrt | atan2
    NAME    := a declared variable, or the constants pi, e

A comma-separated list of expressions (``"sin(s), -cos(s), 1 + s/2, s"``) is
compiled by :func:`compile_vector`.
"""

from __future__ import annotations

import ast
import math

import numpy as np

__all__ = ["ExpressionError", "compile_scalar", "compile_vector"]


class ExpressionError(ValueError):
    """Raised for syntax errors or names outside the whitelist."""


_FUNCS = {
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "tan": (np.tan, 1),
    "exp": (np.exp, 1),
    "log": (np.log, 1),
    "sqrt": (np.sqrt, 1),
    "atan2": (np.arctan2, 2),
}
_CONSTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _parse(text):
    try:
        return ast.parse(text.replace("^", "**").strip(), mode="eval").body
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None


def _build(node, variables):
    """Turn a whitelisted AST node into a closure ``f(env) -> value``."""
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = node.id
        if name in variables:
            return lambda env: env[name]
        if name in _CONSTS:
            value = _CONSTS[name]
            return lambda env: value
        raise ExpressionError(f"unknown name {name!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        inner = _build(node.operand, variables)
        if isinstance(node.op, ast.USub):
            return lambda env: np.negative(inner(env))
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left = _build(node.left, variables)
        right = _build(node.right, variables)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError(f"unsupported function in {ast.unparse(node)!r}")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        func, arity = _FUNCS[node.func.id]
        if len(node.args) != arity:
            raise ExpressionError(f"{node.func.id} takes {arity} argument(s)")
        args = [_build(a, variables) for a in node.args]
        return lambda env: func(*(a(env) for a in args))
    raise ExpressionError(f"unsupported syntax: {ast.unparse(node)!r}")


def _finish(fn, variables):
    names = tuple(variables)

    def evaluate(*values):
        arrays = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in values))
        out = fn(dict(zip(names, arrays)))
        # constant expressions still broadcast to the input shape
        return np.broadcast_to(np.asarray(out, dtype=float), arrays[0].shape).copy()

    return evaluate


def compile_scalar(text, variables, aliases=None):
    """Compile one expression into ``f(*values)`` over the given variable names.

    ``aliases`` maps extra names onto declared variables, e.g. ``{"x": "q1"}``.
    """
    variables = list(variables)
    node = _parse(text)
    if isinstance(node, ast.Tuple):
        raise ExpressionError(f"expected a single expression, got a list: {text!r}")
    node = _rename(node, aliases)
    return _finish(_build(node, set(variables)), variables)


def compile_vector(text, variables, length=None, aliases=None):
    """Compile a comma-separated list of expressions into a list of closures."""
    node = _parse(text)
    parts = node.elts if isinstance(node, ast.Tuple) else [node]
    if length is not None and len(parts) != length:
        raise ExpressionError(f"expected {length} components, got {len(parts)} in {text!r}")
    variables = list(variables)
    return [_finish(_build(_rename(p, aliases), set(variables)), variables) for p in parts]


def _rename(node, aliases):
    if not aliases:
        return node

    class _Alias(ast.NodeTransformer):
        def visit_Name(self, n):
            if n.id in aliases:
                return ast.copy_location(ast.Name(id=aliases[n.id], ctx=n.ctx), n)
            return n

    return _Alias().visit(node)
