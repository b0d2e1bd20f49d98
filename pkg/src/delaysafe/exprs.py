"""Tiny closed-form expression language for scenario files.

Nonlinearities and reference trajectories arrive as text like
``(-5*y2 + 0.25*y2**2)/4`` or ``-4*t + cos(t) - 10.5``.  We accept the
arithmetic subset of Python expression syntax (+ - * / ** with integer
exponents, unary minus, parentheses) plus the functions sin, cos and exp,
over a declared set of variable names.  The compiled callable evaluates on
floats, numpy arrays and :class:`~delaysafe.jets.Jet` arguments, which is
what lets file-defined plants flow through the same derivative machinery
as the built-in ones.

Validation happens on the AST before anything is executed, so scenario
files cannot smuggle in attribute access, subscripts, names outside the
declared variables, or calls to anything but the whitelisted functions.
"""

from __future__ import annotations

import ast

from . import jets

__all__ = ["ExpressionError", "compile_expression"]

_FUNCS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARYOPS = (ast.USub, ast.UAdd)


class ExpressionError(ValueError):
    """Rejected or malformed scenario expression."""


def _validate(node: ast.AST, variables: frozenset, src: str) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, variables, src)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"operator not allowed in {src!r}")
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if isinstance(exp, ast.UnaryOp) and isinstance(exp.op, ast.USub):
                exp = exp.operand
            if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int)):
                raise ExpressionError(
                    f"exponents must be integer literals in {src!r}"
                )
        _validate(node.left, variables, src)
        _validate(node.right, variables, src)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARYOPS):
            raise ExpressionError(f"operator not allowed in {src!r}")
        _validate(node.operand, variables, src)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric literal in {src!r}")
    elif isinstance(node, ast.Name):
        if node.id not in variables and node.id not in _FUNCS:
            raise ExpressionError(f"unknown name {node.id!r} in {src!r}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError(f"only sin/cos/exp calls are allowed in {src!r}")
        if node.keywords or len(node.args) != 1:
            raise ExpressionError(f"{node.func.id} takes one positional argument in {src!r}")
        _validate(node.args[0], variables, src)
    else:
        raise ExpressionError(f"unsupported syntax in {src!r}")


def compile_expression(src: str, variables: tuple[str, ...]):
    """Compile an expression over ``variables`` into a positional callable."""
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as e:
        raise ExpressionError(f"cannot parse {src!r}: {e.msg} (column {e.offset})") from None
    _validate(tree, frozenset(variables), src)
    code = compile(tree, "<scenario expression>", "eval")
    glb = {"__builtins__": {}}
    glb.update(_FUNCS)

    def fn(*args):
        if len(args) != len(variables):
            raise TypeError(f"expression takes {len(variables)} arguments, got {len(args)}")
        return eval(code, glb, dict(zip(variables, args)))

    fn.source = src
    fn.variables = variables
    return fn
