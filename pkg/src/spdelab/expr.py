"""Arithmetic expressions for data fields in experiment configs.

Grammar: numbers, the variables allowed by the caller (a subset of ``t``,
``x``, ``y``, ``u``, ``u1``, ``u2``), the constants ``pi`` and ``e``, the
operators ``+ - * / **`` with unary ``+``/``-``, parentheses, and calls to
``sin cos tan exp log sqrt abs tanh sinh cosh arctan minimum maximum sign``.
Anything else (attribute access, subscripts, comparisons, names outside the
whitelist) is rejected at parse time, so a config is fully checked before
any solve starts.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

__all__ = ["ExprError", "Expression", "compile_expr", "FUNCTIONS", "CONSTANTS"]

FUNCTIONS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "sign": np.sign,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
ALL_VARIABLES = ("t", "x", "y", "u", "u1", "u2")

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}
_UNARY = {ast.UAdd: np.positive, ast.USub: np.negative}


class ExprError(ValueError):
    def __init__(self, message: str, text: str, column: int | None = None):
        self.text = text
        self.column = column
        where = f" at column {column + 1}" if column is not None else ""
        super().__init__(f"{message}{where} in expression {text!r}")


class Expression:
    """A validated expression; call with keyword arrays for its variables."""

    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.variables = variables
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExprError(f"syntax error: {exc.msg}", text, (exc.offset or 1) - 1) from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node: ast.AST):
        col = getattr(node, "col_offset", None)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExprError("only numeric literals are allowed", self.text, col)
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in CONSTANTS:
                raise ExprError(f"unknown name {node.id!r} (allowed: {', '.join(self.variables)}, pi, e)",
                                self.text, col)
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExprError("unsupported operator", self.text, col)
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExprError("unsupported unary operator", self.text, col)
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExprError("unknown function", self.text, col)
            if node.keywords:
                raise ExprError("keyword arguments are not allowed", self.text, col)
            nargs = 2 if node.func.id in ("minimum", "maximum") else 1
            if len(node.args) != nargs:
                raise ExprError(f"{node.func.id} takes {nargs} argument(s)", self.text, col)
            for arg in node.args:
                self._check(arg)
        else:
            raise ExprError(f"unsupported syntax ({type(node).__name__})", self.text, col)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        return FUNCTIONS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __call__(self, **values) -> np.ndarray:
        missing = [v for v in self.variables if v not in values]
        if missing:
            raise TypeError(f"missing variables {missing} for {self.text!r}")
        env = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        shape = np.broadcast_shapes(*(a.shape for a in env.values())) if env else ()
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    @property
    def is_zero(self) -> bool:
        return isinstance(self._tree, ast.Constant) and float(self._tree.value) == 0.0

    def __repr__(self):
        return f"Expression({self.text!r})"


def compile_expr(text: str, variables=("t", "x")) -> Expression:
    if not isinstance(text, str):
        raise ExprError("expression must be a string", str(text))
    bad = [v for v in variables if v not in ALL_VARIABLES]
    if bad:
        raise ValueError(f"unsupported variables {bad}")
    return Expression(text, tuple(variables))
