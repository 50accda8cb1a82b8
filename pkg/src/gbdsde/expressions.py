"""Coefficients written as arithmetic expressions in a config file.

Expressions are parsed with :mod:`ast` and only a small whitelist of node
types, functions and names is accepted, so a config cannot run arbitrary code.

Variables: ``t``, ``y``, ``z1 .. zm`` and ``znorm`` for ``f`` and ``g``;
``t`` and ``y`` for ``h``; ``L_T``, ``B_T``, ``A_T`` and ``H1_T .. Hr_T`` for ``xi``.
"""

from __future__ import annotations

import ast
import re

import numpy as np

from .coefficients import CoefficientSet, ModulusSpec, log_root_modulus
from .errors import ConfigurationError

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh, "arctan": np.arctan,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "sign": np.sign,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
    "logroot": log_root_modulus,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant, ast.Compare,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod, ast.USub, ast.UAdd,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)
_Z_NAME = re.compile(r"^z(\d+)$")
_H_NAME = re.compile(r"^H(\d+)_T$")


class Expression:
    """A compiled whitelist expression; call with variables as keyword arrays."""

    def __init__(self, text: str, variables, label: str = "expression"):
        self.text = str(text)
        self.label = label
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ConfigurationError(f"{label}: cannot parse {self.text!r}: {exc.msg}") from None
        self.names = set()
        for node in ast.walk(tree):
            if not isinstance(node, _NODES):
                raise ConfigurationError(f"{label}: {type(node).__name__} is not allowed in {self.text!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                    raise ConfigurationError(f"{label}: only calls to {sorted(FUNCTIONS)} are allowed")
            elif isinstance(node, ast.Name) and node.id not in FUNCTIONS:
                if node.id not in CONSTANTS and not variables(node.id):
                    raise ConfigurationError(f"{label}: unknown name {node.id!r} in {self.text!r}")
                self.names.add(node.id)
            elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ConfigurationError(f"{label}: constant {node.value!r} is not a number")
        self._code = compile(tree, f"<{label}>", "eval")

    def __call__(self, n: int, **values) -> np.ndarray:
        scope = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS}
        scope.update({k: v for k, v in values.items() if k in self.names})
        out = eval(self._code, scope)  # noqa: S307 - AST checked against a whitelist above
        return np.broadcast_to(np.asarray(out, dtype=float), (n,)).copy()


def _driver_name(name: str) -> bool:
    return name in ("t", "y", "znorm") or bool(_Z_NAME.match(name))


def _terminal_name(name: str) -> bool:
    return name in ("L_T", "B_T", "A_T") or bool(_H_NAME.match(name))


def _driver(expr: Expression):
    def fn(t, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float).reshape(len(y), -1)
        values = {"t": t, "y": y, "znorm": np.linalg.norm(z, axis=1)}
        for name in expr.names:
            match = _Z_NAME.match(name)
            if match:
                i = int(match.group(1))
                values[name] = z[:, i - 1] if 1 <= i <= z.shape[1] else np.zeros(len(y))
        return expr(len(y), **values)

    return fn


def _h(expr: Expression):
    def fn(t, y):
        y = np.asarray(y, dtype=float)
        return expr(len(y), t=t, y=y)

    return fn


def _terminal(expr: Expression):
    def fn(bundle):
        values = {"L_T": bundle.L[:, -1], "B_T": bundle.B[:, -1], "A_T": np.asarray(bundle.A[:, -1])}
        for name in expr.names:
            match = _H_NAME.match(name)
            if match:
                i = int(match.group(1))
                if not 1 <= i <= bundle.rank:
                    raise ConfigurationError(f"xi uses {name} but the basis has rank {bundle.rank}")
                values[name] = bundle.H[:, -1, i - 1]
        return expr(bundle.n_paths, **values)

    return fn


def _bound(value, key):
    value = float(value)
    if not value >= 1:
        raise ConfigurationError(f"coefficients.{key} must be >= 1")
    return lambda t: value


def expression_coefficients(table: dict, rho: ModulusSpec) -> CoefficientSet:
    """Build a :class:`CoefficientSet` from ``f``, ``g``, ``h``, ``xi`` strings and constants."""
    missing = [k for k in ("C", "alpha", "beta", "K") if k not in table]
    if missing:
        raise ConfigurationError(f"expression coefficients need constants {missing}")
    f = Expression(table.get("f", "0"), _driver_name, "coefficients.f")
    g = Expression(table.get("g", "0"), _driver_name, "coefficients.g")
    h = Expression(table.get("h", "0"), lambda name: name in ("t", "y"), "coefficients.h")
    xi = Expression(table.get("xi", "0"), _terminal_name, "coefficients.xi")
    return CoefficientSet(
        f=_driver(f), g=_driver(g), h=_h(h), xi=_terminal(xi), rho=rho,
        C=float(table["C"]), alpha=float(table["alpha"]), beta=float(table["beta"]), K=float(table["K"]),
        f_bound=_bound(table.get("f_bound", 1.0), "f_bound"),
        g_bound=_bound(table.get("g_bound", 1.0), "g_bound"),
        h_bound=_bound(table.get("h_bound", 1.0), "h_bound"),
        name="expression",
        params={k: table[k] for k in ("f", "g", "h", "xi") if k in table},
    )
