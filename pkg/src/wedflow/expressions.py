"""Tiny whitelisted expression language for time profiles in config files.

Expressions are ordinary Python arithmetic in the single variable ``t``
(plus ``T`` when supplied), e.g. ``"t**2"`` or ``"exp(-t)"``.
"""

import ast

import numpy as np

from .exceptions import ConfigError

_FUNCS = {
    "exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt,
    "log": np.log, "abs": np.abs, "tanh": np.tanh, "pi": np.pi,
}
_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub,
    ast.UAdd,
)


def compile_expression(text, variables=("t",)):
    """Return a vectorized callable ``f(t, **vars)`` for ``text``."""
    text = str(text)
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    allowed = set(_FUNCS) | set(variables)
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"expression {text!r} uses unsupported syntax "
                              f"({type(node).__name__})")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ConfigError(f"expression {text!r} references unknown name {node.id!r}; "
                              f"allowed: {sorted(allowed)}")
        if isinstance(node, ast.Call) and not (
                isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"expression {text!r} calls a non-whitelisted function")
    code = compile(tree, "<expr>", "eval")

    def f(t, **kw):
        t = np.asarray(t, dtype=float)
        env = dict(_FUNCS)
        env["t"] = t
        env.update(kw)
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), t.shape).copy()

    f.expression = text
    return f
