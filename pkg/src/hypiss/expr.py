"""Serializable coefficient descriptors.

Coefficients of a system (speeds, source Jacobian entries, disturbances) are
either closed-form expressions in a small grammar or sampled tables with
linear interpolation.  Both round-trip through JSON:

    {"expr": "1 + 0.5*sin(x)"}
    {"samples": [[0.0, 1.0], [1.0, 2.0]]}

Plain numbers are accepted as constants.  Arbitrary Python callables are
accepted too, but cannot be serialized.
"""

import ast
from functools import cached_property

import numpy as np
import sympy

from .errors import ExpressionError

_FUNCS = {
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "atan": sympy.atan,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "tanh": sympy.tanh,
    "abs": sympy.Abs,
}
_CONSTS = {"pi": sympy.pi, "e": sympy.E}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _check_node(node, variables):
    if isinstance(node, ast.Expression):
        return _check_node(node.body, variables)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check_node(node.left, variables)
        _check_node(node.right, variables)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check_node(node.operand, variables)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id not in variables and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only exp, log, sqrt, sin, cos, tan, atan, "
                                  "sinh, cosh, tanh and abs may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check_node(node.args[0], variables)
    else:
        raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


class Expr:
    """Closed-form expression in the variables ``variables`` (default ``x``).

    >>> Expr("1 + x**2")(np.array([0.0, 2.0]))
    array([1., 5.])
    """

    def __init__(self, text, variables=("x",)):
        self.text = str(text)
        self.variables = tuple(variables)
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.text!r}: {exc.msg}") from None
        _check_node(tree, set(self.variables))
        self._symbols = sympy.symbols(self.variables)
        names = dict(zip(self.variables, self._symbols))
        names.update(_FUNCS)
        names.update(_CONSTS)
        # grammar already validated, so this only sees arithmetic and whitelisted names
        self.sym = sympy.sympify(self.text, locals=names)

    @cached_property
    def _fn(self):
        return sympy.lambdify(self._symbols, self.sym, modules="numpy")

    def __call__(self, *args):
        args = [np.asarray(a, dtype=float) for a in args]
        out = np.asarray(self._fn(*args), dtype=float)
        shape = np.broadcast_shapes(*(a.shape for a in args)) if args else ()
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    def derivative(self, var=None):
        var = var or self.variables[0]
        sym = self._symbols[self.variables.index(var)]
        d = Expr.__new__(Expr)
        d.text = str(sympy.diff(self.sym, sym))
        d.variables = self.variables
        d._symbols = self._symbols
        d.sym = sympy.diff(self.sym, sym)
        return d

    @property
    def is_constant(self):
        return not (self.sym.free_symbols & set(self._symbols))

    def to_json(self):
        return {"expr": self.text}

    def __eq__(self, other):
        return isinstance(other, Expr) and (self.variables, self.sym) == (other.variables, other.sym)

    def __hash__(self):
        return hash((self.variables, self.sym))

    def __repr__(self):
        return f"Expr({self.text!r})"


class Sampled:
    """Piecewise-linear interpolant through ``[[x, v], ...]`` (constant outside)."""

    def __init__(self, samples):
        arr = np.asarray(samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise ExpressionError("samples must be a list of [x, value] pairs")
        order = np.argsort(arr[:, 0], kind="stable")
        self.xs = arr[order, 0]
        self.vs = arr[order, 1]
        if np.any(np.diff(self.xs) <= 0):
            raise ExpressionError("sample abscissae must be distinct")

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.vs)

    def derivative(self, var=None):
        slopes = np.diff(self.vs) / np.diff(self.xs) if len(self.xs) > 1 else np.zeros(1)
        xs, ss = self.xs, slopes

        def d(x):
            idx = np.clip(np.searchsorted(xs, np.asarray(x, dtype=float), side="right") - 1,
                          0, len(ss) - 1)
            return ss[idx]
        return _Callable(d)

    @property
    def is_constant(self):
        return bool(np.all(self.vs == self.vs[0]))

    def to_json(self):
        return {"samples": np.column_stack([self.xs, self.vs]).tolist()}

    def __eq__(self, other):
        return (isinstance(other, Sampled) and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.vs, other.vs))

    __hash__ = object.__hash__

    def __repr__(self):
        return f"Sampled({len(self.xs)} points)"


class Constant:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, *args):
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.full(shape, self.value)

    def derivative(self, var=None):
        return Constant(0.0)

    is_constant = True

    def to_json(self):
        return self.value

    def __eq__(self, other):
        return isinstance(other, Constant) and self.value == other.value

    def __hash__(self):
        return hash(self.value)

    def __repr__(self):
        return f"Constant({self.value})"


class _Callable:
    """Adapter giving a plain function the coefficient interface."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, *args):
        args = [np.asarray(a, dtype=float) for a in args]
        out = np.asarray(self.fn(*args), dtype=float)
        shape = np.broadcast_shapes(*(a.shape for a in args)) if args else ()
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    def derivative(self, var=None, eps=1e-6):
        fn = self.fn
        return _Callable(lambda x: (np.asarray(fn(x + eps)) - np.asarray(fn(x - eps))) / (2 * eps))

    is_constant = False

    def to_json(self):
        raise TypeError("callable coefficients are not serializable; use an expression")

    def __repr__(self):
        return f"Callable({getattr(self.fn, '__name__', '?')})"


def as_coefficient(obj, variables=("x",)):
    """Normalize numbers, strings, JSON descriptors and callables to a coefficient."""
    if isinstance(obj, (Expr, Sampled, Constant, _Callable)):
        return obj
    if isinstance(obj, bool):
        raise ExpressionError("booleans are not coefficients")
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return Constant(obj)
    if isinstance(obj, str):
        return Expr(obj, variables)
    if isinstance(obj, dict):
        if set(obj) == {"expr"}:
            return Expr(obj["expr"], variables)
        if set(obj) == {"samples"}:
            return Sampled(obj["samples"])
        raise ExpressionError(f"coefficient object must have a single 'expr' or 'samples' key, got {sorted(obj)}")
    if callable(obj):
        return _Callable(obj)
    raise ExpressionError(f"cannot interpret {obj!r} as a coefficient")


def coefficient_json(c):
    return c.to_json()
