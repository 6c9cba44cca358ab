"""Scalar fields as expression trees.

Every node evaluates on a batch of points ``x`` of shape ``(N, n)`` and can
produce a second-order jet (value, gradient, Hessian) by forward propagation,
so curvature code never has to finite-difference a built-in field.  Nodes also
know their own symbolic partial derivative, which the solution constructors
use to write prescribed tensors in closed form.

JSON grammar (one object per node)::

    {"op": "coord", "index": 0}
    {"op": "const", "value": 1.5}
    {"op": "add", "args": [...]}        {"op": "mul", "args": [...]}
    {"op": "neg", "arg": ...}           {"op": "recip", "arg": ...}
    {"op": "pow", "arg": ..., "exponent": 2}
    {"op": "exp" | "sin" | "cos" | "log", "arg": ...}
    {"op": "sumsq", "indices": [0, 1]}

Non-integer exponents are accepted for ``pow`` but require a positive base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ExpressionError

__all__ = [
    "Jet", "Expr", "Coord", "Const", "Add", "Mul", "Neg", "Recip", "Pow",
    "Exp", "Sin", "Cos", "Log", "SumSq", "coords", "const", "exp", "sin",
    "cos", "log", "sumsq", "as_expr", "from_json", "random_expression",
]


# ---------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet:
    """Value, gradient and Hessian of a scalar field on a batch of points."""

    val: np.ndarray   # (N,)
    grad: np.ndarray  # (N, n)
    hess: np.ndarray  # (N, n, n)

    @classmethod
    def constant(cls, c: float, N: int, n: int) -> "Jet":
        return cls(np.full(N, float(c)), np.zeros((N, n)), np.zeros((N, n, n)))

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(self.val + other.val, self.grad + other.grad, self.hess + other.hess)

    def __mul__(self, other: "Jet") -> "Jet":
        a, b = self, other
        outer = a.grad[:, :, None] * b.grad[:, None, :]
        hess = (a.hess * b.val[:, None, None] + b.hess * a.val[:, None, None]
                + outer + np.swapaxes(outer, 1, 2))
        grad = a.grad * b.val[:, None] + b.grad * a.val[:, None]
        return Jet(a.val * b.val, grad, hess)

    def scale(self, c: float) -> "Jet":
        return Jet(c * self.val, c * self.grad, c * self.hess)

    def compose(self, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray) -> "Jet":
        """Chain rule for a unary function with values f0, f'(v)=f1, f''(v)=f2."""
        g = self.grad
        hess = (f1[:, None, None] * self.hess
                + f2[:, None, None] * g[:, :, None] * g[:, None, :])
        return Jet(f0, f1[:, None] * g, hess)


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ValueError(f"points must have shape (n,) or (N, n), got {x.shape}")
    return x, False


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base expression node; subclasses are frozen dataclasses."""

    op: str = ""

    # public API -------------------------------------------------------------

    def __call__(self, x) -> np.ndarray | float:
        xb, single = _batch(x)
        v = self._value(xb)
        return float(v[0]) if single else v

    def jet(self, x) -> Jet:
        xb, _ = _batch(x)
        return self._jet(xb)

    def diff(self, k: int) -> "Expr":
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def max_index(self) -> int:
        """Largest coordinate index referenced (-1 for constants)."""
        return max((c.max_index() for c in self.children()), default=-1)

    def children(self) -> tuple["Expr", ...]:
        return ()

    # overloads --------------------------------------------------------------

    def __add__(self, other):
        return add(self, as_expr(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, recip(as_expr(other)))

    def __rtruediv__(self, other):
        return mul(as_expr(other), recip(self))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return power(self, k)

    # hooks -------------------------------------------------------------------

    def _value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _jet(self, x: np.ndarray) -> Jet:
        raise NotImplementedError


@dataclass(frozen=True, eq=True)
class Coord(Expr):
    index: int
    op = "coord"

    def _value(self, x):
        return x[:, self.index].copy()

    def _jet(self, x):
        N, n = x.shape
        grad = np.zeros((N, n))
        grad[:, self.index] = 1.0
        return Jet(x[:, self.index].copy(), grad, np.zeros((N, n, n)))

    def diff(self, k):
        return Const(1.0 if k == self.index else 0.0)

    def max_index(self):
        return self.index

    def to_json(self):
        return {"op": "coord", "index": self.index}


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float
    op = "const"

    def _value(self, x):
        return np.full(x.shape[0], float(self.value))

    def _jet(self, x):
        return Jet.constant(self.value, *x.shape)

    def diff(self, k):
        return Const(0.0)

    def to_json(self):
        return {"op": "const", "value": float(self.value)}


@dataclass(frozen=True, eq=True)
class Add(Expr):
    args: tuple
    op = "add"

    def children(self):
        return self.args

    def _value(self, x):
        return sum((a._value(x) for a in self.args[1:]), self.args[0]._value(x))

    def _jet(self, x):
        out = self.args[0]._jet(x)
        for a in self.args[1:]:
            out = out + a._jet(x)
        return out

    def diff(self, k):
        return add(*(a.diff(k) for a in self.args))

    def to_json(self):
        return {"op": "add", "args": [a.to_json() for a in self.args]}


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    args: tuple
    op = "mul"

    def children(self):
        return self.args

    def _value(self, x):
        out = self.args[0]._value(x)
        for a in self.args[1:]:
            out = out * a._value(x)
        return out

    def _jet(self, x):
        out = self.args[0]._jet(x)
        for a in self.args[1:]:
            out = out * a._jet(x)
        return out

    def diff(self, k):
        terms = []
        for i, a in enumerate(self.args):
            da = a.diff(k)
            if _is_zero(da):
                continue
            terms.append(mul(*self.args[:i], da, *self.args[i + 1:]))
        return add(*terms) if terms else Const(0.0)

    def to_json(self):
        return {"op": "mul", "args": [a.to_json() for a in self.args]}


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr
    op = "neg"

    def children(self):
        return (self.arg,)

    def _value(self, x):
        return -self.arg._value(x)

    def _jet(self, x):
        return self.arg._jet(x).scale(-1.0)

    def diff(self, k):
        return neg(self.arg.diff(k))

    def to_json(self):
        return {"op": "neg", "arg": self.arg.to_json()}


def _guard_nonzero(v: np.ndarray, x: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(v) | (v == 0.0)
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(f"{what}: argument vanishes", x[i])


def _guard_positive(v: np.ndarray, x: np.ndarray, what: str) -> None:
    bad = ~(v > 0.0)
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(f"{what}: argument must be positive (got {v[i]:.3g})", x[i])


@dataclass(frozen=True, eq=True)
class Recip(Expr):
    arg: Expr
    op = "recip"

    def children(self):
        return (self.arg,)

    def _value(self, x):
        v = self.arg._value(x)
        _guard_nonzero(v, x, "recip")
        return 1.0 / v

    def _jet(self, x):
        j = self.arg._jet(x)
        _guard_nonzero(j.val, x, "recip")
        r = 1.0 / j.val
        return j.compose(r, -r * r, 2.0 * r * r * r)

    def diff(self, k):
        da = self.arg.diff(k)
        if _is_zero(da):
            return Const(0.0)
        return neg(mul(da, power(self, 2)))

    def to_json(self):
        return {"op": "recip", "arg": self.arg.to_json()}


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    arg: Expr
    exponent: float
    op = "pow"

    def children(self):
        return (self.arg,)

    @property
    def integral(self) -> bool:
        return float(self.exponent).is_integer()

    def _check(self, v, x):
        if not self.integral:
            _guard_positive(v, x, "pow")
        elif self.exponent < 0:
            _guard_nonzero(v, x, "pow")

    def _value(self, x):
        v = self.arg._value(x)
        self._check(v, x)
        return v ** self.exponent

    def _jet(self, x):
        j = self.arg._jet(x)
        self._check(j.val, x)
        p = self.exponent
        v = j.val
        if p == 0:
            return Jet.constant(1.0, *x.shape)
        f0 = v ** p
        f1 = p * v ** (p - 1) if p != 1 else np.ones_like(v)
        f2 = p * (p - 1) * v ** (p - 2) if p not in (0, 1) else np.zeros_like(v)
        return j.compose(f0, f1, f2)

    def diff(self, k):
        da = self.arg.diff(k)
        if _is_zero(da) or self.exponent == 0:
            return Const(0.0)
        return mul(Const(self.exponent), power(self.arg, self.exponent - 1), da)

    def to_json(self):
        e = self.exponent
        return {"op": "pow", "arg": self.arg.to_json(),
                "exponent": int(e) if float(e).is_integer() else float(e)}


class _Unary(Expr):
    """Elementwise f(arg) with known f, f', f''."""

    def children(self):
        return (self.arg,)

    def _f(self, v, x):  # -> (f0, f1, f2)
        raise NotImplementedError

    def _value(self, x):
        return self._f(self.arg._value(x), x)[0]

    def _jet(self, x):
        j = self.arg._jet(x)
        return j.compose(*self._f(j.val, x))

    def to_json(self):
        return {"op": self.op, "arg": self.arg.to_json()}


@dataclass(frozen=True, eq=True)
class Exp(_Unary):
    arg: Expr
    op = "exp"

    def _f(self, v, x):
        e = np.exp(v)
        return e, e, e

    def diff(self, k):
        da = self.arg.diff(k)
        return Const(0.0) if _is_zero(da) else mul(self, da)


@dataclass(frozen=True, eq=True)
class Sin(_Unary):
    arg: Expr
    op = "sin"

    def _f(self, v, x):
        s = np.sin(v)
        return s, np.cos(v), -s

    def diff(self, k):
        da = self.arg.diff(k)
        return Const(0.0) if _is_zero(da) else mul(Cos(self.arg), da)


@dataclass(frozen=True, eq=True)
class Cos(_Unary):
    arg: Expr
    op = "cos"

    def _f(self, v, x):
        c = np.cos(v)
        return c, -np.sin(v), -c

    def diff(self, k):
        da = self.arg.diff(k)
        return Const(0.0) if _is_zero(da) else neg(mul(Sin(self.arg), da))


@dataclass(frozen=True, eq=True)
class Log(_Unary):
    arg: Expr
    op = "log"

    def _f(self, v, x):
        _guard_positive(v, x, "log")
        r = 1.0 / v
        return np.log(v), r, -r * r

    def diff(self, k):
        da = self.arg.diff(k)
        return Const(0.0) if _is_zero(da) else mul(da, recip(self.arg))


@dataclass(frozen=True, eq=True)
class SumSq(Expr):
    indices: tuple
    op = "sumsq"

    def _value(self, x):
        return np.sum(x[:, list(self.indices)] ** 2, axis=1)

    def _jet(self, x):
        N, n = x.shape
        idx = list(self.indices)
        grad = np.zeros((N, n))
        grad[:, idx] = 2.0 * x[:, idx]
        hess = np.zeros((N, n, n))
        hess[:, idx, idx] = 2.0
        return Jet(self._value(x), grad, hess)

    def diff(self, k):
        if k in self.indices:
            return mul(Const(2.0), Coord(k))
        return Const(0.0)

    def max_index(self):
        return max(self.indices, default=-1)

    def to_json(self):
        return {"op": "sumsq", "indices": list(self.indices)}


# ---------------------------------------------------------------------------
# constructors with trivial constant folding (no algebraic simplification)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1.0


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to an expression")


def const(c: float) -> Const:
    return Const(float(c))


def coords(n: int) -> list[Coord]:
    return [Coord(i) for i in range(n)]


def add(*args) -> Expr:
    flat: list[Expr] = []
    c = 0.0
    for a in map(as_expr, args):
        if isinstance(a, Add):
            flat.extend(a.args)
        elif isinstance(a, Const):
            c += a.value
        else:
            flat.append(a)
    if c != 0.0 or not flat:
        flat.append(Const(c))
    return flat[0] if len(flat) == 1 else Add(tuple(flat))


def mul(*args) -> Expr:
    flat: list[Expr] = []
    c = 1.0
    for a in map(as_expr, args):
        if isinstance(a, Mul):
            flat.extend(a.args)
        elif isinstance(a, Const):
            c *= a.value
        else:
            flat.append(a)
    if c == 0.0:
        return Const(0.0)
    if c != 1.0 or not flat:
        flat.insert(0, Const(c))
    return flat[0] if len(flat) == 1 else Mul(tuple(flat))


def neg(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def recip(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const) and a.value != 0.0:
        return Const(1.0 / a.value)
    return Recip(a)


def power(a, k: float) -> Expr:
    a = as_expr(a)
    k = float(k)
    if k == 1.0:
        return a
    if k == 0.0:
        return Const(1.0)
    return Pow(a, k)


def exp(a) -> Expr:
    return Exp(as_expr(a))


def sin(a) -> Expr:
    return Sin(as_expr(a))


def cos(a) -> Expr:
    return Cos(as_expr(a))


def log(a) -> Expr:
    return Log(as_expr(a))


def sumsq(indices: Sequence[int]) -> Expr:
    return SumSq(tuple(int(i) for i in indices))


# ---------------------------------------------------------------------------
# JSON


_UNARY: dict[str, Callable[[Expr], Expr]] = {
    "neg": Neg, "recip": Recip, "exp": Exp, "sin": Sin, "cos": Cos, "log": Log,
}


def from_json(node, pointer: str = "") -> Expr:
    """Parse the JSON grammar; errors carry a JSON pointer to the bad node."""
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return Const(float(node))
    if not isinstance(node, dict):
        raise ExpressionError("expression node must be an object", pointer)
    op = node.get("op")
    if op == "coord":
        idx = node.get("index")
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
            raise ExpressionError("coord needs a non-negative integer 'index'", pointer)
        return Coord(idx)
    if op == "const":
        v = node.get("value")
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ExpressionError("const needs a finite numeric 'value'", pointer)
        return Const(float(v))
    if op in ("add", "mul"):
        args = node.get("args")
        if not isinstance(args, list) or not args:
            raise ExpressionError(f"{op} needs a non-empty 'args' list", pointer)
        parsed = tuple(from_json(a, f"{pointer}/args/{i}") for i, a in enumerate(args))
        if len(parsed) == 1:
            return parsed[0]
        return Add(parsed) if op == "add" else Mul(parsed)
    if op in _UNARY or op == "pow":
        if "arg" not in node:
            raise ExpressionError(f"{op} needs an 'arg'", pointer)
        arg = from_json(node["arg"], f"{pointer}/arg")
        if op != "pow":
            return _UNARY[op](arg)
        e = node.get("exponent")
        if not isinstance(e, (int, float)) or isinstance(e, bool) or not math.isfinite(e):
            raise ExpressionError("pow needs a finite numeric 'exponent'", pointer)
        return Pow(arg, float(e))
    if op == "sumsq":
        idx = node.get("indices")
        if (not isinstance(idx, list) or not idx
                or not all(isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in idx)):
            raise ExpressionError("sumsq needs a non-empty list of 'indices'", pointer)
        return SumSq(tuple(idx))
    raise ExpressionError(f"unknown op {op!r}", pointer)


# ---------------------------------------------------------------------------
# random smooth trees, used by randomized checks


def random_expression(rng: np.random.Generator, variables: Sequence[int], depth: int = 3,
                      scale: float = 0.4) -> Expr:
    """A random smooth, everywhere-defined expression in the given coordinates.

    Only nodes that cannot hit a domain guard are used (no recip/log), and
    amplitudes are kept at ``scale`` so that exp() of the result stays tame.
    """
    variables = list(variables)

    def leaf():
        i = int(rng.choice(variables))
        a = float(rng.uniform(-1.0, 1.0))
        b = float(rng.uniform(-1.0, 1.0))
        return add(mul(a, Coord(i)), b)

    def build(d):
        if d == 0:
            return leaf()
        kind = rng.integers(0, 5)
        if kind == 0:
            return add(build(d - 1), build(d - 1))
        if kind == 1:
            return mul(build(d - 1), build(d - 1))
        if kind == 2:
            return sin(build(d - 1))
        if kind == 3:
            return cos(build(d - 1))
        return mul(float(rng.uniform(0.2, 0.6)), power(build(d - 1), 2))

    return mul(scale, sin(build(depth - 1)) + cos(build(depth - 1)))


def remap(e: Expr, mapping: dict[int, int]) -> Expr:
    """Rename coordinates: Coord(i) becomes Coord(mapping.get(i, i))."""
    if isinstance(e, Coord):
        return Coord(mapping.get(e.index, e.index))
    if isinstance(e, SumSq):
        return SumSq(tuple(mapping.get(i, i) for i in e.indices))
    if isinstance(e, (Add, Mul)):
        return type(e)(tuple(remap(a, mapping) for a in e.args))
    if isinstance(e, Pow):
        return Pow(remap(e.arg, mapping), e.exponent)
    if hasattr(e, "arg"):
        return type(e)(remap(e.arg, mapping))
    return e


def variables(e: Expr) -> set[int]:
    """Coordinate indices the expression depends on syntactically."""
    if isinstance(e, Coord):
        return {e.index}
    if isinstance(e, SumSq):
        return set(e.indices)
    out: set[int] = set()
    for c in e.children():
        out |= variables(c)
    return out
