"""Closed expression grammar for model coefficients.

Coefficients are terms over time ``t`` and the scalar parameter ``theta``
built from: real constants, ``t``, ``theta``, ``exp``, sums, products, and
powers with a fixed real exponent. The grammar is deliberately tiny so that

* models are serializable (prefix s-expressions in JSON config files), and
* partial derivatives in ``theta`` and ``t`` are exact, obtained by
  structural differentiation rather than numerical differencing.

Evaluation broadcasts over numpy arrays in both arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InputError

__all__ = [
    "CoefficientExpr",
    "Const",
    "Time",
    "Param",
    "Sum",
    "Prod",
    "Pow",
    "Exp",
    "const",
    "parse_sexpr",
    "to_sexpr",
]


class CoefficientExpr:
    """Base node. Subclasses are immutable and hashable."""

    def __call__(self, theta, t):
        raise NotImplementedError

    def d_theta(self) -> "CoefficientExpr":
        raise NotImplementedError

    def d_t(self) -> "CoefficientExpr":
        raise NotImplementedError

    @property
    def depends_on_theta(self) -> bool:
        raise NotImplementedError

    # algebraic sugar used internally when assembling derivative trees
    def __add__(self, other):
        return _sum(self, _as_expr(other))

    def __mul__(self, other):
        return _prod(self, _as_expr(other))


def _as_expr(obj) -> CoefficientExpr:
    if isinstance(obj, CoefficientExpr):
        return obj
    if isinstance(obj, (int, float)):
        return Const(float(obj))
    raise InputError(f"cannot coerce {obj!r} to a coefficient expression")


@dataclass(frozen=True)
class Const(CoefficientExpr):
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise InputError(f"non-finite constant {self.value!r}")

    def __call__(self, theta, t):
        shape = np.broadcast_shapes(np.shape(theta), np.shape(t))
        if shape == ():
            return self.value
        return np.full(shape, self.value)

    def d_theta(self):
        return Const(0.0)

    def d_t(self):
        return Const(0.0)

    @property
    def depends_on_theta(self):
        return False


@dataclass(frozen=True)
class Time(CoefficientExpr):
    def __call__(self, theta, t):
        return np.asarray(t, float) if np.ndim(t) else float(t)

    def d_theta(self):
        return Const(0.0)

    def d_t(self):
        return Const(1.0)

    @property
    def depends_on_theta(self):
        return False


@dataclass(frozen=True)
class Param(CoefficientExpr):
    def __call__(self, theta, t):
        return np.asarray(theta, float) if np.ndim(theta) else float(theta)

    def d_theta(self):
        return Const(1.0)

    def d_t(self):
        return Const(0.0)

    @property
    def depends_on_theta(self):
        return True


@dataclass(frozen=True)
class Sum(CoefficientExpr):
    terms: tuple

    def __call__(self, theta, t):
        acc = self.terms[0](theta, t)
        for term in self.terms[1:]:
            acc = acc + term(theta, t)
        return acc

    def d_theta(self):
        return _sum(*[u.d_theta() for u in self.terms])

    def d_t(self):
        return _sum(*[u.d_t() for u in self.terms])

    @property
    def depends_on_theta(self):
        return any(u.depends_on_theta for u in self.terms)


@dataclass(frozen=True)
class Prod(CoefficientExpr):
    factors: tuple

    def __call__(self, theta, t):
        acc = self.factors[0](theta, t)
        for factor in self.factors[1:]:
            acc = acc * factor(theta, t)
        return acc

    def _leibniz(self, deriv):
        terms = []
        for i, _ in enumerate(self.factors):
            parts = list(self.factors)
            parts[i] = deriv(parts[i])
            terms.append(_prod(*parts))
        return _sum(*terms)

    def d_theta(self):
        return self._leibniz(lambda u: u.d_theta())

    def d_t(self):
        return self._leibniz(lambda u: u.d_t())

    @property
    def depends_on_theta(self):
        return any(u.depends_on_theta for u in self.factors)


@dataclass(frozen=True)
class Pow(CoefficientExpr):
    base: CoefficientExpr
    exponent: float

    def __call__(self, theta, t):
        return self.base(theta, t) ** self.exponent

    def _chain(self, inner):
        if self.exponent == 1.0:
            return inner
        return _prod(Const(self.exponent), Pow(self.base, self.exponent - 1.0), inner)

    def d_theta(self):
        return self._chain(self.base.d_theta())

    def d_t(self):
        return self._chain(self.base.d_t())

    @property
    def depends_on_theta(self):
        return self.base.depends_on_theta


@dataclass(frozen=True)
class Exp(CoefficientExpr):
    arg: CoefficientExpr

    def __call__(self, theta, t):
        return np.exp(self.arg(theta, t))

    def d_theta(self):
        return _prod(self, self.arg.d_theta())

    def d_t(self):
        return _prod(self, self.arg.d_t())

    @property
    def depends_on_theta(self):
        return self.arg.depends_on_theta


def const(value: float) -> Const:
    return Const(float(value))


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def _sum(*terms) -> CoefficientExpr:
    """Flatten and constant-fold a sum."""
    flat = []
    c = 0.0
    for u in terms:
        if isinstance(u, Sum):
            flat.extend(u.terms)
        else:
            flat.append(u)
    kept = []
    for u in flat:
        if _is_const(u):
            c += u.value
        else:
            kept.append(u)
    if c != 0.0 or not kept:
        kept.append(Const(c))
    if len(kept) == 1:
        return kept[0]
    return Sum(tuple(kept))


def _prod(*factors) -> CoefficientExpr:
    """Flatten and constant-fold a product; annihilate on exact zero."""
    flat = []
    c = 1.0
    for u in factors:
        if isinstance(u, Prod):
            flat.extend(u.factors)
        else:
            flat.append(u)
    kept = []
    for u in flat:
        if _is_const(u):
            c *= u.value
        else:
            kept.append(u)
    if c == 0.0:
        return Const(0.0)
    if c != 1.0 or not kept:
        kept.insert(0, Const(c))
    if len(kept) == 1:
        return kept[0]
    return Prod(tuple(kept))


# ---------------------------------------------------------------------------
# s-expression (de)serialization
# ---------------------------------------------------------------------------

SExpr = Union[float, int, str, list]


def parse_sexpr(obj: SExpr) -> CoefficientExpr:
    """Parse a prefix s-expression, e.g. ``["*", "theta", ["exp", "t"]]``."""
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Const(float(obj))
    if isinstance(obj, str):
        if obj == "t":
            return Time()
        if obj == "theta":
            return Param()
        raise InputError(f"unknown symbol {obj!r} (expected 't' or 'theta')")
    if isinstance(obj, (list, tuple)) and obj:
        head, *args = obj
        if head == "+":
            if not args:
                raise InputError("empty sum")
            return Sum(tuple(parse_sexpr(a) for a in args))
        if head == "*":
            if not args:
                raise InputError("empty product")
            return Prod(tuple(parse_sexpr(a) for a in args))
        if head == "exp":
            if len(args) != 1:
                raise InputError("exp takes exactly one argument")
            return Exp(parse_sexpr(args[0]))
        if head == "pow":
            if len(args) != 2 or not isinstance(args[1], (int, float)):
                raise InputError("pow takes (base, numeric exponent)")
            return Pow(parse_sexpr(args[0]), float(args[1]))
        raise InputError(f"unknown operator {head!r}")
    raise InputError(f"malformed expression {obj!r}")


def to_sexpr(expr: CoefficientExpr) -> SExpr:
    """Inverse of :func:`parse_sexpr` (up to constant folding)."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Time):
        return "t"
    if isinstance(expr, Param):
        return "theta"
    if isinstance(expr, Sum):
        return ["+"] + [to_sexpr(u) for u in expr.terms]
    if isinstance(expr, Prod):
        return ["*"] + [to_sexpr(u) for u in expr.factors]
    if isinstance(expr, Exp):
        return ["exp", to_sexpr(expr.arg)]
    if isinstance(expr, Pow):
        return ["pow", to_sexpr(expr.base), expr.exponent]
    raise InputError(f"unknown node {type(expr).__name__}")
