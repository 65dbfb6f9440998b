"""
Expression trees
----------------

Immutable scalar expressions over named variables: parsing, printing,
symbolic differentiation, best-effort simplification and evaluation over
floats, numpy arrays and (nestable) dual numbers.

>>> e = parse_expr("y^2/x", ["x", "y"])
>>> evaluate(e, {"x": 1.0, "y": 2.0})
4.0
>>> print(diff(e, "x"))
-(y^2/x^2)

"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")
BINARY_OPS = ("+", "-", "*", "/", "^")

Number = Union[float, "DualScalar", np.ndarray]


class ParseError(ValueError):
    """Malformed expression text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r}", position)
        self.name = name


class SingularEvaluationError(ArithmeticError):
    """Raised when an expression cannot be evaluated at a point."""

    def __init__(self, reason: str, subexpr: "Expr", point=None):
        self.reason = reason
        self.subexpr = subexpr
        self.point = point
        super().__init__(f"{reason} in {subexpr}" + ("" if point is None else f" at {point}"))


# ---------------------------------------------------------------------------
# dual numbers


@dataclass(frozen=True, slots=True)
class DualScalar:
    """Dual number ``value + derivative*eps`` with ``eps**2 == 0``.

    Parts may themselves be DualScalars, which gives exact higher-order
    directional derivatives by nesting.
    """

    value: object
    derivative: object = 0.0

    def __add__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value + other.value, self.derivative + other.derivative)
        return DualScalar(self.value + other, self.derivative)

    __radd__ = __add__

    def __neg__(self):
        return DualScalar(-self.value, -self.derivative)

    def __sub__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value - other.value, self.derivative - other.derivative)
        return DualScalar(self.value - other, self.derivative)

    def __rsub__(self, other):
        return DualScalar(other - self.value, -self.derivative)

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value * other.value,
                              self.value * other.derivative + self.derivative * other.value)
        return DualScalar(self.value * other, self.derivative * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualScalar):
            q = self.value / other.value
            return DualScalar(q, (self.derivative - q * other.derivative) / other.value)
        return DualScalar(self.value / other, self.derivative / other)

    def __rtruediv__(self, other):
        q = other / self.value
        return DualScalar(q, -q * self.derivative / self.value)

    def __pow__(self, c: float):
        if c == 0:
            return DualScalar(1.0, 0.0)
        if c == 1:
            return self
        return DualScalar(self.value ** c, c * self.value ** (c - 1) * self.derivative)

    def exp(self):
        v = gexp(self.value)
        return DualScalar(v, v * self.derivative)

    def log(self):
        return DualScalar(glog(self.value), self.derivative / self.value)

    def sin(self):
        return DualScalar(gsin(self.value), gcos(self.value) * self.derivative)

    def cos(self):
        return DualScalar(gcos(self.value), -gsin(self.value) * self.derivative)

    def sqrt(self):
        r = gsqrt(self.value)
        return DualScalar(r, self.derivative / (2.0 * r))


def _generic(name):
    def f(a):
        if isinstance(a, DualScalar):
            return getattr(a, name)()
        if isinstance(a, np.ndarray):
            return getattr(np, name)(a)
        return getattr(math, name)(a)
    f.__name__ = "g" + name
    return f


gexp, glog, gsin, gcos, gsqrt = (_generic(n) for n in ("exp", "log", "sin", "cos", "sqrt"))


def _real(a):
    while isinstance(a, DualScalar):
        a = a.value
    return a


def seed(values, direction) -> list[DualScalar]:
    """Dual inputs ``values + eps*direction`` (entries may already be dual)."""
    return [DualScalar(v, d) for v, d in zip(values, direction)]


def tangent(a):
    """Derivative part of a dual result; zero for plain constants."""
    return a.derivative if isinstance(a, DualScalar) else 0.0


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class for expression nodes. Nodes are immutable and hashable."""

    __slots__ = ("_hash", "_str", "_compiled")
    precedence = 100

    def _init(self, key):
        object.__setattr__(self, "_hash", hash(key))
        object.__setattr__(self, "_str", None)
        object.__setattr__(self, "_compiled", {})

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def _key(self):
        raise NotImplementedError

    def __str__(self):
        if self._str is None:
            object.__setattr__(self, "_str", self._format())
        return self._str

    def __repr__(self):
        return f"Expr({str(self)!r})"

    # arithmetic builds raw nodes; use simplify() for tidy results
    def __add__(self, other):
        return Binary("+", self, as_expr(other))

    def __radd__(self, other):
        return Binary("+", as_expr(other), self)

    def __sub__(self, other):
        return Binary("-", self, as_expr(other))

    def __rsub__(self, other):
        return Binary("-", as_expr(other), self)

    def __mul__(self, other):
        return Binary("*", self, as_expr(other))

    def __rmul__(self, other):
        return Binary("*", as_expr(other), self)

    def __truediv__(self, other):
        return Binary("/", self, as_expr(other))

    def __rtruediv__(self, other):
        return Binary("/", as_expr(other), self)

    def __pow__(self, c):
        return Binary("^", self, Const(float(c)))

    def __neg__(self):
        return Unary("neg", self)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def free_variables(self) -> set[str]:
        out: set[str] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            stack.extend(node.children())
        return out

    def compile(self, variables: Sequence[str]) -> Callable[[Sequence[Number]], Number]:
        """Return ``f(values)`` evaluating this expression with ``values`` ordered as ``variables``."""
        variables = tuple(variables)
        fn = self._compiled.get(variables)
        if fn is None:
            index = {v: i for i, v in enumerate(variables)}
            fn = _compile(self, index)
            self._compiled[variables] = fn
        return fn


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))
        self._init(("c", self.value))

    def _key(self):
        return ("c", self.value)

    def _format(self):
        s = _format_number(self.value)
        return f"({s})" if self.value < 0 else s


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init(("v", name))

    def _key(self):
        return ("v", self.name)

    def _format(self):
        return self.name


class Unary(Expr):
    """Negation (``op == "neg"``) or one of the elementary functions."""

    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        if op != "neg" and op not in FUNCTIONS:
            raise ValueError(f"unknown unary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "arg", arg)
        self._init(("u", op, arg._hash))

    def _key(self):
        return ("u", self.op, self.arg)

    def children(self):
        return (self.arg,)

    def _format(self):
        if self.op == "neg":
            a = self.arg
            inner = str(a)
            if isinstance(a, (Binary, Unary)) and (not isinstance(a, Unary) or a.op == "neg"):
                inner = f"({inner})"
            elif isinstance(a, Const) and a.value < 0:
                pass
            return "-" + inner
        return f"{self.op}({self.arg})"


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


class Binary(Expr):
    """Binary arithmetic node. For ``^`` the right operand is always a ``Const``."""

    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        if op == "^" and not isinstance(right, Const):
            raise ValueError("exponent must be a constant")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        self._init(("b", op, left._hash, right._hash))

    def _key(self):
        return ("b", self.op, self.left, self.right)

    def children(self):
        return (self.left, self.right)

    @property
    def precedence(self):
        return _PREC[self.op]

    def _format(self):
        op, l, r = self.op, self.left, self.right
        if op == "^":
            base = str(l)
            if not (isinstance(l, Var) or (isinstance(l, Const) and l.value >= 0)
                    or (isinstance(l, Unary) and l.op != "neg")):
                base = f"({base})"
            return f"{base}^{_format_number(r.value)}"
        ls, rs = str(l), str(r)
        if op in "+-":
            if isinstance(r, Binary) and r.op in "+-":
                rs = f"({rs})"
            return f"{ls} {op} {rs}"
        if isinstance(l, Binary) and l.op in "+-":
            ls = f"({ls})"
        if isinstance(r, Binary) and r.op in "+-*/":
            rs = f"({rs})"
        return f"{ls}{op}{rs}"


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


ZERO = Const(0.0)
ONE = Const(1.0)


def _format_number(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite constant {v}")
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-zA-Z][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = set(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind == "eof":
            found = "end of input" if kind == "eof" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos)

    def fail(self, tok, what="expression"):
        kind, text, pos = tok
        found = "end of input" if kind == "eof" else repr(text)
        raise ParseError(f"expected {what}, found {found}", pos)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            node = Binary("^", node, Const(self.exponent()))
        return node

    def exponent(self) -> float:
        sign = 1.0
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            if self.take()[1] == "-":
                sign = -sign
        tok = self.take()
        if tok[0] != "num":
            self.fail(tok, "numeric exponent")
        return sign * float(tok[1])

    def base(self) -> Expr:
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text not in self.variables:
                raise UnknownIdentifierError(text, pos)
            return Var(text)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if text == "-" and kind == "op":
            return Unary("neg", self.factor())
        self.fail(tok)


def parse_expr(text: str, variables: Sequence[str]) -> Expr:
    """Parse ``text`` into an Expr over ``variables``.

    Raises ParseError (with character offset) on malformed input and
    UnknownIdentifierError for names not in ``variables``.
    """
    if not variables:
        raise ValueError("variable list must be nonempty")
    p = _Parser(text, variables)
    node = p.expr()
    if p.peek()[0] != "eof":
        p.fail(p.peek(), "operator or end of input")
    return node


# ---------------------------------------------------------------------------
# evaluation


def _singular(reason, node):
    raise SingularEvaluationError(reason, node)


def _elementwise(op: str, a, node):
    v = _real(a)
    if op == "log":
        if np.any(np.asarray(v) <= 0):
            _singular("log of non-positive value", node)
    elif op == "sqrt":
        bad = np.asarray(v) < 0 if not isinstance(a, DualScalar) else np.asarray(v) <= 0
        if np.any(bad):
            _singular("sqrt of negative value", node)
    if isinstance(a, DualScalar):
        try:
            return getattr(a, op)()
        except (OverflowError, ValueError):
            _singular(f"{op} out of range", node)
    if isinstance(a, np.ndarray):
        with np.errstate(all="ignore"):
            out = getattr(np, op)(a)
        if not np.all(np.isfinite(out)):
            _singular(f"{op} out of range", node)
        return out
    try:
        return getattr(math, op)(a)
    except (OverflowError, ValueError):
        _singular(f"{op} out of range", node)


def _divide(a, b, node):
    if np.any(np.asarray(_real(b)) == 0):
        _singular("division by zero", node)
    if isinstance(b, np.ndarray) or isinstance(a, np.ndarray):
        with np.errstate(all="ignore"):
            out = a / b
        if not np.all(np.isfinite(out)):
            _singular("overflow in division", node)
        return out
    return a / b


def _power(a, c: float, node):
    v = np.asarray(_real(a))
    integral = c == int(c)
    if not integral and np.any(v < 0):
        _singular("negative base with non-integer exponent", node)
    if c < 0 and np.any(v == 0):
        _singular("zero base with negative exponent", node)
    if isinstance(a, DualScalar) and c < 1 and c != 0 and np.any(v == 0):
        _singular("non-differentiable power at zero", node)
    if integral and not isinstance(a, DualScalar):
        c = int(c)
    try:
        if isinstance(a, np.ndarray):
            with np.errstate(all="ignore"):
                out = a ** c
            if not np.all(np.isfinite(out)):
                _singular("overflow in power", node)
            return out
        out = a ** c
    except (OverflowError, ZeroDivisionError):
        _singular("overflow in power", node)
    if not isinstance(out, DualScalar) and not math.isfinite(out):
        _singular("overflow in power", node)
    return out


def _compile(node: Expr, index: Mapping[str, int]):
    if isinstance(node, Const):
        c = node.value
        return lambda vals: c
    if isinstance(node, Var):
        if node.name not in index:
            raise KeyError(f"variable {node.name!r} not in evaluation context")
        i = index[node.name]
        return lambda vals: vals[i]
    if isinstance(node, Unary):
        f = _compile(node.arg, index)
        if node.op == "neg":
            return lambda vals: -f(vals)
        op = node.op
        return lambda vals: _elementwise(op, f(vals), node)
    f = _compile(node.left, index)
    op = node.op
    if op == "^":
        c = node.right.value
        return lambda vals: _power(f(vals), c, node)
    g = _compile(node.right, index)
    if op == "+":
        return lambda vals: f(vals) + g(vals)
    if op == "-":
        return lambda vals: f(vals) - g(vals)
    if op == "*":
        return lambda vals: f(vals) * g(vals)
    return lambda vals: _divide(f(vals), g(vals), node)


@dataclass(frozen=True)
class Point:
    """Coordinates together with the variable names they belong to."""

    coords: tuple[float, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.coords) != len(self.names):
            raise ValueError("point dimension does not match variable list")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.coords))


def _unpack(point) -> tuple[tuple[str, ...], list]:
    if isinstance(point, Point):
        return point.names, list(point.coords)
    if isinstance(point, Mapping):
        return tuple(point), list(point.values())
    raise TypeError("point must be a Point or a name->value mapping")


def evaluate(e: Expr, point) -> float:
    """Evaluate at a Point (or name->value mapping) in IEEE double precision."""
    names, vals = _unpack(point)
    try:
        out = e.compile(names)([float(v) for v in vals])
    except SingularEvaluationError as err:
        raise SingularEvaluationError(err.reason, err.subexpr, dict(zip(names, vals))) from None
    out = float(out)
    if not math.isfinite(out):
        raise SingularEvaluationError("non-finite result", e, dict(zip(names, vals)))
    return out


def evaluate_dual(e: Expr, point, direction) -> DualScalar:
    """Evaluate with dual inputs seeded along ``direction``.

    The derivative part is the directional derivative of ``e`` at the point.
    """
    names, vals = _unpack(point)
    if isinstance(direction, Mapping):
        direction = [direction.get(n, 0.0) for n in names]
    if len(direction) != len(vals):
        raise ValueError("direction length does not match point")
    duals = [DualScalar(float(v), float(d)) for v, d in zip(vals, direction)]
    try:
        out = e.compile(names)(duals)
    except SingularEvaluationError as err:
        raise SingularEvaluationError(err.reason, err.subexpr, dict(zip(names, vals))) from None
    if not isinstance(out, DualScalar):
        out = DualScalar(float(out), 0.0)
    if not (math.isfinite(out.value) and math.isfinite(out.derivative)):
        raise SingularEvaluationError("non-finite result", e, dict(zip(names, vals)))
    return out


# ---------------------------------------------------------------------------
# differentiation


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def s_add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("+", a, b)


def s_sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return s_neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("-", a, b)


def s_neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def s_mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return s_neg(b)
    if _is_const(b, -1.0):
        return s_neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("*", a, b)


def s_div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    return Binary("/", a, b)


def s_pow(a: Expr, c: float) -> Expr:
    if c == 0:
        return ONE
    if c == 1:
        return a
    return Binary("^", a, Const(c))


def diff(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if var not in e.free_variables():
        return ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = diff(u, var)
        if e.op == "neg":
            return s_neg(du)
        if e.op == "exp":
            return s_mul(e, du)
        if e.op == "log":
            return s_div(du, u)
        if e.op == "sin":
            return s_mul(Unary("cos", u), du)
        if e.op == "cos":
            return s_neg(s_mul(Unary("sin", u), du))
        return s_div(du, s_mul(Const(2.0), e))
    u, w = e.left, e.right
    if e.op == "^":
        c = w.value
        return s_mul(s_mul(Const(c), s_pow(u, c - 1)), diff(u, var))
    du, dw = diff(u, var), diff(w, var)
    if e.op == "+":
        return s_add(du, dw)
    if e.op == "-":
        return s_sub(du, dw)
    if e.op == "*":
        return s_add(s_mul(du, w), s_mul(u, dw))
    # (u/w)' = u'/w - u w'/w^2
    return s_sub(s_div(du, w), s_div(s_mul(u, dw), s_pow(w, 2.0)))


def gradient(e: Expr, variables: Sequence[str]) -> list[Expr]:
    return [diff(e, v) for v in variables]


# ---------------------------------------------------------------------------
# simplification
#
# Expressions are normalised into a sum of terms, each a float coefficient
# times a product of atoms raised to real powers. Atoms are variables,
# function applications and non-expandable sums. Like terms merge, so exact
# cancellations (as produced by Lie derivatives of first integrals) collapse
# to zero.

_MAX_EXPAND = 256


def _mono_mul(m1, m2):
    d = dict(m1)
    for atom, k in m2:
        s = d.get(atom, 0.0) + k
        if s == 0.0:
            d.pop(atom, None)
        else:
            d[atom] = s
    return tuple(sorted(d.items(), key=lambda t: str(t[0])))


def _poly_add(p, q, sign=1.0):
    out = dict(p)
    for m, c in q.items():
        s = out.get(m, 0.0) + sign * c
        if s == 0.0:
            out.pop(m, None)
        else:
            out[m] = s
    return out


def _poly_mul(p, q):
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            s = out.get(m, 0.0) + c1 * c2
            if s == 0.0:
                out.pop(m, None)
            else:
                out[m] = s
    return out


def _atom_poly(atom: Expr, k: float = 1.0):
    return {((atom, float(k)),): 1.0}


def _poly_pow(p, c: float, original: Expr):
    if not p:
        return {} if c > 0 else _atom_poly(original)
    if len(p) == 1:
        (m, coef), = p.items()
        integral = c == int(c)
        safe = integral or (coef > 0 and all(
            not (k == int(k) and int(k) % 2 == 0) for _, k in m))
        if safe:
            try:
                new_coef = coef ** c
            except (OverflowError, ZeroDivisionError):
                return _atom_poly(original)
            if isinstance(new_coef, complex) or not math.isfinite(new_coef):
                return _atom_poly(original)
            return {tuple((a, k * c) for a, k in m if k * c != 0.0): float(new_coef)}
    if c == int(c) and c > 0 and len(p) ** c <= _MAX_EXPAND:
        out = {(): 1.0}
        for _ in range(int(c)):
            out = _poly_mul(out, p)
        return out
    return _atom_poly(_from_poly(p), c)


def _to_poly(e: Expr):
    if isinstance(e, Const):
        return {(): e.value} if e.value != 0.0 else {}
    if isinstance(e, Var):
        return _atom_poly(e)
    if isinstance(e, Unary):
        if e.op == "neg":
            return {m: -c for m, c in _to_poly(e.arg).items()}
        if e.op == "sqrt":
            return _poly_pow(_to_poly(e.arg), 0.5, Unary("sqrt", simplify(e.arg)))
        arg = _from_poly(_to_poly(e.arg))
        node = Unary(e.op, arg)
        if isinstance(arg, Const):
            try:
                return _to_poly(Const(evaluate(node, {})))
            except SingularEvaluationError:
                pass
        return _atom_poly(node)
    op = e.op
    if op == "+":
        return _poly_add(_to_poly(e.left), _to_poly(e.right))
    if op == "-":
        return _poly_add(_to_poly(e.left), _to_poly(e.right), -1.0)
    if op == "*":
        p, q = _to_poly(e.left), _to_poly(e.right)
        if len(p) * len(q) > _MAX_EXPAND:
            return _poly_mul(_atom_poly(_from_poly(p)), _atom_poly(_from_poly(q)))
        return _poly_mul(p, q)
    if op == "/":
        p, q = _to_poly(e.left), _to_poly(e.right)
        if not q:
            return _atom_poly(Binary("/", _from_poly(p), ZERO))
        if len(q) == 1:
            (m, coef), = q.items()
            inv = {tuple((a, -k) for a, k in m): 1.0 / coef}
            return _poly_mul(p, inv)
        return _poly_mul(p, _atom_poly(_from_poly(q), -1.0))
    return _poly_pow(_to_poly(e.left), e.right.value, Binary("^", simplify(e.left), e.right))


def _factor_expr(atom: Expr, k: float) -> Expr:
    return atom if k == 1.0 else Binary("^", atom, Const(k))


def _term_expr(m, coef: float) -> tuple[Expr, bool]:
    """Build ``|coef| * m`` and report whether the term is negative."""
    num = [_factor_expr(a, k) for a, k in m if k > 0]
    den = [_factor_expr(a, -k) for a, k in m if k < 0]
    neg = coef < 0
    c = abs(coef)
    if c != 1.0 or not num:
        num.insert(0, Const(c))
    node = num[0]
    for f in num[1:]:
        node = Binary("*", node, f)
    if den:
        d = den[0]
        for f in den[1:]:
            d = Binary("*", d, f)
        node = Binary("/", node, d)
    return node, neg


def _from_poly(p) -> Expr:
    if not p:
        return ZERO
    terms = sorted(p.items(), key=lambda t: (len(t[0]) == 0, str(t[0])))
    node = None
    for m, coef in terms:
        t, neg = _term_expr(m, coef)
        if node is None:
            node = Unary("neg", t) if neg else t
        else:
            node = Binary("-" if neg else "+", node, t)
    return node


def simplify(e: Expr) -> Expr:
    """Best-effort simplification; the result evaluates equal to ``e`` where both are defined."""
    return _from_poly(_to_poly(e))


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def to_text(e: Expr) -> str:
    """Printable form accepted back by ``parse_expr``."""
    return str(e)
