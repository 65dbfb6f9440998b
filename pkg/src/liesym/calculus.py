"""
Vector calculus on expression tuples
------------------------------------

Scalar functions (symbolic or closure-backed), vector fields, Lie
derivatives and brackets, frame ranks and bivector component matrices.

Bracket convention: ``[X, Y]^i = X^j d_j Y^i - Y^j d_j X^i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .expr import (Const, Expr, ZERO, DualScalar, diff, is_zero, parse_expr, seed,
                   simplify, tangent, SingularEvaluationError, _real)
from .report import Report
from .sampling import Samples, evaluate_over

TAU_RANK = 1e-9
FD_STEP = 1e-5
EXACT = 1e-12
FD_PRECISION = 1e-6


def _as_values(p) -> list[float]:
    return [float(c) for c in p]


def _finite(x: float, what) -> float:
    if not math.isfinite(x):
        raise SingularEvaluationError("non-finite value", what)
    return x


class ScalarFn:
    """Scalar function on points: Expr-backed or closure-backed.

    Closure-backed functions come in two flavours. A scalar-generic ``fn``
    takes a list of coordinates that may be floats or (nested) DualScalars,
    so derivatives of any order are exact. An opaque ``value_fn`` only
    accepts floats; it may come with ``dual_fn(p, v) -> (value, derivative)``
    and otherwise falls back to central differences. ``precision`` is the
    expected relative accuracy of first derivatives.
    """

    def __init__(self, variables: Sequence[str], expr: Optional[Expr] = None,
                 fn: Optional[Callable] = None, value_fn: Optional[Callable] = None,
                 dual_fn: Optional[Callable] = None, label: str = "",
                 precision: Optional[float] = None):
        given = [expr is not None, fn is not None, value_fn is not None or dual_fn is not None]
        if sum(given) != 1:
            raise ValueError("give exactly one of expr, fn, or value_fn/dual_fn")
        self.variables = tuple(variables)
        self.expr = expr
        self.fn = fn
        self._value_fn = value_fn
        self._dual_fn = dual_fn
        self.label = label or (str(expr) if expr is not None else "<closure>")
        if precision is None:
            precision = FD_PRECISION if (value_fn is not None and dual_fn is None) else EXACT
        self.precision = precision

    @classmethod
    def parse(cls, text: str, variables: Sequence[str], label: str = "") -> "ScalarFn":
        return cls(variables, expr=parse_expr(text, variables), label=label)

    @classmethod
    def constant(cls, c: float, variables: Sequence[str]) -> "ScalarFn":
        return cls(variables, expr=Const(c))

    @property
    def symbolic(self) -> bool:
        return self.expr is not None

    @property
    def generic(self) -> bool:
        """True when the function accepts dual-number coordinates."""
        return self.expr is not None or self.fn is not None

    @property
    def dim(self) -> int:
        return len(self.variables)

    def __repr__(self):
        kind = "symbolic" if self.symbolic else "closure"
        return f"ScalarFn({self.label!r}, {kind})"

    def apply(self, values: Sequence):
        """Evaluate on a coordinate list of floats or DualScalars (generic functions only)."""
        if self.expr is not None:
            return self.expr.compile(self.variables)(values)
        if self.fn is not None:
            return self.fn(values)
        raise TypeError(f"{self.label} does not accept dual coordinates")

    def __call__(self, p) -> float:
        if self.generic:
            return _finite(float(self.apply(_as_values(p))), self.label)
        if self._value_fn is not None:
            return _finite(float(self._value_fn(np.asarray(p, dtype=float))), self.label)
        return self._dual_fn(np.asarray(p, dtype=float), np.zeros(len(p)))[0]

    def value_and_derivative(self, p, v) -> tuple[float, float]:
        """Value and directional derivative along ``v`` at ``p``."""
        if self.generic:
            out = self.apply(seed(_as_values(p), _as_values(v)))
            val, der = float(_real(out)), float(tangent(out))
            return _finite(val, self.label), _finite(der, self.label)
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if self._dual_fn is not None:
            val, der = self._dual_fn(p, v)
            return _finite(float(val), self.label), _finite(float(der), self.label)
        return self(p), self._central_difference(p, v)

    def derivative(self, p, v) -> float:
        return self.value_and_derivative(p, v)[1]

    def _central_difference(self, p: np.ndarray, v: np.ndarray) -> float:
        vn = float(np.linalg.norm(v))
        if vn == 0.0:
            return 0.0
        s = FD_STEP * max(1.0, float(np.linalg.norm(p))) / vn
        return (self(p + s * v) - self(p - s * v)) / (2.0 * s)

    def gradient(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        eye = np.eye(len(p))
        return np.array([self.derivative(p, eye[i]) for i in range(len(p))])

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.expr is not None:
            cols = [points[:, i] for i in range(points.shape[1])]
            out = self.expr.compile(self.variables)(cols)
            return np.broadcast_to(np.asarray(out, dtype=float), (len(points),)).copy()
        return np.array([self(p) for p in points])


class VectorField:
    """n-tuple of expressions over a variable list."""

    def __init__(self, components: Sequence[Union[Expr, str, float]],
                 variables: Sequence[str], label: str = ""):
        self.variables = tuple(variables)
        comps = []
        for c in components:
            if isinstance(c, str):
                c = parse_expr(c, self.variables)
            elif not isinstance(c, Expr):
                c = Const(float(c))
            comps.append(c)
        if len(comps) != len(self.variables):
            raise ValueError(
                f"field {label!r} has {len(comps)} components for dimension {len(self.variables)}")
        for c in comps:
            extra = c.free_variables() - set(self.variables)
            if extra:
                raise ValueError(f"unknown variables {sorted(extra)} in field {label!r}")
        self.components = tuple(comps)
        self.label = label
        self._jac: Optional[list[list[Expr]]] = None

    @property
    def dim(self) -> int:
        return len(self.variables)

    def __repr__(self):
        return f"VectorField({self.label!r}, [{', '.join(map(str, self.components))}])"

    def __str__(self):
        return "[" + ", ".join(map(str, self.components)) + "]"

    def __call__(self, p) -> np.ndarray:
        vals = _as_values(p)
        out = np.array([float(c.compile(self.variables)(vals)) for c in self.components])
        if not np.all(np.isfinite(out)):
            raise SingularEvaluationError("non-finite field value", self.components[0], p)
        return out

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cols = [points[:, i] for i in range(points.shape[1])]
        out = np.empty(points.shape)
        for k, c in enumerate(self.components):
            out[:, k] = np.broadcast_to(c.compile(self.variables)(cols), (len(points),))
        return out

    def apply(self, values: Sequence) -> list:
        """Components evaluated on a coordinate list of floats or DualScalars."""
        return [c.compile(self.variables)(values) for c in self.components]

    def dual(self, p, v) -> tuple[np.ndarray, np.ndarray]:
        """Component values and their directional derivatives along ``v``."""
        out = self.apply(seed(_as_values(p), _as_values(v)))
        return (np.array([float(_real(d)) for d in out]),
                np.array([float(tangent(d)) for d in out]))

    def jacobian_exprs(self) -> list[list[Expr]]:
        """``J[i][j] = d X^i / d x_j``."""
        if self._jac is None:
            self._jac = [[simplify(diff(c, v)) for v in self.variables] for c in self.components]
        return self._jac

    def jacobian(self, p) -> np.ndarray:
        vals = _as_values(p)
        return np.array([[float(e.compile(self.variables)(vals)) for e in row]
                         for row in self.jacobian_exprs()])

    @property
    def is_zero(self) -> bool:
        return all(is_zero(c) for c in self.components)

    def simplified(self) -> "VectorField":
        return VectorField([simplify(c) for c in self.components], self.variables, self.label)

    def scaled(self, f: Union[Expr, str, float], label: str = "") -> "VectorField":
        if isinstance(f, str):
            f = parse_expr(f, self.variables)
        elif not isinstance(f, Expr):
            f = Const(float(f))
        return VectorField([simplify(f * c) for c in self.components], self.variables, label)

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_same_space(self, other)
        return VectorField([simplify(a + b) for a, b in zip(self.components, other.components)],
                           self.variables)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _check_same_space(self, other)
        return VectorField([simplify(a - b) for a, b in zip(self.components, other.components)],
                           self.variables)


class PointwiseField:
    """A vector field known only through evaluation."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], variables: Sequence[str],
                 label: str = ""):
        self._fn = fn
        self.variables = tuple(variables)
        self.label = label

    @property
    def dim(self) -> int:
        return len(self.variables)

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(p, dtype=float)), dtype=float)


def zero_field(variables: Sequence[str], label: str = "0") -> VectorField:
    return VectorField([ZERO] * len(variables), variables, label)


def coordinate_field(variables: Sequence[str], i: int) -> VectorField:
    comps = [ZERO] * len(variables)
    comps[i] = Const(1.0)
    return VectorField(comps, variables, f"d_{variables[i]}")


def _check_same_space(a, b):
    if tuple(a.variables) != tuple(b.variables):
        raise ValueError(f"variable lists differ: {a.variables} vs {b.variables}")


def lie_derivative(X: VectorField, F: ScalarFn) -> ScalarFn:
    """``L_X F = X^i dF/dx_i``, symbolic whenever ``F`` and ``X`` are."""
    _check_same_space(X, F)
    if F.symbolic and isinstance(X, VectorField):
        terms = ZERO
        for c, v in zip(X.components, X.variables):
            if not is_zero(c):
                terms = terms + c * diff(F.expr, v)
        return ScalarFn(F.variables, expr=simplify(terms), label=f"L[{X.label}]({F.label})")
    label = f"L[{X.label}]({F.label})"
    if F.generic and isinstance(X, VectorField):
        def fn(values):
            return tangent(F.apply(seed(values, X.apply(values))))

        return ScalarFn(F.variables, fn=fn, label=label)
    return ScalarFn(F.variables, value_fn=lambda p: F.derivative(p, X(p)), label=label,
                    precision=max(F.precision, FD_PRECISION))


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Jacobi-Lie bracket ``[X, Y] = X(Y) - Y(X)`` with simplified components."""
    _check_same_space(X, Y)
    comps = []
    for i in range(X.dim):
        acc = ZERO
        for j, v in enumerate(X.variables):
            if not is_zero(X.components[j]):
                acc = acc + X.components[j] * diff(Y.components[i], v)
            if not is_zero(Y.components[j]):
                acc = acc - Y.components[j] * diff(X.components[i], v)
        comps.append(simplify(acc))
    return VectorField(comps, X.variables, f"[{X.label},{Y.label}]")


@dataclass
class FrameSample:
    point: np.ndarray
    matrix: np.ndarray
    singular_values: np.ndarray

    @property
    def rank(self) -> int:
        return numerical_rank(self.singular_values)

    @property
    def condition(self) -> float:
        s = self.singular_values
        if len(s) == 0 or s[0] == 0.0:
            return 0.0
        return float(s[-1] / s[0])


def numerical_rank(singular_values: np.ndarray, tau: float = TAU_RANK) -> int:
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tau * s[0]))


def frame_matrix(fields: Sequence, p) -> np.ndarray:
    """n x p matrix whose column j is ``fields[j](p)``."""
    return np.column_stack([f(p) for f in fields])


def frame_sample(fields: Sequence, p) -> FrameSample:
    m = frame_matrix(fields, p)
    s = np.linalg.svd(m, compute_uv=False)
    return FrameSample(np.asarray(p, dtype=float), m, s)


def independence_rank(fields: Sequence[VectorField], samples: Samples,
                      tau: float = TAU_RANK) -> Report:
    """Pointwise rank of the frame; passes when it is ``len(fields)`` at every sample."""
    if not fields:
        raise ValueError("at least one field required")
    pts, frames, rejected = evaluate_over(samples, lambda p: frame_sample(fields, p))
    if not frames:
        raise ValueError("no evaluable samples")
    ranks = [numerical_rank(f.singular_values, tau) for f in frames]
    conds = [f.condition for f in frames]
    k = len(fields)
    deficiency = [float(k - r) for r in ranks]
    iworst = min(range(len(conds)), key=lambda i: (conds[i], i))
    return Report(
        name="independence",
        passed=min(ranks) == k,
        max_residual=max(deficiency),
        mean_residual=sum(deficiency) / len(deficiency),
        max_scaled=max(deficiency),
        tolerance=0.0,
        argmax_point=tuple(float(c) for c in pts[iworst]),
        n_samples=len(frames),
        rejected=rejected,
        details={"min_rank": min(ranks), "max_rank": max(ranks), "expected_rank": k,
                 "worst_condition": conds[iworst]},
    )


def gauss_solve(A: list[list], b: list) -> list:
    """Solve a small square system by Gaussian elimination with partial pivoting.

    Works over any scalars supporting arithmetic (floats or DualScalars);
    pivots are chosen on the real parts.
    """
    n = len(b)
    M = [list(row) + [bi] for row, bi in zip(A, b)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(float(_real(M[r][col]))))
        if float(_real(M[piv][col])) == 0.0:
            raise np.linalg.LinAlgError("singular system")
        M[col], M[piv] = M[piv], M[col]
        for r in range(col + 1, n):
            factor = M[r][col] / M[col][col]
            for c in range(col, n + 1):
                M[r][c] = M[r][c] - factor * M[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = M[r][n]
        for c in range(r + 1, n):
            acc = acc - M[r][c] * x[c]
        x[r] = acc / M[r][r]
    return x


def wedge(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Antisymmetric matrix of ``u ^ w``: entries ``u^i w^j - u^j w^i``."""
    n = len(u)
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            m[i, j] = u[i] * w[j] - u[j] * w[i]
            m[j, i] = -m[i, j]
    return m


def bivector_components(X1: VectorField, X2: VectorField, p) -> np.ndarray:
    """Component matrix of ``X1 ^ X2`` at ``p``."""
    _check_same_space(X1, X2)
    return wedge(X1(p), X2(p))
