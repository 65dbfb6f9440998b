"""
Rank-two Poisson structures from a pair of vector fields
--------------------------------------------------------

For independent ``X1, X2`` whose bracket closes on the pair, the bivector
``Pi = X1 ^ X2`` is Poisson with bracket

    {F, G} = (L_X1 F)(L_X2 G) - (L_X2 F)(L_X1 G)

and Hamiltonian fields ``X_F = (L_X2 F) X1 - (L_X1 F) X2``. With this sign,
``X_F(G) = {G, F}`` and ``X_F = Pi . dF`` (matrix times gradient).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from .calculus import (TAU_RANK, PointwiseField, ScalarFn, VectorField, independence_rank,
                       lie_bracket, lie_derivative, numerical_rank, wedge, _check_same_space)
from .expr import simplify
from .report import Report, aggregate
from .sampling import Box, Samples, evaluate_over, sample_points
from .symmetry import (TAU_DECOMP, TAU_FI, DecompositionError, FrameDegenerateError,
                       PreconditionError, extract_structure_functions)

TAU_JACOBI = 1e-6
TAU_POISSON_FIELD = 1e-8
TAU_HAMILTONIAN = 1e-9
TAU_TANGENT = 1e-9
TAU_PATH = 1e-6
SIMPSON_NODES = 256


class IndependenceError(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ClosureError(ValueError):
    """``[X1, X2]`` is not in span{X1, X2}: the trivector ``X1^X2^[X1,X2]`` is nonzero."""

    def __init__(self, message, point=None, trivector_norm=float("nan")):
        super().__init__(message)
        self.point = point
        self.trivector_norm = trivector_norm


class DegenerateBivectorError(ValueError):
    pass


class PathDependenceError(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class PoissonPair:
    """Ordered pair ``(X1, X2)`` standing for ``Pi = X1 ^ X2``.

    Only pairs built by ``make_poisson_pair`` are ``validated``;
    ``raw_bivector`` skips the checks so failure modes can be probed.
    """

    X1: VectorField
    X2: VectorField
    domain: Optional[Box] = None
    independence: Optional[Report] = None
    closure: Optional[Report] = None
    validated: bool = False

    @property
    def variables(self):
        return self.X1.variables

    @property
    def dim(self) -> int:
        return self.X1.dim

    def matrix(self, p) -> np.ndarray:
        return wedge(self.X1(p), self.X2(p))


def raw_bivector(X1: VectorField, X2: VectorField) -> PoissonPair:
    _check_same_space(X1, X2)
    return PoissonPair(X1, X2)


def _require_valid(pair: PoissonPair):
    if not pair.validated:
        raise PreconditionError("operation needs a validated PoissonPair (see make_poisson_pair)")


def trivector_norm(X1: VectorField, X2: VectorField, B: VectorField, p) -> float:
    """Euclidean norm of the components of ``X1 ^ X2 ^ B`` at ``p``."""
    M = np.column_stack([X1(p), X2(p), B(p)])
    n = M.shape[0]
    if n < 3:
        return 0.0
    dets = [np.linalg.det(M[list(rows), :]) for rows in itertools.combinations(range(n), 3)]
    return float(np.sqrt(np.sum(np.square(dets))))


def make_poisson_pair(X1: VectorField, X2: VectorField, domain: Optional[Box],
                      samples: Samples) -> PoissonPair:
    """Validate independence and bracket closure, returning a usable pair."""
    _check_same_space(X1, X2)
    n1, n2 = X1.label or "X1", X2.label or "X2"
    rep = independence_rank([X1, X2], samples)
    if not rep.passed:
        raise IndependenceError(
            f"{n1}, {n2} not independent (min rank {rep.details['min_rank']} "
            f"at {rep.argmax_point})", rep)
    try:
        sc = extract_structure_functions([X1, X2], 0, 1, samples, fit=False)
    except FrameDegenerateError as err:
        raise IndependenceError(str(err)) from err
    except DecompositionError as err:
        B = lie_bracket(X1, X2)
        q = err.point
        norm = trivector_norm(X1, X2, B, q) if q is not None else float("nan")
        raise ClosureError(
            f"[{n1},{n2}] escapes span{{{n1},{n2}}}: "
            f"trivector norm {norm:.3e} at {tuple(float(c) for c in q)}", point=q, trivector_norm=norm) from err
    B = lie_bracket(X1, X2)
    pts, tri, _ = evaluate_over(samples, lambda q: trivector_norm(X1, X2, B, q))
    sc.report.details["max_trivector_norm"] = max(tri) if tri else 0.0
    return PoissonPair(X1, X2, domain, rep, sc.report, validated=True)


def bivector_at(pair: PoissonPair, p) -> np.ndarray:
    return pair.matrix(p)


# ---------------------------------------------------------------------------
# bracket and Hamiltonian fields


def poisson_bracket(pair: PoissonPair, F: ScalarFn, G: ScalarFn) -> ScalarFn:
    """``{F, G} = (L_X1 F)(L_X2 G) - (L_X2 F)(L_X1 G)``."""
    a1, a2 = lie_derivative(pair.X1, F), lie_derivative(pair.X2, F)
    b1, b2 = lie_derivative(pair.X1, G), lie_derivative(pair.X2, G)
    label = f"{{{F.label},{G.label}}}"
    if all(f.symbolic for f in (a1, a2, b1, b2)):
        return ScalarFn(F.variables, expr=simplify(a1.expr * b2.expr - a2.expr * b1.expr),
                        label=label)
    if all(f.generic for f in (a1, a2, b1, b2)):
        return ScalarFn(F.variables, fn=lambda v: a1.apply(v) * b2.apply(v) - a2.apply(v) * b1.apply(v),
                        label=label)
    return ScalarFn(F.variables, value_fn=lambda p: a1(p) * b2(p) - a2(p) * b1(p), label=label,
                    precision=max(f.precision for f in (a1, a2, b1, b2)))


def bracket_by_contraction(pair: PoissonPair, F: ScalarFn, G: ScalarFn, p) -> float:
    """``<dF ^ dG, Pi>`` from the component matrix; an independent route to the bracket."""
    return float(F.gradient(p) @ pair.matrix(p) @ G.gradient(p))


def hamiltonian_vector_field(pair: PoissonPair, H: ScalarFn):
    """``X_H = (L_X2 H) X1 - (L_X1 H) X2``; a VectorField when ``H`` is symbolic."""
    a1, a2 = lie_derivative(pair.X1, H), lie_derivative(pair.X2, H)
    if a1.symbolic and a2.symbolic:
        comps = [simplify(a2.expr * c1 - a1.expr * c2)
                 for c1, c2 in zip(pair.X1.components, pair.X2.components)]
        return VectorField(comps, pair.variables, f"X[{H.label}]")

    def fn(p):
        return a2(p) * pair.X1(p) - a1(p) * pair.X2(p)

    return PointwiseField(fn, pair.variables, f"X[{H.label}]")


def _fi_scale(C: ScalarFn, Y, p, val):
    return 1.0 + abs(val) + np.linalg.norm(C.gradient(p)) * np.linalg.norm(Y(p))


def is_casimir(pair: PoissonPair, C: ScalarFn, samples: Samples, tol: float = TAU_FI) -> Report:
    """``C`` is Casimir iff ``L_X1 C = L_X2 C = 0``."""

    def residual(p):
        val, d1 = C.value_and_derivative(p, pair.X1(p))
        _, d2 = C.value_and_derivative(p, pair.X2(p))
        raw = max(abs(d1), abs(d2))
        scaled = max(abs(d1) / _fi_scale(C, pair.X1, p, val), abs(d2) / _fi_scale(C, pair.X2, p, val))
        return raw, scaled

    pts, vals, rejected = evaluate_over(samples, residual)
    return aggregate(f"casimir[{C.label}]", [v[0] for v in vals], [v[1] for v in vals],
                     pts, tol, rejected)


def poisson_rank(pair: PoissonPair, p, tau: float = TAU_RANK) -> int:
    s = np.linalg.svd(pair.matrix(p), compute_uv=False)
    return numerical_rank(s, tau)


def _span_residual(basis: np.ndarray, v: np.ndarray) -> float:
    """Relative distance from ``v`` to the column span of ``basis``."""
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    if basis.size == 0:
        return 1.0
    c, *_ = np.linalg.lstsq(basis, v, rcond=None)
    return float(np.linalg.norm(v - basis @ c) / nv)


def leaf_tangency_check(pair: PoissonPair, p, probes: Sequence = (),
                        tol: float = TAU_TANGENT) -> Report:
    """Compare the image of ``Pi`` at ``p`` with span{X1(p), X2(p)}, both ways.

    ``probes`` are extra vectors tested for membership in the tangent
    plane; their residuals are reported in ``details`` only.
    """
    P = pair.matrix(p)
    U, s, _ = np.linalg.svd(P)
    r = numerical_rank(s)
    image = U[:, :r]
    frame = np.column_stack([pair.X1(p), pair.X2(p)])
    res = [_span_residual(frame, image[:, k]) for k in range(r)]
    res += [_span_residual(image, frame[:, k]) for k in range(2)]
    worst = max(res) if res else 0.0
    probe_res = [_span_residual(frame, np.asarray(v, dtype=float)) for v in probes]
    return Report("leaf_tangency", worst <= tol, max_residual=worst, mean_residual=float(np.mean(res)),
                  max_scaled=worst, tolerance=tol, argmax_point=tuple(float(c) for c in p),
                  n_samples=1,
                  details={"image_rank": r, "probe_residuals": probe_res,
                           "probes_tangent": [q <= tol for q in probe_res]})


def jacobi_defect(pair: PoissonPair, F: ScalarFn, G: ScalarFn, H: ScalarFn,
                  samples: Samples, tol: float = TAU_JACOBI) -> Report:
    """Jacobiator ``{F,{G,H}} + {G,{H,F}} + {H,{F,G}}`` over the samples.

    Accepts raw (unvalidated) pairs so non-Poisson bivectors can be probed.
    """
    terms = [poisson_bracket(pair, F, poisson_bracket(pair, G, H)),
             poisson_bracket(pair, G, poisson_bracket(pair, H, F)),
             poisson_bracket(pair, H, poisson_bracket(pair, F, G))]
    symbolic_total = None
    if all(t.symbolic for t in terms):
        symbolic_total = simplify(terms[0].expr + terms[1].expr + terms[2].expr)

    def residual(p):
        vals = [t(p) for t in terms]
        total = symbolic_total.compile(pair.variables)([float(c) for c in p]) \
            if symbolic_total is not None else sum(vals)
        total = abs(float(total))
        return total, total / (1.0 + sum(abs(v) for v in vals))

    pts, vals, rejected = evaluate_over(samples, residual)
    details = {}
    if symbolic_total is not None:
        details["symbolic"] = str(symbolic_total)
    return aggregate("jacobi", [v[0] for v in vals], [v[1] for v in vals], pts, tol, rejected,
                     **details)


# ---------------------------------------------------------------------------
# Poisson and Hamiltonian vector fields


def poisson_defect(pair: PoissonPair, X: VectorField):
    """Callable returning the bivector ``[X,X1]^X2 + X1^[X,X2]`` (that is, ``L_X Pi``) at a point."""
    B1, B2 = lie_bracket(X, pair.X1), lie_bracket(X, pair.X2)

    def at(p):
        return wedge(B1(p), pair.X2(p)) + wedge(pair.X1(p), B2(p))

    return at, (B1, B2)


def is_poisson_vector_field(pair: PoissonPair, X: VectorField, samples: Samples,
                            tol: float = TAU_POISSON_FIELD) -> Report:
    """``L_X Pi = 0`` componentwise, scaled by ``1 + |Pi|``."""
    _require_valid(pair)
    _check_same_space(pair.X1, X)
    at, (B1, B2) = poisson_defect(pair, X)

    def residual(p):
        d = float(np.max(np.abs(at(p))))
        return d, d / (1.0 + np.linalg.norm(pair.matrix(p)))

    pts, vals, rejected = evaluate_over(samples, residual)
    return aggregate(f"poisson_vector_field[{X.label}]", [v[0] for v in vals],
                     [v[1] for v in vals], pts, tol, rejected,
                     symbolic_zero=B1.is_zero and B2.is_zero)


def hamiltonian_realization_check(pair: PoissonPair, X, H: ScalarFn, samples: Samples,
                                  tol: float = TAU_HAMILTONIAN) -> Report:
    """``X = X_H`` at every sample; on success also reports ``|L_X H|``."""
    _require_valid(pair)
    XH = hamiltonian_vector_field(pair, H)

    def residual(p):
        xp = X(p)
        d = float(np.linalg.norm(xp - XH(p)))
        return d, d / (1.0 + np.linalg.norm(xp))

    pts, vals, rejected = evaluate_over(samples, residual)
    rep = aggregate(f"hamiltonian[{H.label}]", [v[0] for v in vals], [v[1] for v in vals],
                    pts, tol, rejected)
    if rep.passed:
        _, lx, _ = evaluate_over(pts, lambda p: abs(H.derivative(p, X(p))))
        rep.details["lie_derivative_of_H"] = max(lx) if lx else 0.0
    return rep


# ---------------------------------------------------------------------------
# two dimensions


def _eval_nodes(F, pts: np.ndarray) -> np.ndarray:
    if hasattr(F, "eval_many"):
        return np.asarray(F.eval_many(pts), dtype=float)
    return np.array([F(q) for q in pts], dtype=float)


def _gradients_from_field(pair: PoissonPair, X, pts: np.ndarray) -> np.ndarray:
    """Solve ``X = a X1 + b X2`` then recover ``grad H`` from ``a = L_X2 H``, ``b = -L_X1 H``.

    Vectorized over rows of ``pts``.
    """
    x1, x2, xv = (_eval_nodes(F, pts) for F in (pair.X1, pair.X2, X))
    ab = np.linalg.solve(np.stack([x1, x2], axis=2), xv[..., None])[..., 0]
    rhs = np.stack([ab[:, 0], -ab[:, 1]], axis=1)
    return np.linalg.solve(np.stack([x2, x1], axis=1), rhs[..., None])[..., 0]


def _segment_integral(pair, X, start, end, nodes=SIMPSON_NODES) -> float:
    start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    delta = end - start
    if not np.any(delta):
        return 0.0
    t = np.linspace(0.0, 1.0, nodes + 1)
    grads = _gradients_from_field(pair, X, start + t[:, None] * delta)
    return float(simpson(grads @ delta, x=t))


def _path_value(pair, X, base, q, x_first: bool, nodes: int = SIMPSON_NODES) -> float:
    corner = np.array([q[0], base[1]]) if x_first else np.array([base[0], q[1]])
    return _segment_integral(pair, X, base, corner, nodes) + _segment_integral(pair, X, corner, q, nodes)


@dataclass
class Reconstruction:
    H: ScalarFn
    path_report: Report
    realization: Report


def reconstruct_hamiltonian_2d(pair: PoissonPair, X: VectorField, basepoint,
                               samples: Samples, tol: float = TAU_PATH,
                               realization_tol: float = 1e-5,
                               nodes: int = SIMPSON_NODES) -> Reconstruction:
    """Build ``H`` with ``X = X_H`` by integrating ``dH`` along axis-aligned paths.

    ``H(basepoint) = 0``. Path independence is checked at the samples by
    comparing the x-first and y-first routes. Each segment uses composite
    Simpson with ``nodes`` intervals.
    """
    _require_valid(pair)
    if pair.dim != 2:
        raise PreconditionError("reconstruction is two-dimensional only")
    pts = sample_points(samples)
    ranks = [poisson_rank(pair, q) for q in pts]
    if min(ranks) < 2:
        raise PreconditionError(f"Poisson rank {min(ranks)} < 2 on the samples")
    pvf = is_poisson_vector_field(pair, X, samples)
    if not pvf.passed:
        raise PreconditionError(f"{X.label} is not a Poisson vector field: {pvf.summary()}")
    base = np.asarray(basepoint, dtype=float)

    def value(q):
        return _path_value(pair, X, base, q, True, nodes)

    def dual_fn(q, v):
        return value(q), float(_gradients_from_field(pair, X, np.atleast_2d(q))[0] @ v)

    H = ScalarFn(pair.variables, dual_fn=dual_fn, label="H_reconstructed")

    def residual(q):
        ha = value(q)
        hb = _path_value(pair, X, base, q, False, nodes)
        return abs(ha - hb), abs(ha - hb) / (1.0 + abs(ha))

    used, vals, rejected = evaluate_over(samples, residual)
    path_rep = aggregate("path_independence", [v[0] for v in vals], [v[1] for v in vals],
                         used, tol, rejected)
    if not path_rep.passed:
        raise PathDependenceError(f"dH is not exact on the box: {path_rep.summary()}", path_rep)
    real = hamiltonian_realization_check(pair, X, H, samples, realization_tol)
    return Reconstruction(H, path_rep, real)


@dataclass
class SymplecticCoefficient:
    """``omega = coefficient * dx ^ dy`` at a point, with the contraction check residual."""

    coefficient: float
    contraction_residual: float


def symplectic_form_2d(pair: PoissonPair, p, probe: Optional[ScalarFn] = None,
                       tol: float = TAU_HAMILTONIAN) -> SymplecticCoefficient:
    """Coefficient of the symplectic form inverse to ``Pi`` in two dimensions.

    With ``X_H = Pi . dH`` the form satisfying ``i_{X_H} omega = dH`` is
    ``omega = (1 / Pi^12) dx ^ dy``. The identity is checked at ``p`` for a
    probe Hamiltonian (default ``x*y + x``).
    """
    if pair.dim != 2:
        raise PreconditionError("symplectic form is two-dimensional only")
    P = pair.matrix(p)
    pi12 = P[0, 1]
    if abs(pi12) <= TAU_RANK:
        raise DegenerateBivectorError(f"Pi^12 = {pi12:.3e} vanishes at {tuple(p)}")
    omega = float(1.0 / pi12)
    if probe is None:
        x, y = pair.variables
        probe = ScalarFn.parse(f"{x}*{y} + {x}", pair.variables)
    XH = hamiltonian_vector_field(pair, probe)(p)
    contraction = omega * np.array([-XH[1], XH[0]])
    dH = probe.gradient(p)
    res = float(np.linalg.norm(contraction - dH) / (1.0 + np.linalg.norm(dH)))
    if res > tol:
        raise AssertionError(f"contraction identity fails at {tuple(p)}: residual {res:.3e}")
    return SymplecticCoefficient(omega, res)
