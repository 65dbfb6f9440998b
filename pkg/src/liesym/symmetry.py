"""
First integrals from infinitesimal symmetries
---------------------------------------------

Given ``X`` and a frame of symmetries ``X_1..X_p`` (``[X, X_k] = 0``) whose
brackets close on the frame, ``[X_i, X_j] = sum_k F_ij^k X_k``, every
structure function ``F_ij^k`` and every ``L_{X_l} F_ij^k`` is a first
integral of ``X``. This module extracts the structure functions pointwise,
emits the candidates and verifies them numerically.

Indices in the Python API are 0-based; provenance tags use the 1-based
mathematical notation (``F_12^1`` is ``i=0, j=1, k=0``).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .calculus import (TAU_RANK, ScalarFn, VectorField, frame_sample, gauss_solve,
                       independence_rank, lie_bracket, lie_derivative, numerical_rank)
from .expr import Const, Expr, Var, ZERO, simplify
from .report import Report, aggregate
from .sampling import Samples, evaluate_over, sample_points

TAU_DECOMP = 1e-8
TAU_FI = 1e-7
TAU_COMMUTE = 1e-9
FIT_TOL = 1e-9
TRIVIAL_TOL = 1e-10


class PreconditionError(ValueError):
    pass


class FrameDegenerateError(ValueError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DecompositionError(ValueError):
    """The bracket of two frame fields leaves the span of the frame."""

    def __init__(self, message, point=None, residual=float("nan"), report=None):
        super().__init__(message)
        self.point = point
        self.residual = residual
        self.report = report


def check_commutes(X: VectorField, Y: VectorField, samples: Samples,
                   tol: float = TAU_COMMUTE) -> Report:
    """Check ``[X, Y] = 0`` at the samples, relative to ``|X||Y| + 1``."""
    B = lie_bracket(X, Y)

    def residual(p):
        b = np.linalg.norm(B(p))
        return b, b / (np.linalg.norm(X(p)) * np.linalg.norm(Y(p)) + 1.0)

    pts, vals, rejected = evaluate_over(samples, residual)
    return aggregate(f"commutes[{X.label},{Y.label}]", [v[0] for v in vals],
                     [v[1] for v in vals], pts, tol, rejected,
                     symbolic_zero=B.is_zero, bracket=[str(c) for c in B.components])


# ---------------------------------------------------------------------------
# structure functions


class _FrameSolver:
    """Pointwise decomposition of a bracket in a frame.

    ``coefficients`` is scalar-generic: with dual-number coordinates the
    derivatives propagate through the solve exactly.
    """

    def __init__(self, frame: Sequence[VectorField], bracket: VectorField):
        self.frame = list(frame)
        self.bracket = bracket

    def solve(self, p) -> tuple[np.ndarray, float, float]:
        """Least-squares coefficients, residual norm and bracket norm at ``p``."""
        A = np.column_stack([X(p) for X in self.frame])
        b = self.bracket(p)
        f, *_ = np.linalg.lstsq(A, b, rcond=None)
        return f, float(np.linalg.norm(b - A @ f)), float(np.linalg.norm(b))

    def coefficients(self, values: Sequence) -> list:
        if all(isinstance(v, float) for v in values):
            return list(self.solve(values)[0])
        cols = [X.apply(values) for X in self.frame]
        b = self.bracket.apply(values)
        n, p = len(b), len(cols)
        if p == n:
            return gauss_solve([[cols[k][i] for k in range(p)] for i in range(n)], b)
        # normal equations for the over-determined case
        G = [[sum(cols[k][i] * cols[l][i] for i in range(n)) for l in range(p)] for k in range(p)]
        rhs = [sum(cols[k][i] * b[i] for i in range(n)) for k in range(p)]
        return gauss_solve(G, rhs)


@dataclass
class StructureCoeffs:
    """Coefficients of ``[X_i, X_j]`` in the frame, ``F_ij^k`` for every ``k``."""

    i: int
    j: int
    coeffs: list[ScalarFn]
    closures: list[ScalarFn]
    bracket: Optional[VectorField]
    report: Report

    def __call__(self, p) -> np.ndarray:
        return np.array([c(p) for c in self.closures])

    @property
    def fitted(self) -> list[bool]:
        return [c.symbolic for c in self.coeffs]


def _coefficient_fn(solver: _FrameSolver, k: int, variables, label):
    return ScalarFn(variables, fn=lambda values: solver.coefficients(values)[k], label=label)


def _monomial_exponents(n: int, lo: int = -3, hi: int = 3):
    return list(itertools.product(range(lo, hi + 1), repeat=n))


def fit_monomials(values: np.ndarray, points: np.ndarray, variables: Sequence[str],
                  max_terms: int = 3, tol: float = FIT_TOL) -> Optional[Expr]:
    """Try to express sampled values as a short sum of monomials ``x^a y^b ...``.

    Exponents range over -3..3. Greedy orthogonal matching pursuit, then
    coefficients are snapped to nearby small rationals. Returns None when
    no fit reproduces every sample within ``tol`` (relative).
    """
    values = np.asarray(values, dtype=float)
    scale = 1.0 + np.abs(values)
    if np.all(np.abs(values) <= tol * scale):
        return ZERO
    n = len(variables)
    if n > 4 or len(values) < 2 * max_terms + 2:
        return None
    exps = _monomial_exponents(n)
    with np.errstate(all="ignore"):
        cols = np.column_stack([np.prod(points ** np.array(e, dtype=float), axis=1) for e in exps])
    ok = np.all(np.isfinite(cols), axis=0)
    cols, exps = cols[:, ok], [e for e, good in zip(exps, ok) if good]
    W = cols / scale[:, None]
    yw = values / scale
    norms = np.linalg.norm(W, axis=0)
    norms[norms == 0] = 1.0
    chosen: list[int] = []
    r = yw.copy()
    for _ in range(max_terms):
        corr = np.abs(W.T @ r) / norms
        corr[chosen] = -1.0
        chosen.append(int(np.argmax(corr)))
        c, *_ = np.linalg.lstsq(W[:, chosen], yw, rcond=None)
        r = yw - W[:, chosen] @ c
        snapped = []
        for ck in c:
            fr = Fraction(float(ck)).limit_denominator(1000)
            snapped.append(float(fr) if abs(float(fr) - ck) <= 1e-7 * max(1.0, abs(ck)) else float(ck))
        fitted = cols[:, chosen] @ np.array(snapped)
        if np.all(np.abs(fitted - values) <= tol * scale):
            expr = ZERO
            for ck, idx in zip(snapped, chosen):
                term: Expr = Const(ck)
                for v, a in zip(variables, exps[idx]):
                    if a != 0:
                        term = term * Var(v) ** a
                expr = expr + term
            return simplify(expr)
    return None


def extract_structure_functions(frame: Sequence[VectorField], i: int, j: int,
                                samples: Samples, tol: float = TAU_DECOMP,
                                fit: bool = True) -> StructureCoeffs:
    """Decompose ``[X_i, X_j]`` in the frame at every query point.

    Coefficients are closure-backed (pointwise least squares, exact when
    ``p == n``) with derivatives propagated through the solve. When ``fit``
    is set, each coefficient is promoted to an expression if a monomial fit
    matches the closure on the samples.
    """
    frame = list(frame)
    p = len(frame)
    if p == 0:
        raise PreconditionError("empty frame")
    n = frame[0].dim
    variables = frame[0].variables
    if p > n:
        raise FrameDegenerateError(f"{p} fields cannot be independent in dimension {n}")
    if not (0 <= i < p and 0 <= j < p):
        raise IndexError("frame index out of range")
    if i > j:
        sc = extract_structure_functions(frame, j, i, samples, tol, fit)
        coeffs = [_negated(c, f"F_{i + 1}{j + 1}^{k + 1}") for k, c in enumerate(sc.coeffs)]
        closures = [_negated(c, f"F_{i + 1}{j + 1}^{k + 1}") for k, c in enumerate(sc.closures)]
        return StructureCoeffs(i, j, coeffs, closures, None, sc.report)
    if i == j:
        zeros = [ScalarFn(variables, expr=ZERO, label=f"F_{i + 1}{i + 1}^{k + 1}") for k in range(p)]
        rep = Report(f"decomposition[{i + 1},{j + 1}]", True, tolerance=tol,
                     n_samples=len(sample_points(samples)))
        return StructureCoeffs(i, j, zeros, zeros, None, rep)

    bracket = lie_bracket(frame[i], frame[j])
    solver = _FrameSolver(frame, bracket)

    def probe(q):
        fs = frame_sample(frame, q)
        f, res, bn = solver.solve(q)
        return fs.rank, f, res, bn

    pts, vals, rejected = evaluate_over(samples, probe)
    if not vals:
        raise FrameDegenerateError("no evaluable samples")
    for q, (rank, *_rest) in zip(pts, vals):
        if rank < p:
            raise FrameDegenerateError(f"frame rank {rank} < {p}", point=tuple(q))
    raw = [v[2] for v in vals]
    scaled = [v[2] / (1.0 + v[3]) for v in vals]
    report = aggregate(f"decomposition[{i + 1},{j + 1}]", raw, scaled, pts, tol, rejected,
                       bracket=[str(c) for c in bracket.components])
    if not report.passed:
        raise DecompositionError(
            f"[X{i + 1},X{j + 1}] leaves the span of the frame "
            f"(residual {report.max_scaled:.3e} at {report.argmax_point})",
            point=report.argmax_point, residual=report.max_scaled, report=report)

    closures = [_coefficient_fn(solver, k, variables, f"F_{i + 1}{j + 1}^{k + 1}")
                for k in range(p)]
    coeffs = list(closures)
    if fit:
        P = np.array(pts)
        F = np.array([v[1] for v in vals])
        for k in range(p):
            expr = fit_monomials(F[:, k], P, variables)
            if expr is not None:
                coeffs[k] = ScalarFn(variables, expr=expr, label=f"F_{i + 1}{j + 1}^{k + 1}")
    report.details["fitted"] = [c.symbolic for c in coeffs]
    report.details["coefficients"] = [str(c.expr) if c.symbolic else None for c in coeffs]
    return StructureCoeffs(i, j, coeffs, closures, bracket, report)


def _negated(fn: ScalarFn, label: str) -> ScalarFn:
    if fn.symbolic:
        return ScalarFn(fn.variables, expr=simplify(-fn.expr), label=label)

    if fn.generic:
        return ScalarFn(fn.variables, fn=lambda values: -fn.apply(values), label=label)

    def dual_fn(p, v):
        val, der = fn.value_and_derivative(p, v)
        return -val, -der

    return ScalarFn(fn.variables, dual_fn=dual_fn, label=label, precision=fn.precision)


# ---------------------------------------------------------------------------
# first integrals


def verify_first_integral(X: VectorField, F: ScalarFn, samples: Samples,
                          tol: float = TAU_FI) -> Report:
    """``|L_X F| <= tol * (1 + |F| + |grad F| |X|)`` at every sample."""

    # symbolic L_X F lets exact cancellations happen before rounding
    LXF = lie_derivative(X, F) if F.symbolic and isinstance(X, VectorField) else None

    def residual(p):
        xp = X(p)
        if LXF is not None:
            val, der = F(p), LXF(p)
        else:
            val, der = F.value_and_derivative(p, xp)
        g = np.linalg.norm(F.gradient(p))
        return abs(der), abs(der) / (1.0 + abs(val) + g * np.linalg.norm(xp))

    pts, vals, rejected = evaluate_over(samples, residual)
    details = {} if LXF is None else {"symbolic_zero": isinstance(LXF.expr, Const) and LXF.expr.value == 0}
    return aggregate(f"first_integral[{F.label}]", [v[0] for v in vals],
                     [v[1] for v in vals], pts, tol, rejected, **details)


@dataclass
class IntegralCandidate:
    fn: ScalarFn
    kind: str  # "structure" | "lie" | "iterated"
    indices: tuple[int, ...]
    report: Optional[Report] = None
    trivial: bool = False
    independent: Optional[bool] = None

    @property
    def verified(self) -> bool:
        return self.report is not None and self.report.passed

    @property
    def tag(self) -> str:
        idx = self.indices
        if self.kind == "structure":
            i, j, k = idx
            return f"F_{i + 1}{j + 1}^{k + 1}"
        if self.kind == "lie":
            l, i, j, k = idx
            return f"L_{l + 1} F_{i + 1}{j + 1}^{k + 1}"
        return "L[" + ",".join(str(a + 1) for a in idx) + "]"

    @property
    def expression(self) -> Optional[str]:
        return str(self.fn.expr) if self.fn.symbolic else None


def is_trivial(F: ScalarFn, samples: Samples, tol: float = TRIVIAL_TOL) -> bool:
    """True when ``F`` is numerically constant across the samples."""
    _, vals, _ = evaluate_over(samples, F)
    if not vals:
        return False
    v = np.array(vals)
    m = float(np.mean(v))
    return bool(np.all(np.abs(v - m) <= tol * (1.0 + abs(m))))


def _candidate(X, fn, kind, indices, samples, verify_samples, tol):
    c = IntegralCandidate(fn, kind, indices)
    if fn.symbolic and isinstance(fn.expr, Const):
        c.trivial = True
    else:
        c.trivial = is_trivial(fn, samples)
    c.report = verify_first_integral(X, fn, verify_samples, tol)
    return c


def first_integral_candidates(X: VectorField, frame: Sequence[VectorField], samples: Samples,
                              verify_samples: Optional[Samples] = None,
                              tol: float = TAU_FI, fit: bool = True,
                              structure: Optional[dict] = None) -> list[IntegralCandidate]:
    """All ``F_ij^k`` (i < j) followed by all ``L_{X_l} F_ij^k``, each verified.

    ``structure`` may carry precomputed StructureCoeffs keyed by ``(i, j)``.
    """
    frame = list(frame)
    verify_samples = samples if verify_samples is None else verify_samples
    for Y in frame:
        rep = check_commutes(X, Y, samples)
        if not rep.passed:
            raise PreconditionError(f"{Y.label} is not a symmetry of {X.label}: {rep.summary()}")
    p = len(frame)
    structure = dict(structure or {})
    base: list[tuple[tuple[int, int, int], ScalarFn]] = []
    for i, j in itertools.combinations(range(p), 2):
        sc = structure.get((i, j))
        if sc is None:
            sc = extract_structure_functions(frame, i, j, samples, fit=fit)
        for k in range(p):
            base.append(((i, j, k), sc.coeffs[k]))
    out = [_candidate(X, fn, "structure", idx, samples, verify_samples, tol) for idx, fn in base]
    for l in range(p):
        for idx, fn in base:
            d = lie_derivative(frame[l], fn)
            d.label = f"L_{l + 1} F_{idx[0] + 1}{idx[1] + 1}^{idx[2] + 1}"
            out.append(_candidate(X, d, "lie", (l, *idx), samples, verify_samples, tol))
    return out


def iterate_integrals(F: IntegralCandidate, X: VectorField, frame: Sequence[VectorField],
                      sequence: Sequence[int], samples: Samples, max_len: int = 4,
                      tol: float = TAU_FI) -> list[IntegralCandidate]:
    """Chain ``F_0 = F, F_m = L_{X_{a_m}} F_{m-1}``; stops after a trivial term."""
    if len(sequence) > max_len:
        raise PreconditionError(f"sequence longer than max_len={max_len}")
    head = F
    if head.report is None:
        head = _candidate(X, F.fn, F.kind, F.indices, samples, samples, tol)
    chain = [head]
    current = head
    for m, a in enumerate(sequence):
        if current.trivial:
            break
        fn = lie_derivative(frame[a], current.fn)
        idx = tuple(sequence[: m + 1])
        current = _candidate(X, fn, "iterated", idx, samples, samples, tol)
        chain.append(current)
    return chain


@dataclass
class IndependenceResult:
    independent: list[IntegralCandidate]
    dependent: list[IntegralCandidate]
    rank_profile: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.independent)


def _unit_rows(rows: list[np.ndarray]) -> np.ndarray:
    out = []
    for r in rows:
        nr = np.linalg.norm(r)
        if nr > 0:
            out.append(r / nr)
    return np.array(out) if out else np.zeros((0, 0))


def _rank(rows: list[np.ndarray], tau: float) -> int:
    m = _unit_rows(rows)
    if m.size == 0:
        return 0
    return numerical_rank(np.linalg.svd(m, compute_uv=False), tau)


def independence_filter(candidates: Sequence[IntegralCandidate], samples: Samples,
                        tau: float = TAU_RANK, quorum: float = 0.9) -> IndependenceResult:
    """Greedy selection, in provenance order, of functionally independent integrals.

    A candidate joins when its gradient raises the Jacobian rank at a
    ``quorum`` fraction of the samples. Unverified and trivial candidates
    never join.
    """
    pool = [c for c in candidates if c.verified and not c.trivial]
    pts = sample_points(samples)

    def grads(p):
        return [c.fn.gradient(p) for c in pool]

    _, G, _ = evaluate_over(pts, grads)
    chosen: list[int] = []
    for idx, c in enumerate(pool):
        rel = max([tau] + [10 * pool[t].fn.precision for t in chosen + [idx]])
        hits = 0
        for g in G:
            before = _rank([g[t] for t in chosen], rel)
            after = _rank([g[t] for t in chosen] + [g[idx]], rel)
            hits += after > before
        if G and hits >= quorum * len(G):
            chosen.append(idx)
    independent = [pool[t] for t in chosen]
    ids = {id(c) for c in independent}
    dependent = [c for c in candidates if id(c) not in ids]
    for c in candidates:
        c.independent = id(c) in ids
    rel = max([tau] + [10 * c.precision for c in (x.fn for x in independent)])
    profile = [_rank([g[t] for t in chosen], rel) for g in G]
    return IndependenceResult(independent, dependent, profile)
