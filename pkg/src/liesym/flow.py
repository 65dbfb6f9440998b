"""Trajectories, conservation drift and flow invariance of the Poisson bivector."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45

from .calculus import FD_STEP, ScalarFn
from .expr import SingularEvaluationError
from .report import Report, aggregate
from .sampling import Box

DEFAULT_FLOW_TOL = 1e-10
MIN_REPORT_TIMES = 50
TAU_PUSHFORWARD = 1e-6


class FlowError(RuntimeError):
    pass


class StepUnderflowError(FlowError):
    """The adaptive controller drove the step below machine resolution."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class BoundaryExitError(FlowError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class Trajectory:
    """Flow samples at uniformly spaced report times.

    ``status`` is ``"completed"``, ``"boundary_exit"`` (halted on the domain
    boundary, ``t_final`` is the crossing time) or ``"singular"`` (the field
    could not be evaluated).
    """

    times: np.ndarray
    points: np.ndarray
    status: str
    t_final: float
    steps: int
    max_local_error: float
    nfev: int
    _segments: list = field(default_factory=list, repr=False)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def x0(self) -> np.ndarray:
        return self.points[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    def at(self, t: float) -> np.ndarray:
        """Dense-output state at time ``t`` within the integrated span."""
        for t0, t1, dense in self._segments:
            if min(t0, t1) <= t <= max(t0, t1):
                return np.asarray(dense(t), dtype=float)
        if t == 0.0:
            return self.points[0]
        raise ValueError(f"t={t} outside integrated span [0, {self.t_final}]")


def _field_fn(X) -> Callable[[np.ndarray], np.ndarray]:
    def f(_t, y):
        return np.asarray(X(y), dtype=float)
    return f


def _run(fun, y0: np.ndarray, t_end: float, tol: float, inside: Callable[[np.ndarray], bool],
         n_report: int, state_dim: int) -> Trajectory:
    """Step scipy's Dormand-Prince pair manually so exits and error estimates are visible."""
    n_report = max(n_report, MIN_REPORT_TIMES)
    if t_end == 0.0:
        times = np.zeros(1)
        return Trajectory(times, y0[None, :].copy(), "completed", 0.0, 0, 0.0, 0)
    solver = RK45(fun, 0.0, y0, t_end, rtol=tol, atol=tol)
    segments, status, max_err, steps = [], "completed", 0.0, 0
    t_final = t_end
    while solver.status == "running":
        t_prev = solver.t
        try:
            message = solver.step()
        except (SingularEvaluationError, ZeroDivisionError, OverflowError):
            status, t_final = "singular", t_prev
            break
        if solver.status == "failed":
            partial = _assemble(segments, y0, t_prev, "failed", steps, max_err, solver.nfev, n_report)
            raise StepUnderflowError(f"step size underflow at t={t_prev:.6g}: {message}", partial)
        steps += 1
        local = solver.h_previous * (solver.K.T @ solver.E)
        max_err = max(max_err, float(np.max(np.abs(local))))
        dense = solver.dense_output()
        segments.append((t_prev, solver.t, dense))
        if not inside(solver.y[:state_dim]):
            # bisect the dense interpolant onto the boundary crossing
            lo, hi = t_prev, solver.t
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if inside(dense(mid)[:state_dim]):
                    lo = mid
                else:
                    hi = mid
            status, t_final = "boundary_exit", lo
            segments[-1] = (t_prev, lo, dense)
            break
    return _assemble(segments, y0, t_final, status, steps, max_err, solver.nfev, n_report)


def _assemble(segments, y0, t_final, status, steps, max_err, nfev, n_report) -> Trajectory:
    times = np.linspace(0.0, t_final, n_report)
    traj = Trajectory(times, np.empty((n_report, len(y0))), status, float(t_final), steps,
                      max_err, nfev, segments)
    traj.points = np.array([y0] + [traj.at(t) for t in times[1:]], dtype=float)
    return traj


def _inside_fn(domain: Optional[Box]):
    if domain is None:
        return lambda y: bool(np.all(np.isfinite(y)))
    return lambda y: bool(np.all(np.isfinite(y))) and domain.contains(y)


def integrate_flow(X, x0, t_end: float, tol: float = DEFAULT_FLOW_TOL,
                   domain: Optional[Box] = None, n_report: int = MIN_REPORT_TIMES,
                   raise_on_exit: bool = False) -> Trajectory:
    """Integrate ``dx/dt = X(x)`` from ``x0`` over ``[0, t_end]`` (``t_end`` may be negative).

    On leaving ``domain`` the partial trajectory is returned with status
    ``"boundary_exit"``, or ``BoundaryExitError`` is raised if requested.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y0 = np.asarray(x0, dtype=float)
    inside = _inside_fn(domain)
    if not inside(y0):
        raise ValueError(f"x0={tuple(y0)} is outside the domain")
    traj = _run(_field_fn(X), y0, float(t_end), tol, inside, n_report, len(y0))
    if raise_on_exit and traj.status != "completed":
        raise BoundaryExitError(f"trajectory left the domain at t={traj.t_final:.6g}", traj)
    return traj


def conservation_drift(X, F: ScalarFn, traj: Trajectory) -> float:
    """Largest ``|F(x(t)) - F(x0)| / (1 + |F(x0)|)`` over the report times."""
    if X is not None and X.dim != traj.points.shape[1]:
        raise ValueError("field and trajectory dimensions differ")
    f0 = F(traj.x0)
    return max(abs(F(p) - f0) for p in traj.points) / (1.0 + abs(f0))


@dataclass
class FlowJacobian:
    """``D_x phi_t`` at ``x0`` together with the flowed point."""

    matrix: np.ndarray
    x0: np.ndarray
    t: float
    endpoint: np.ndarray
    trajectory: Optional[Trajectory] = None


def _jacobian_fn(X):
    if hasattr(X, "jacobian"):
        return X.jacobian

    def fd(p):
        p = np.asarray(p, dtype=float)
        cols = []
        for i in range(len(p)):
            e = np.zeros_like(p)
            e[i] = FD_STEP * max(1.0, abs(p[i]))
            cols.append((X(p + e) - X(p - e)) / (2 * e[i]))
        return np.column_stack(cols)

    return fd


def flow_jacobian(X, x0, t: float, tol: float = DEFAULT_FLOW_TOL,
                  domain: Optional[Box] = None) -> FlowJacobian:
    """Integrate ``M' = DX(phi_t x0) M``, ``M(0) = I`` alongside the flow."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if t == 0.0:
        return FlowJacobian(np.eye(n), x0, 0.0, x0.copy())
    DX = _jacobian_fn(X)

    def fun(_t, y):
        x, M = y[:n], y[n:].reshape(n, n)
        return np.concatenate([np.asarray(X(x), dtype=float), (DX(x) @ M).ravel()])

    inside = _inside_fn(domain)
    if not inside(x0):
        raise ValueError(f"x0={tuple(x0)} is outside the domain")
    y0 = np.concatenate([x0, np.eye(n).ravel()])
    traj = _run(fun, y0, float(t), tol, inside, MIN_REPORT_TIMES, n)
    if traj.status != "completed":
        raise BoundaryExitError(
            f"flow from {tuple(x0)} left the domain at t={traj.t_final:.6g} before t={t}", traj)
    end = traj.endpoint
    return FlowJacobian(end[n:].reshape(n, n), x0, float(t), end[:n].copy(), traj)


def pushforward_check(pair, X, x0, t: float, tol: float = TAU_PUSHFORWARD,
                      domain: Optional[Box] = None, flow_tol: float = DEFAULT_FLOW_TOL) -> Report:
    """Compare ``M Pi(x0) M^T`` with ``Pi(phi_t x0)`` entrywise."""
    J = flow_jacobian(X, x0, t, flow_tol, domain if domain is not None else pair.domain)
    lhs = J.matrix @ pair.matrix(J.x0) @ J.matrix.T
    rhs = pair.matrix(J.endpoint)
    raw = float(np.max(np.abs(lhs - rhs)))
    scaled = raw / (1.0 + float(np.max(np.abs(rhs))))
    return aggregate("pushforward", [raw], [scaled], [J.endpoint], tol,
                     t=float(t), x0=[float(c) for c in J.x0],
                     pushed=lhs.tolist(), at_endpoint=rhs.tolist())
