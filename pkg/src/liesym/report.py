"""Verification results shared by the analysis modules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class Report:
    """Outcome of a numerical check over a set of sample points.

    ``max_residual`` is the raw quantity the check measures (a norm, an
    absolute derivative, ...). ``max_scaled`` is the same quantity after
    the check's scaling, and is what gets compared to ``tolerance``.
    """

    name: str
    passed: bool
    max_residual: float = 0.0
    mean_residual: float = 0.0
    max_scaled: float = 0.0
    tolerance: float = 0.0
    argmax_point: Optional[tuple[float, ...]] = None
    n_samples: int = 0
    rejected: int = 0
    details: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max={self.max_residual:.3e} "
                f"scaled={self.max_scaled:.3e} tol={self.tolerance:.1e} "
                f"n={self.n_samples} rejected={self.rejected}")


def aggregate(name: str, raw: list[float], scaled: list[float], points: list,
              tolerance: float, rejected: int = 0, **details) -> Report:
    """Build a Report from per-sample residuals (order-independent reductions)."""
    if not raw:
        return Report(name, False, n_samples=0, tolerance=tolerance, rejected=rejected,
                      details={"error": "no evaluable samples", **details})
    imax = max(range(len(scaled)), key=lambda i: (scaled[i], -i))
    return Report(
        name=name,
        passed=bool(max(scaled) <= tolerance),
        max_residual=float(max(raw)),
        mean_residual=float(sum(raw) / len(raw)),
        max_scaled=float(scaled[imax]),
        tolerance=tolerance,
        argmax_point=tuple(float(c) for c in points[imax]),
        n_samples=len(raw),
        rejected=rejected,
        details=details,
    )
