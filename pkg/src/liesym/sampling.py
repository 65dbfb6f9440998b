"""Domain boxes and seeded sample sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .expr import SingularEvaluationError

DEFAULT_SEED = 42
SAMPLING_CAP = 1e3
MARGIN = 1e-3


@dataclass(frozen=True)
class Box:
    """Product of open intervals, one per variable. Ends may be +-inf."""

    variables: tuple[str, ...]
    intervals: tuple[tuple[float, float], ...]
    cap: float = SAMPLING_CAP
    margin: float = MARGIN

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "intervals",
                           tuple((float(lo), float(hi)) for lo, hi in self.intervals))
        if len(self.variables) != len(self.intervals):
            raise ValueError("one interval per variable required")
        for name, (lo, hi) in zip(self.variables, self.intervals):
            if not lo < hi:
                raise ValueError(f"empty interval for {name}: ({lo}, {hi})")

    @classmethod
    def cube(cls, variables: Sequence[str], lo: float, hi: float) -> "Box":
        return cls(tuple(variables), tuple((lo, hi) for _ in variables))

    @property
    def dim(self) -> int:
        return len(self.variables)

    def contains(self, p) -> bool:
        return all(lo < c < hi for c, (lo, hi) in zip(p, self.intervals))

    def capped_bounds(self) -> np.ndarray:
        """Finite (dim, 2) bounds with infinite ends replaced by +-cap."""
        out = np.empty((self.dim, 2))
        for i, (lo, hi) in enumerate(self.intervals):
            out[i, 0] = lo if math.isfinite(lo) else (hi - self.cap if math.isfinite(hi) else -self.cap)
            out[i, 1] = hi if math.isfinite(hi) else (lo + self.cap if math.isfinite(lo) else self.cap)
        return out

    def _sample_coord(self, lo: float, hi: float, rng: np.random.Generator) -> float:
        if math.isfinite(lo) and math.isfinite(hi):
            w = hi - lo
            return float(rng.uniform(lo + self.margin * w, hi - self.margin * w))
        # scale-spanning draw for unbounded ends
        r = math.exp(rng.uniform(math.log(self.margin), math.log(self.cap)))
        if math.isfinite(lo):
            return lo + r
        if math.isfinite(hi):
            return hi - r
        return r if rng.uniform() < 0.5 else -r

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        pts = np.empty((n, self.dim))
        for k in range(n):
            for i, (lo, hi) in enumerate(self.intervals):
                pts[k, i] = self._sample_coord(lo, hi, rng)
        return pts


class SampleSet:
    """Seeded sample points in a box, able to draw replacements for rejected points."""

    def __init__(self, box: Box, n: int, seed: int = DEFAULT_SEED):
        if n < 1:
            raise ValueError("empty sample set")
        self.box = box
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.points = box.sample(n, self._rng)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def replacement(self) -> np.ndarray:
        return self.box.sample(1, self._rng)[0]


Samples = Union[SampleSet, np.ndarray, Sequence[Sequence[float]]]

_EVAL_ERRORS = (SingularEvaluationError, ZeroDivisionError, OverflowError, np.linalg.LinAlgError)


def sample_points(samples: Samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.points
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.size == 0:
        raise ValueError("empty sample set")
    return pts


def evaluate_over(samples: Samples, fn: Callable[[np.ndarray], object],
                  max_attempts: int = 50) -> tuple[list[np.ndarray], list, int]:
    """Apply ``fn`` at each sample, resampling points where evaluation is singular.

    Returns the points actually used, the values, and the rejection count.
    Plain arrays cannot resample; failing points are simply dropped.
    """
    pts = sample_points(samples)
    used, values, rejected = [], [], 0
    for p in pts:
        q = p
        for _ in range(max_attempts):
            try:
                v = fn(q)
            except _EVAL_ERRORS:
                rejected += 1
                if not isinstance(samples, SampleSet):
                    q = None
                    break
                q = samples.replacement()
                continue
            break
        else:
            q = None
        if q is not None:
            used.append(q)
            values.append(v)
    return used, values, rejected


def as_points(points: Iterable) -> np.ndarray:
    return np.atleast_2d(np.asarray(list(points), dtype=float))
