"""Symmetries, first integrals and rank-two Poisson structures of vector fields."""

__version__ = "0.1.0"

from .calculus import ScalarFn, VectorField, lie_bracket, lie_derivative  # noqa: E402
from .expr import parse_expr, simplify  # noqa: E402
from .sampling import Box, SampleSet  # noqa: E402

__all__ = ["Box", "SampleSet", "ScalarFn", "VectorField", "lie_bracket", "lie_derivative",
           "parse_expr", "simplify", "__version__"]
