import math

import numpy as np
import pytest
from hypothesis import strategies as st

from liesym.calculus import ScalarFn, VectorField
from liesym.expr import Binary, Const, Unary, Var
from liesym.poisson import make_poisson_pair
from liesym.sampling import Box, SampleSet

XY = ("x", "y")
XYZ = ("x", "y", "z")


def rel_close(a, b, rel, floor=1.0):
    return abs(a - b) <= rel * max(floor, abs(a), abs(b))


@pytest.fixture(scope="session")
def golden():
    """The radial field with its two symmetries on (0.1, 10)^2."""
    box = Box(XY, ((0.1, 10.0), (0.1, 10.0)))
    X = VectorField(["x", "y"], XY, "X")
    X1 = VectorField(["y", "x"], XY, "X1")
    X2 = VectorField(["y^2/x", "0"], XY, "X2")
    samples = SampleSet(box, 100, seed=42)
    verify = SampleSet(box, 200, seed=43)
    pair = make_poisson_pair(X1, X2, box, samples)
    return dict(box=box, X=X, X1=X1, X2=X2, frame=[X1, X2], samples=samples,
                verify=verify, pair=pair)


@pytest.fixture(scope="session")
def flat2():
    box = Box(XY, ((-3.0, 3.0), (-3.0, 3.0)))
    Dx = VectorField(["1", "0"], XY, "Dx")
    Dy = VectorField(["0", "1"], XY, "Dy")
    samples = SampleSet(box, 50, seed=42)
    return dict(box=box, Dx=Dx, Dy=Dy, samples=samples,
                pair=make_poisson_pair(Dx, Dy, box, samples))


@pytest.fixture(scope="session")
def flat3():
    box = Box.cube(XYZ, -2.0, 2.0)
    Dx = VectorField(["1", "0", "0"], XYZ, "Dx")
    Dy = VectorField(["0", "1", "0"], XYZ, "Dy")
    samples = SampleSet(box, 50, seed=42)
    return dict(box=box, Dx=Dx, Dy=Dy, samples=samples,
                pair=make_poisson_pair(Dx, Dy, box, samples))


def fn(text, variables=XY):
    return ScalarFn.parse(text, variables)


# --- hypothesis strategies -------------------------------------------------

small_ints = st.integers(min_value=-3, max_value=3)


def polynomials(variables=XY, max_leaves=6):
    """Random polynomial expressions (no singularities anywhere)."""
    leaf = st.one_of(st.sampled_from([Var(v) for v in variables]),
                     small_ints.map(lambda k: Const(float(k))))

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from(["+", "-", "*"]), children, children)
            .map(lambda t: Binary(t[0], t[1], t[2])),
            st.tuples(children, st.integers(2, 3))
            .map(lambda t: Binary("^", t[0], Const(float(t[1])))),
        )

    return st.recursive(leaf, extend, max_leaves=max_leaves)


def smooth_exprs(variables=XY, max_leaves=6):
    """Random expressions over the whole operator set, kept nonsingular on the positive orthant."""
    base = polynomials(variables, 3)

    def extend(children):
        pos = children.map(lambda e: Binary("+", Const(1.0), Binary("^", e, Const(2.0))))
        return st.one_of(
            st.tuples(st.sampled_from(["+", "-", "*"]), children, children)
            .map(lambda t: Binary(t[0], t[1], t[2])),
            st.tuples(children, pos).map(lambda t: Binary("/", t[0], t[1])),
            children.map(lambda e: Unary("sin", e)),
            children.map(lambda e: Unary("cos", e)),
            children.map(lambda e: Unary("neg", e)),
            pos.map(lambda e: Unary("log", e)),
            pos.map(lambda e: Unary("sqrt", e)),
            children.map(lambda e: Unary("exp", Unary("sin", e))),
            st.tuples(pos, st.sampled_from([-1.5, -1.0, 0.5, 2.0])).map(
                lambda t: Binary("^", t[0], Const(t[1]))),
        )

    return st.recursive(base, extend, max_leaves=max_leaves)


def points(dim=2, lo=0.2, hi=3.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=dim, max_size=dim)


def magnitude(*vals):
    return max([1.0] + [abs(v) for v in vals if math.isfinite(v)])


@pytest.fixture
def rng():
    return np.random.default_rng(42)
