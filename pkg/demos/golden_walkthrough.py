"""Walk through the radial field on (0.1, 10)^2 step by step.

Run with ``python demos/golden_walkthrough.py``.
"""
import math

import numpy as np

from liesym.calculus import ScalarFn, VectorField, lie_bracket
from liesym.flow import conservation_drift, integrate_flow, pushforward_check
from liesym.poisson import (hamiltonian_vector_field, make_poisson_pair, poisson_bracket,
                            reconstruct_hamiltonian_2d, symplectic_form_2d)
from liesym.sampling import Box, SampleSet
from liesym.symmetry import (extract_structure_functions, first_integral_candidates,
                             independence_filter)

XY = ("x", "y")
box = Box(XY, ((0.1, 10.0), (0.1, 10.0)))
X = VectorField(["x", "y"], XY, "X")
X1 = VectorField(["y", "x"], XY, "X1")
X2 = VectorField(["y^2/x", "0"], XY, "X2")
samples, verify = SampleSet(box, 100, seed=42), SampleSet(box, 200, seed=43)
p = [1.0, 2.0]

print("[X1, X2] =", [str(c) for c in lie_bracket(X1, X2).components])
sc = extract_structure_functions([X1, X2], 0, 1, samples)
print("structure functions:", [str(c.expr) for c in sc.coeffs], "-> at (1,2):", sc(p))

cands = first_integral_candidates(X, [X1, X2], samples, verify)
for c in cands:
    print(f"  {c.tag:12s} verified={c.verified}  {c.expression}")
kept = independence_filter(cands, verify)
print("independent integrals:", [c.expression for c in kept.independent])

pair = make_poisson_pair(X1, X2, box, samples)
x, y = ScalarFn.parse("x", XY), ScalarFn.parse("y", XY)
print("{x, y} =", poisson_bracket(pair, x, y).expr)
H = ScalarFn.parse("x/y", XY)
print("X_H for H = x/y:", [str(c) for c in hamiltonian_vector_field(pair, H).components])
print("omega_12 at (1,2):", symplectic_form_2d(pair, p).coefficient)

rec = reconstruct_hamiltonian_2d(pair, X, [1.0, 1.0], SampleSet(Box(XY, ((1, 3), (1, 3))), 30))
print("reconstructed H(2, 1.5) =", rec.H([2.0, 1.5]), " expected", 2 / 1.5 - 1)

traj = integrate_flow(X, p, 1.0, domain=box)
print("flow endpoint:", traj.endpoint, " expected", [math.e, 2 * math.e])
print("drift of x/y:", conservation_drift(X, H, traj))
push = pushforward_check(pair, X, p, 1.0)
print("pushed Pi^12:", np.round(push.details["pushed"][0][1], 8), " -4e^2 =", -4 * math.e ** 2)
