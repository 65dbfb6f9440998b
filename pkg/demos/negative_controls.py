"""Cases the toolkit must reject, and one it must not.

Run with ``python demos/negative_controls.py``.
"""
from liesym.calculus import ScalarFn, VectorField
from liesym.pipeline import run_pipeline
from liesym.poisson import (ClosureError, is_poisson_vector_field, jacobi_defect,
                            make_poisson_pair, raw_bivector)
from liesym.sampling import Box, SampleSet
from liesym.system import bundled_systems, load_system

XYZ = ("x", "y", "z")
cube = Box.cube(XYZ, -2.0, 2.0)
samples = SampleSet(cube, 50)
Dx = VectorField(["1", "0", "0"], XYZ)
Y = VectorField(["0", "1", "x"], XYZ)

# [Dx, Y] = Dz escapes span{Dx, Y}: the wedge is not Poisson
try:
    make_poisson_pair(Dx, Y, cube, samples)
except ClosureError as err:
    print("closure failure, trivector norm", err.trivector_norm)
coords = [ScalarFn.parse(v, XYZ) for v in XYZ]
print("Jacobiator on (x, y, z):", jacobi_defect(raw_bivector(Dx, Y), *coords, samples).max_residual)

report = run_pipeline(load_system(bundled_systems()["bracket_escape_3d.sys"]))
print("pipeline failed stages:", report.failed, "exit code", report.exit_code)

XY = ("x", "y")
box = Box(XY, ((0.1, 10.0), (0.1, 10.0)))
s2 = SampleSet(box, 100)
pair = make_poisson_pair(VectorField(["y", "x"], XY), VectorField(["y^2/x", "0"], XY), box, s2)
for comps in (["x", "0"], ["y", "0"]):
    rep = is_poisson_vector_field(pair, VectorField(comps, XY), s2)
    print(f"{comps[0]} d/dx preserves -y^2 dx^dy: {rep.passed} (defect {rep.max_residual:.2e})")
