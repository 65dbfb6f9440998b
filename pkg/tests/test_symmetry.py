import numpy as np
import pytest

from conftest import XY, XYZ, fn
from liesym.calculus import ScalarFn, VectorField, lie_derivative
from liesym.sampling import SampleSet
from liesym.symmetry import (DecompositionError, FrameDegenerateError, IntegralCandidate,
                             PreconditionError, check_commutes, extract_structure_functions,
                             first_integral_candidates, fit_monomials, independence_filter,
                             is_trivial, iterate_integrals, verify_first_integral)
from liesym.system import bundled_systems, load_system


# --- commutation -----------------------------------------------------------


def test_golden_symmetries_commute_exactly(golden):
    for Y in golden["frame"]:
        rep = check_commutes(golden["X"], Y, golden["samples"])
        assert rep.passed and rep.max_residual == 0.0 and rep.details["symbolic_zero"]


def test_non_commuting_pair_fails_with_unit_residual(flat2):
    rep = check_commutes(VectorField(["1", "0"], XY), VectorField(["x", "0"], XY), flat2["samples"])
    assert not rep.passed
    assert rep.max_residual == rep.mean_residual == 1.0


# --- structure functions ---------------------------------------------------


def test_golden_structure_functions_at_reference_point(golden):
    sc = extract_structure_functions(golden["frame"], 0, 1, golden["samples"])
    np.testing.assert_allclose(sc([1.0, 2.0]), [-4.0, 1.0], rtol=0, atol=1e-12)
    assert [c([1.0, 2.0]) for c in sc.coeffs] == pytest.approx([-4.0, 1.0], abs=1e-12)
    assert sc.fitted == [True, True]
    assert sc.report.max_scaled <= 1e-8


def test_closure_coefficients_propagate_derivatives(golden):
    sc = extract_structure_functions(golden["frame"], 0, 1, golden["samples"], fit=False)
    F1 = sc.coeffs[0]
    assert not F1.symbolic
    val, der = F1.value_and_derivative([1.0, 2.0], [1.0, 0.0])
    # F1 = -y^2/x^2, so dF1/dx = 2 y^2 / x^3
    assert val == pytest.approx(-4.0, abs=1e-12) and der == pytest.approx(8.0, rel=1e-12)


def test_commuting_frame_gives_zero_coefficients(flat2):
    sc = extract_structure_functions([flat2["Dx"], flat2["Dy"]], 0, 1, flat2["samples"])
    assert all(c.symbolic and str(c.expr) == "0" for c in sc.coeffs)


def test_escaping_bracket_is_decomposition_failure(flat3):
    frame = [flat3["Dx"], VectorField(["0", "1", "x"], XYZ)]
    with pytest.raises(DecompositionError) as info:
        extract_structure_functions(frame, 0, 1, flat3["samples"])
    assert info.value.point is not None and info.value.residual > 0.1


def test_too_many_fields_rejected(golden):
    frame = golden["frame"] + [golden["X"]]
    with pytest.raises(FrameDegenerateError):
        extract_structure_functions(frame, 0, 1, golden["samples"])


def test_degenerate_frame_rejected(golden):
    with pytest.raises(FrameDegenerateError):
        extract_structure_functions([golden["X1"], golden["X1"]], 0, 1, golden["samples"])


def test_structure_antisymmetry(golden):
    a = extract_structure_functions(golden["frame"], 0, 1, golden["samples"], fit=False)
    b = extract_structure_functions(golden["frame"], 1, 0, golden["samples"], fit=False)
    for p in golden["verify"]:
        np.testing.assert_allclose(a(p), -b(p), rtol=0, atol=1e-12)


def test_decomposition_holds_on_fresh_samples(golden):
    sc = extract_structure_functions(golden["frame"], 0, 1, golden["samples"], fit=False)
    for p in golden["verify"]:
        b = sc.bracket(p)
        recon = sum(c(p) * X(p) for c, X in zip(sc.closures, golden["frame"]))
        assert np.linalg.norm(b - recon) <= 1e-8 * (1 + np.linalg.norm(b))


def test_monomial_fit_recovers_ratio(golden):
    pts = golden["samples"].points
    vals = 2 * pts[:, 0] / pts[:, 1]
    assert str(fit_monomials(vals, pts, XY)) == "2*x/y"
    assert fit_monomials(np.sin(pts[:, 0]), pts, XY) is None


# --- first integrals -------------------------------------------------------


def test_golden_candidates_all_verify(golden):
    cands = first_integral_candidates(golden["X"], golden["frame"], golden["samples"],
                                      golden["verify"])
    assert [c.tag for c in cands] == ["F_12^1", "F_12^2", "L_1 F_12^1", "L_1 F_12^2",
                                      "L_2 F_12^1", "L_2 F_12^2"]
    assert all(c.verified and not c.trivial for c in cands)
    assert max(c.report.max_residual for c in cands) <= 1e-10


def test_golden_candidates_without_fitting(golden):
    cands = first_integral_candidates(golden["X"], golden["frame"], golden["samples"],
                                      golden["verify"], fit=False)
    assert all(c.verified for c in cands)
    assert not any(c.fn.symbolic for c in cands)


def test_commuting_frame_candidates_are_trivial(flat2):
    cands = first_integral_candidates(flat2["Dx"], [flat2["Dx"], flat2["Dy"]], flat2["samples"])
    assert len(cands) == 6 and all(c.trivial and c.verified for c in cands)


def test_candidates_need_symmetries(golden):
    with pytest.raises(PreconditionError):
        first_integral_candidates(golden["X"], [golden["X1"], VectorField(["1", "0"], XY)],
                                  golden["samples"])


def test_second_structure_function_is_conserved_at_reference_point(golden):
    L = lie_derivative(golden["X"], fn("2*x/y"))
    assert L([1.0, 2.0]) == 0.0


@pytest.mark.parametrize("text, passes", [("x/y", True), ("x", False), ("y^2/x^2", True)])
def test_verify_first_integral(golden, text, passes):
    rep = verify_first_integral(golden["X"], fn(text), golden["samples"])
    assert rep.passed == passes
    if passes:
        assert rep.max_residual <= 1e-12


def test_verify_closure_backed_integral(golden):
    F = ScalarFn(XY, fn=lambda v: v[0] / v[1] + (v[0] / v[1]) ** 2)
    assert verify_first_integral(golden["X"], F, golden["samples"]).passed


def test_constant_is_trivial(golden):
    assert is_trivial(ScalarFn.constant(3.0, XY), golden["samples"])
    assert not is_trivial(fn("x/y"), golden["samples"])


# --- iterated chains -------------------------------------------------------


def _candidate(text):
    return IntegralCandidate(fn(text), "structure", (0, 1, 0))


def test_iterate_along_first_symmetry(golden):
    chain = iterate_integrals(_candidate("x/y"), golden["X"], golden["frame"], [0], golden["samples"])
    assert len(chain) == 2 and all(c.verified for c in chain)
    ref = fn("1 - x^2/y^2")
    for p in golden["samples"].points[:10]:
        assert chain[1].fn(p) == pytest.approx(ref(p), rel=1e-12)


def test_iterate_along_second_symmetry(golden):
    chain = iterate_integrals(_candidate("x/y"), golden["X"], golden["frame"], [1], golden["samples"])
    assert chain[1].verified and str(chain[1].fn.expr) == "y/x"


def test_iterate_constant_truncates(golden):
    chain = iterate_integrals(_candidate("5"), golden["X"], golden["frame"], [0, 1, 0],
                              golden["samples"])
    assert len(chain) == 1 and chain[0].trivial


def test_iterate_respects_max_len(golden):
    with pytest.raises(PreconditionError):
        iterate_integrals(_candidate("x/y"), golden["X"], golden["frame"], [0] * 5,
                          golden["samples"])


# --- independence filter ---------------------------------------------------


def _verified(texts, golden):
    cands = [_candidate(t) for t in texts]
    for c in cands:
        c.report = verify_first_integral(golden["X"], c.fn, golden["samples"])
        c.trivial = is_trivial(c.fn, golden["samples"])
    return cands


def test_golden_filter_keeps_one(golden):
    cands = first_integral_candidates(golden["X"], golden["frame"], golden["samples"])
    res = independence_filter(cands, golden["verify"])
    assert res.count == 1 and res.independent[0].tag == "F_12^1"
    assert all(r == 1 for r in res.rank_profile)


def test_filter_ignores_constants(golden):
    res = independence_filter(_verified(["x/y", "3"], golden), golden["verify"])
    assert [str(c.fn.expr) for c in res.independent] == ["x/y"]


def test_filter_drops_functions_of_chosen(golden):
    res = independence_filter(_verified(["x/y", "(x/y)^2"], golden), golden["verify"])
    assert res.count == 1


def test_filter_keeps_genuinely_independent(flat3):
    cands = [IntegralCandidate(ScalarFn.parse(t, XYZ), "structure", (0, 1, k))
             for k, t in enumerate(["x", "y + z", "x*(y + z)", "x*y"])]
    X0 = VectorField(["0", "0", "0"], XYZ)
    for c in cands:
        c.report = verify_first_integral(X0, c.fn, flat3["samples"])
    res = independence_filter(cands, flat3["samples"])
    assert [str(c.fn.expr) for c in res.independent] == ["x", "y + z", "x*y"]


# --- built-in systems ------------------------------------------------------


ANALYZABLE = ["tudoran_2d.sys", "commuting_2d.sys", "linear_3d.sys", "axisymmetric_3d.sys"]


@pytest.mark.parametrize("name", ANALYZABLE)
def test_every_candidate_verifies_on_builtin_systems(name):
    system = load_system(bundled_systems()[name])
    samples = SampleSet(system.domain, 100, seed=42)
    verify = SampleSet(system.domain, 200, seed=43)
    for fit in (True, False):
        cands = first_integral_candidates(system.X, system.symmetries, samples, verify, fit=fit)
        assert cands and all(c.verified for c in cands)


@pytest.mark.parametrize("name", ANALYZABLE)
def test_lie_derivatives_commute_on_structure_functions(name):
    system = load_system(bundled_systems()[name])
    samples = SampleSet(system.domain, 50, seed=42)
    cands = first_integral_candidates(system.X, system.symmetries, samples, fit=False)
    X = system.X
    for c in cands:
        if c.kind != "structure":
            continue
        for Xl in system.symmetries:
            a = lie_derivative(X, lie_derivative(Xl, c.fn))
            b = lie_derivative(Xl, lie_derivative(X, c.fn))
            for p in samples.points[:20]:
                assert abs(a(p) - b(p)) <= 1e-6
