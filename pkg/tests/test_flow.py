import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import XY, fn
from liesym.calculus import ScalarFn, VectorField
from liesym.flow import (BoundaryExitError, StepUnderflowError, conservation_drift,
                         flow_jacobian, integrate_flow, pushforward_check)
from liesym.sampling import Box, SampleSet
from liesym.symmetry import first_integral_candidates
from liesym.system import bundled_systems, load_system

REF = [1.0, 2.0]


def test_radial_flow_endpoint(golden):
    traj = integrate_flow(golden["X"], REF, 1.0, tol=1e-10, domain=golden["box"])
    assert traj.completed and traj.t_final == 1.0
    np.testing.assert_allclose(traj.endpoint, [math.e, 2 * math.e], rtol=1e-8)
    assert len(traj.times) >= 50 and traj.times[-1] == 1.0


def test_backward_flow(golden):
    traj = integrate_flow(golden["X"], REF, -1.0, domain=golden["box"])
    np.testing.assert_allclose(traj.endpoint, np.array(REF) / math.e, rtol=1e-8)


def test_zero_field_stays_put():
    traj = integrate_flow(VectorField(["0", "0"], XY), [0.3, -0.4], 2.0)
    assert traj.completed
    assert np.all(traj.points == [0.3, -0.4])


def test_zero_duration_is_initial_point(golden):
    traj = integrate_flow(golden["X"], REF, 0.0)
    assert traj.completed and traj.t_final == 0.0
    assert np.array_equal(traj.endpoint, REF)


def test_boundary_exit_time(golden):
    # x(t) = e^t leaves (0.1, 10) at t = ln 10
    traj = integrate_flow(golden["X"], [1.0, 1.0], 5.0, domain=golden["box"])
    assert traj.status == "boundary_exit"
    assert traj.t_final == pytest.approx(math.log(10.0), abs=1e-8)
    assert np.all(traj.points < 10.0)


def test_boundary_exit_can_raise(golden):
    with pytest.raises(BoundaryExitError) as info:
        integrate_flow(golden["X"], [1.0, 1.0], 5.0, domain=golden["box"], raise_on_exit=True)
    assert info.value.trajectory.status == "boundary_exit"


def test_start_outside_domain_rejected(golden):
    with pytest.raises(ValueError):
        integrate_flow(golden["X"], [20.0, 1.0], 1.0, domain=golden["box"])


def test_tolerance_must_be_positive(golden):
    with pytest.raises(ValueError):
        integrate_flow(golden["X"], REF, 1.0, tol=0.0)


def test_finite_time_blowup_is_reported():
    # x' = x^2 from x = 1 blows up at t = 1
    X = VectorField(["x^2", "0"], XY)
    try:
        traj = integrate_flow(X, [1.0, 0.0], 2.0, tol=1e-10)
    except StepUnderflowError as err:
        assert err.trajectory.t_final == pytest.approx(1.0, abs=1e-3)
    else:
        assert traj.status != "completed" and traj.t_final == pytest.approx(1.0, abs=1e-3)


def test_local_error_is_recorded(golden):
    traj = integrate_flow(golden["X"], REF, 1.0, tol=1e-8)
    assert 0.0 < traj.max_local_error <= 1e-6 and traj.steps > 0


def test_fourth_order_convergence():
    # rotation: exact endpoint is known, error should shrink ~ tol
    X = VectorField(["-y", "x"], XY)
    errs = []
    for tol in [1e-5, 1e-7, 1e-9]:
        p = integrate_flow(X, [1.0, 0.0], 2.0, tol=tol).endpoint
        errs.append(np.linalg.norm(p - [math.cos(2.0), math.sin(2.0)]))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 1e-8


# --- conservation ----------------------------------------------------------


def test_ratio_is_conserved_along_flow(golden):
    traj = integrate_flow(golden["X"], REF, 1.0, domain=golden["box"])
    assert conservation_drift(golden["X"], fn("x/y"), traj) <= 1e-8


def test_coordinate_drifts(golden):
    traj = integrate_flow(golden["X"], [1.0, 1.0], 1.0)
    # |x(t) - 1| / (1 + 1) at t = 1
    assert conservation_drift(golden["X"], fn("x"), traj) == pytest.approx((math.e - 1) / 2, rel=1e-7)


def test_constant_has_no_drift(golden):
    traj = integrate_flow(golden["X"], REF, 1.0)
    assert conservation_drift(golden["X"], ScalarFn.constant(4.0, XY), traj) == 0.0


def test_drift_dimension_mismatch(golden, flat3):
    traj = integrate_flow(golden["X"], REF, 0.5)
    with pytest.raises(ValueError):
        conservation_drift(flat3["Dx"], ScalarFn.constant(1.0, XY), traj)


@pytest.mark.parametrize("name", ["tudoran_2d.sys", "linear_3d.sys", "axisymmetric_3d.sys"])
def test_verified_candidates_are_conserved_on_builtins(name):
    system = load_system(bundled_systems()[name])
    samples = SampleSet(system.domain, 100, seed=42)
    cands = first_integral_candidates(system.X, system.symmetries, samples,
                                      SampleSet(system.domain, 200, seed=43))
    lo, hi = system.domain.capped_bounds().T
    x0 = lo + 0.3 * (hi - lo)
    traj = integrate_flow(system.X, x0, 1.0, domain=system.domain)
    for c in cands:
        if c.verified and not c.trivial:
            assert conservation_drift(system.X, c.fn, traj) <= 1e-6, c.tag


# --- linearized flow -------------------------------------------------------


def test_radial_flow_jacobian_is_scaling(golden):
    J = flow_jacobian(golden["X"], REF, 1.0)
    np.testing.assert_allclose(J.matrix, math.e * np.eye(2), rtol=1e-8, atol=1e-10)


def test_flow_jacobian_at_zero_time(golden):
    assert np.array_equal(flow_jacobian(golden["X"], REF, 0.0).matrix, np.eye(2))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 1.5))
def test_flow_jacobian_group_property(t):
    # M(-t) at phi_t(x0) inverts M(t) at x0
    X = VectorField(["y", "-sin(x)"], XY)
    fwd = flow_jacobian(X, [0.4, 0.2], t)
    back = flow_jacobian(X, fwd.endpoint, -t)
    np.testing.assert_allclose(back.matrix @ fwd.matrix, np.eye(2), atol=1e-8)
    np.testing.assert_allclose(back.endpoint, [0.4, 0.2], atol=1e-8)


def test_pushforward_of_golden_bivector(golden):
    rep = pushforward_check(golden["pair"], golden["X"], REF, 1.0)
    assert rep.passed
    assert rep.details["at_endpoint"][0][1] == pytest.approx(-4 * math.e ** 2, rel=1e-8)
    assert rep.details["pushed"][0][1] == pytest.approx(-4 * math.e ** 2, rel=1e-8)


def test_pushforward_at_zero_time_is_exact(golden):
    rep = pushforward_check(golden["pair"], golden["X"], REF, 0.0)
    assert rep.max_residual == 0.0


def test_pushforward_detects_non_poisson_field(golden):
    rep = pushforward_check(golden["pair"], VectorField(["x", "0"], XY), REF, 1.0)
    assert not rep.passed


def test_pushforward_leaving_domain_raises(golden):
    with pytest.raises(BoundaryExitError):
        pushforward_check(golden["pair"], golden["X"], [5.0, 5.0], 2.0)


def test_pushforward_on_infinite_domain(flat2):
    rot = VectorField(["-y", "x"], XY)
    rep = pushforward_check(flat2["pair"], rot, [1.0, 0.5], 3.0, domain=Box(XY, ((-math.inf, math.inf),) * 2))
    assert rep.passed


def test_error_ratio_per_tolerance_step(golden):
    # each 32x tighter tolerance must cut the endpoint error by at least 16x
    tols = [1e-6 / 32 ** k for k in range(4)]
    errs = [np.linalg.norm(integrate_flow(golden["X"], REF, 1.0, tol=t).endpoint
                           - [math.e, 2 * math.e]) for t in tols]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert min(ratios) >= 16, ratios


def test_pushforward_preserved_by_shear(golden):
    # y d/dx preserves -y^2 dx^dy, so its flow carries the bivector to itself
    rep = pushforward_check(golden["pair"], VectorField(["y", "0"], XY), REF, 0.5)
    assert rep.passed and rep.max_residual <= 1e-8
