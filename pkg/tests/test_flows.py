import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoflow.flows import (FlowError, ForceField, Status, Trajectory, blowup_criterion,
                           integrate_first_order, integrate_second_order)
from geoflow.manifolds import ChartManifold
from geoflow.metric import conformal_exp, euclidean, norms, round_sphere

R1 = ChartManifold.euclidean(1)
R2 = ChartManifold.euclidean(2)


def zero(t, q, v):
    return np.zeros_like(v)


# -- first-order flows --------------------------------------------------------------

def test_zero_field_keeps_point_fixed():
    traj = integrate_first_order(euclidean(R2), lambda t, q: np.zeros(2), 0.0, [1.0, -2.0], 3.0)
    assert traj.status is Status.REACHED_HORIZON
    assert np.all(traj.q == [1.0, -2.0])
    assert traj.t[-1] == 3.0


def test_linear_field_grows_exponentially():
    traj = integrate_first_order(euclidean(R1), lambda t, q: q, 0.0, [1.0], 2.0)
    assert traj.q[-1, 0] == pytest.approx(math.exp(2.0), rel=1e-8)


def test_backward_run_uses_reflected_time():
    traj = integrate_first_order(euclidean(R1), lambda t, q: q, 0.0, [1.0], 2.0,
                                 direction="backward")
    assert traj.t[-1] == -2.0
    assert np.all(np.diff(traj.t) < 0)
    assert traj.q[-1, 0] == pytest.approx(math.exp(-2.0), rel=1e-8)


def test_quadratic_field_blows_up_at_one():
    traj = integrate_first_order(euclidean(R1), lambda t, q: q ** 2, 0.0, [1.0], 2.0)
    assert traj.status is Status.BLOW_UP
    assert abs(traj.t_star - 1.0) < 1e-3


def test_blowup_time_is_insensitive_to_tolerance():
    field = lambda t, q: q ** 2  # noqa: E731
    a = integrate_first_order(euclidean(R1), field, 0.0, [1.0], 2.0)
    b = integrate_first_order(euclidean(R1), field, 0.0, [1.0], 2.0, rtol=5e-11, atol=5e-11)
    assert b.status is Status.BLOW_UP
    assert abs(a.t_star - b.t_star) < 1e-3


def test_field_domain_exit_is_left_chart():
    traj = integrate_first_order(euclidean(R1), lambda t, q: -np.ones(1), 0.0, [0.0], 3.0,
                                 domain=lambda t, q: 1.0 + q[0] > 0)
    assert traj.status is Status.LEFT_CHART
    assert traj.t_star == pytest.approx(1.0, abs=1e-6)


def test_initial_point_outside_domain_is_rejected():
    with pytest.raises(ValueError, match="domain"):
        integrate_first_order(euclidean(R1), lambda t, q: q, 0.0, [-2.0], 1.0,
                              domain=lambda t, q: 1.0 + q[0] > 0)


def test_field_failure_names_the_state():
    def broken(t, q):
        raise ZeroDivisionError("boom")
    with pytest.raises(FlowError, match="t=0.0"):
        integrate_first_order(euclidean(R1), broken, 0.0, [1.0], 1.0)


def test_non_positive_horizon_is_rejected():
    with pytest.raises(ValueError):
        integrate_first_order(euclidean(R1), lambda t, q: q, 0.0, [1.0], 0.0)


def test_unknown_direction_is_rejected():
    with pytest.raises(ValueError):
        integrate_first_order(euclidean(R1), lambda t, q: q, 0.0, [1.0], 1.0, direction="up")


# -- second-order flows ---------------------------------------------------------------

def test_harmonic_oscillator_period():
    traj = integrate_second_order(euclidean(R1), lambda t, q, v: -q, 0.0, [1.0], [0.0],
                                  2 * math.pi)
    assert traj.status is Status.REACHED_HORIZON
    assert traj.q[-1, 0] == pytest.approx(1.0, abs=1e-6)
    assert traj.v[-1, 0] == pytest.approx(0.0, abs=1e-6)
    mech = 0.5 * traj.v[:, 0] ** 2 + 0.5 * traj.q[:, 0] ** 2
    assert np.ptp(mech) < 1e-8


def test_velocity_proportional_force_completes():
    traj = integrate_second_order(euclidean(R1), lambda t, q, v: v, 0.0, [0.0], [1.0], 3.0)
    assert traj.status is Status.REACHED_HORIZON
    assert traj.q[-1, 0] == pytest.approx(math.exp(3.0) - 1.0, rel=1e-5)


def test_velocity_squared_force_blows_up():
    traj = integrate_second_order(euclidean(R1), lambda t, q, v: v ** 2, 0.0, [0.0], [1.0],
                                  3.0)
    assert traj.status is Status.BLOW_UP
    assert abs(traj.t_star - 1.0) < 1e-3


def test_force_domain_exit_is_left_chart():
    force = ForceField(zero, domain=lambda t, q: 1.0 + q[0] > 0)
    traj = integrate_second_order(euclidean(R1), force, 0.0, [0.0], [-1.0], 3.0)
    assert traj.status is Status.LEFT_CHART
    assert traj.t_star == pytest.approx(1.0, abs=1e-6)


def test_geodesic_toward_pole_leaves_chart():
    traj = integrate_second_order(round_sphere(), zero, 0.0, [0.5, 0.0], [-1.0, 0.0], 2.0)
    assert traj.status is Status.LEFT_CHART
    assert traj.t_star == pytest.approx(0.5, abs=1e-5)


def test_free_geodesic_conserves_speed_on_sphere():
    m = round_sphere()
    traj = integrate_second_order(m, zero, 0.0, [1.0, 0.0], [0.3, 0.8], 3.0)
    speed = norms(m, traj.t, traj.q, traj.v)
    np.testing.assert_allclose(speed, speed[0], rtol=1e-8)


def test_spatially_constant_conformal_factor_gives_straight_lines():
    traj = integrate_second_order(conformal_exp(R1), zero, 0.0, [0.0], [1.0], 2.0)
    assert traj.q[-1, 0] == pytest.approx(2.0, rel=1e-12)


def test_velocity_dimension_is_checked():
    with pytest.raises(ValueError, match="2 components"):
        integrate_second_order(euclidean(R2), zero, 0.0, [0, 0], [1.0], 1.0)


@settings(max_examples=15)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 2.0))
def test_forward_then_backward_returns_to_start(q0, v0, horizon):
    force = lambda t, q, v: -q - 0.1 * t * v  # noqa: E731
    m = conformal_exp(R1, rate=0.2)
    fwd = integrate_second_order(m, force, 0.0, [q0], [v0], horizon)
    back = integrate_second_order(m, force, fwd.t[-1], fwd.q[-1], fwd.v[-1], horizon,
                                  direction="backward")
    assert back.t[-1] == pytest.approx(0.0, abs=1e-12)
    assert back.q[-1, 0] == pytest.approx(q0, abs=1e-7)
    assert back.v[-1, 0] == pytest.approx(v0, abs=1e-7)


def test_torus_positions_are_canonicalized():
    torus = ChartManifold.torus([1.0])
    traj = integrate_second_order(euclidean(torus), zero, 0.0, [0.5], [1.0], 3.25)
    assert np.all((traj.q >= 0) & (traj.q < 1))
    assert traj.q[-1, 0] == pytest.approx(0.75, abs=1e-9)


# -- blow-up criterion and recording ------------------------------------------------------

def test_blowup_needs_collapsed_step():
    assert not blowup_criterion(0.5, 1e-10, [1e20])
    assert blowup_criterion(0.5, 1e-14, [1e20])


def test_blowup_step_threshold_scales_with_time():
    assert blowup_criterion(100.0, 5e-12, [1e13])
    assert not blowup_criterion(1.0, 5e-12, [1e13])


def test_blowup_by_energy_doubling():
    history = [1.0] * 10 + [2.0]
    assert blowup_criterion(0.0, 1e-14, history)
    assert not blowup_criterion(0.0, 1e-14, [1.0] * 10 + [1.9])


def test_blowup_on_nonfinite_energy():
    assert blowup_criterion(0.0, 1e-14, [math.nan])


def test_csv_roundtrip_is_exact(tmp_path):
    traj = integrate_second_order(euclidean(R2), lambda t, q, v: -q, 0.0, [1.0, 0.5],
                                  [0.0, 0.1], 1.0)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    back = Trajectory.from_csv(path)
    for name in ("t", "q", "v", "E"):
        assert np.array_equal(getattr(back, name), getattr(traj, name))
    assert path.read_text().splitlines()[0] == "t,q_1,q_2,v_1,v_2,E"


def test_report_lists_endpoint_and_statistics():
    traj = integrate_first_order(euclidean(R1), lambda t, q: q, 0.0, [1.0], 1.0)
    rep = traj.report()
    assert rep["status"] == "ReachedHorizon"
    assert rep["t_end"] == 1.0
    assert rep["stats"]["accepted_steps"] == len(traj) - 1
