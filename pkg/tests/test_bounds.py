import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoflow.bounds import (GrowthFunction, GrowthRangeError, Sampler, bihari_envelope,
                            check_force_growth, check_metric_growth, check_wintner, growth_G,
                            growth_G_inv, omega_sup, verify_distance_inequality,
                            verify_energy_envelope)
from geoflow.flows import ForceField, Status, Trajectory, integrate_second_order
from geoflow.manifolds import ChartManifold
from geoflow.metric import conformal_exp, conformal_poly, euclidean

R1 = ChartManifold.euclidean(1)
R2 = ChartManifold.euclidean(2)
ONE = GrowthFunction()
KINDS = [GrowthFunction("constant", 2.0), GrowthFunction("log", 1.0),
         GrowthFunction("loglog", 1.5)]
SMALL = Sampler(count=400, seed=3)


def curve(t, q, v):
    """A trajectory built from closed-form samples."""
    t = np.asarray(t, float)
    return Trajectory(t, np.asarray(q, float), np.asarray(v, float), np.ones_like(t),
                      Status.REACHED_HORIZON)


# -- growth functions -----------------------------------------------------------

@pytest.mark.parametrize("g", [ONE] + KINDS)
def test_G_vanishes_at_one(g):
    assert growth_G(g, 1.0) == 0.0


def test_G_of_e_for_unit_growth():
    assert growth_G(ONE, math.e) == pytest.approx(1.0, abs=1e-15)


def test_G_inv_of_two_for_unit_growth():
    assert growth_G_inv(ONE, 2.0) == pytest.approx(math.e ** 2, rel=1e-15)


def test_non_constant_kinds_equal_c_at_one():
    for g in KINDS:
        assert float(g(1.0)) == pytest.approx(g.c, rel=1e-15)


def test_growth_constant_below_one_is_rejected():
    with pytest.raises(ValueError):
        GrowthFunction("constant", 0.5)
    with pytest.raises(ValueError):
        GrowthFunction("cubic", 1.0)


def test_unreachable_inverse_reports_bracket():
    with pytest.raises(GrowthRangeError) as info:
        growth_G_inv(GrowthFunction("constant", 1.0), 1e4)
    assert info.value.bracket[0] == 1.0
    with pytest.raises(GrowthRangeError) as info:
        growth_G_inv(GrowthFunction("log", 1.0), 1e4)
    lo, hi = info.value.bracket
    assert lo < hi


def test_log_growth_against_closed_form():
    # for g = ln(eta + x) the substitution u = ln(eta + x) is not exact, so
    # compare against a direct integral in x instead
    from scipy.integrate import quad
    g = GrowthFunction("log", 1.0)
    y = 50.0
    ref, _ = quad(lambda x: 1.0 / (x * math.log(math.e - 1 + x)), 1.0, y, epsabs=1e-13,
                  epsrel=1e-13)
    assert growth_G(g, y) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=25)
@given(st.sampled_from(KINDS), st.floats(1.0, 1e6), st.floats(1.0, 1e6))
def test_G_is_increasing(g, a, b):
    lo, hi = sorted((a, b))
    assert growth_G(g, lo) <= growth_G(g, hi)


@settings(max_examples=25)
@given(st.sampled_from(KINDS), st.floats(0.0, 0.99))
def test_G_inv_inverts_G(g, frac):
    # stay inside the range reachable in double precision
    z = frac * growth_G(g, 1e300)
    assert growth_G(g, growth_G_inv(g, z)) == pytest.approx(z, abs=1e-10)


# -- envelopes -------------------------------------------------------------------------

def test_envelope_at_start_is_initial_energy():
    for g in [ONE] + KINDS:
        assert bihari_envelope(g, 3.0, 6.0, 0.5, 0.5) == pytest.approx(3.0, rel=1e-12)


def test_unit_growth_envelopes():
    assert bihari_envelope(ONE, 2.0, 1.0, 0.0, 1.0) == pytest.approx(2 * math.e, rel=1e-14)
    assert bihari_envelope(ONE, 2.0, 6.0, 0.0, -1.0) == pytest.approx(2 * math.e ** 6, rel=1e-14)


def test_envelope_rejects_low_energy():
    with pytest.raises(ValueError):
        bihari_envelope(ONE, 0.5, 1.0, 0.0, 1.0)


@settings(max_examples=15)
@given(st.sampled_from(KINDS), st.floats(1.0, 100.0), st.floats(0.01, 0.3))
def test_envelope_solves_the_comparison_equation(g, E0, s):
    """``u' = beta g(u) u`` checked with a central difference in time."""
    beta = 1.0
    u = bihari_envelope(g, E0, beta, 0.0, s)
    h = 1e-3 / (beta * float(g(u)))
    du = (bihari_envelope(g, E0, beta, 0.0, s + h) - bihari_envelope(g, E0, beta, 0.0, s - h)) / (2 * h)
    assert du == pytest.approx(beta * float(g(u)) * u, rel=1e-5)


@settings(max_examples=15)
@given(st.floats(1.0, 50.0), st.floats(0.0, 1.0), st.floats(1.0, 3.0))
def test_envelope_is_monotone_in_time_and_growth(E0, s, c):
    g_small, g_big = GrowthFunction("log", 1.0), GrowthFunction("log", c)
    a = bihari_envelope(g_small, E0, 1.0, 0.0, s)
    assert a <= bihari_envelope(g_small, E0, 1.0, 0.0, s + 0.1)
    assert a <= bihari_envelope(g_big, E0, 1.0, 0.0, s) * (1 + 1e-12)


@pytest.mark.parametrize("g", [ONE] + KINDS)
def test_rate_weight_supremum_is_at_most_six(g):
    assert omega_sup(g) <= 6.0


# -- metric growth ---------------------------------------------------------------------

def test_static_metric_passes_trivially():
    rep = check_metric_growth(euclidean(R2), [0, 0], ONE, 2.0, sampler=SMALL)
    assert rep.passed and rep.worst_ratio == 0.0


def test_exponential_metric_is_an_equality_case():
    rep = check_metric_growth(conformal_exp(R2), [0, 0], ONE, 2.0, sampler=SMALL)
    assert rep.passed
    assert rep.worst_ratio == pytest.approx(1.0, rel=1e-12)


def test_polynomial_metric_growth_on_window_three():
    # the ratio is |t| / (1 + t^2) <= 1/2, so g = 1 suffices
    rep = check_metric_growth(conformal_poly(R1), [0.0], ONE, 3.0, sampler=SMALL)
    assert rep.passed
    assert rep.worst_ratio == pytest.approx(0.5, abs=1e-3)
    assert rep.fitted_constant == 1.0


def test_metric_growth_is_monotone_in_g():
    m = conformal_poly(R1)
    fail = check_metric_growth(m, [0.0], ONE, 3.0, mode="R", sampler=SMALL)
    big = check_metric_growth(m, [0.0], GrowthFunction("constant", 5.0), 3.0, mode="R",
                              sampler=SMALL)
    assert big.worst_ratio <= fail.worst_ratio
    assert not (fail.passed and not big.passed)


# -- Wintner condition ---------------------------------------------------------------

def test_zero_field_satisfies_wintner():
    rep = check_wintner(euclidean(R1), [0.0], lambda t, q: np.zeros_like(q), ONE, 1.0,
                        sampler=SMALL)
    assert rep.passed and rep.worst_ratio == 0.0


def test_linear_field_satisfies_wintner():
    rep = check_wintner(euclidean(R1), [0.0], lambda t, q: q, ONE, 1.0, sampler=SMALL)
    assert rep.passed and rep.worst_ratio < 1.0


def test_quadratic_field_fails_at_largest_stress_radius():
    rep = check_wintner(euclidean(R1), [0.0], lambda t, q: q ** 2, ONE, 1.0, sampler=SMALL)
    assert not rep.passed
    assert abs(rep.witness.q[0]) == 100.0
    assert rep.worst_ratio == pytest.approx(1e4 / 101, rel=1e-12)


# -- force growth ---------------------------------------------------------------------

def test_oscillator_force_passes():
    rep = check_force_growth(euclidean(R1), [0.0], lambda t, q, v: -q, ONE, 1.0, 1.0,
                             sampler=SMALL)
    assert rep.passed


def test_velocity_squared_force_fails_at_q0_v10():
    sampler = Sampler(count=0, stress_radii=(1.0, 10.0), v_box=5.0)
    rep = check_force_growth(euclidean(R1), [0.0], lambda t, q, v: v ** 2, ONE, 1.0, 1.0,
                             sampler=sampler)
    assert not rep.passed
    assert rep.witness.q[0] == 0.0 and abs(rep.witness.v[0]) == 10.0
    assert rep.details["witness_rhs"] == pytest.approx(101 / 11, rel=1e-12)


def test_pure_magnetic_force_has_zero_remainder():
    F = np.array([[0.0, 1.0], [-1.0, 0.0]])
    force = ForceField(lambda t, q, v: np.einsum("ij,...j->...i", F, v),
                       two_form_part=lambda t, q: np.broadcast_to(F, np.shape(q)[:-1] + (2, 2)))
    rep = check_force_growth(euclidean(R2), [0, 0], force, ONE, 1.0, 1.0, sampler=SMALL)
    assert rep.passed and rep.worst_ratio == 0.0


def test_friction_is_discounted_forward_only():
    h = 50.0
    force = ForceField(lambda t, q, v: -h * v, friction_part=lambda t, q, v: np.full(np.shape(q)[:-1], h))
    fwd = check_force_growth(euclidean(R1), [0.0], force, ONE, 1.0, 1.0, sampler=SMALL,
                             direction="forward")
    both = check_force_growth(euclidean(R1), [0.0], force, ONE, 1.0, 1.0, sampler=SMALL)
    assert fwd.passed and fwd.worst_ratio == 0.0
    assert not both.passed


def test_sampler_is_deterministic_per_seed():
    a = Sampler(count=50, seed=9).draw(R2, 2.0)
    b = Sampler(count=50, seed=9).draw(R2, 2.0)
    c = Sampler(count=50, seed=10).draw(R2, 2.0)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.v, b.v)
    assert not np.array_equal(a.q, c.q)
    assert np.all(np.abs(a.t) <= 2.0)


def test_report_states_sampling_scope():
    rep = check_wintner(euclidean(R1), [0.0], lambda t, q: q, ONE, 1.0, sampler=SMALL)
    assert "cannot prove" in rep.to_dict()["scope"]


# -- distance inequalities --------------------------------------------------------------

def test_radial_line_saturates_velocity_term():
    t = np.linspace(0, 2, 21)
    rep = verify_distance_inequality(euclidean(R1), [0.0], curve(t, t[:, None], np.ones((21, 1))),
                                     ONE, "erx")
    assert rep["satisfied"]
    assert rep["lhs"] == pytest.approx(2.0, abs=1e-9)
    # int_0^2 (1 + t) dt with g = 1
    assert rep["rhs"] == pytest.approx(4.0, abs=1e-9)


def test_stationary_point_in_expanding_metric_is_an_equality():
    t = np.linspace(0, 1, 41)
    rep = verify_distance_inequality(conformal_exp(R1), [0.0],
                                     curve(t, np.ones((41, 1)), np.zeros((41, 1))), ONE, "erx")
    assert rep["satisfied"]
    assert rep["lhs"] == pytest.approx(math.e - 1, abs=1e-9)
    assert rep["rhs"] == pytest.approx(math.e - 1, abs=1e-9)


def test_oscillator_orbit_has_slack_in_squared_form():
    t = np.linspace(0, 2 * math.pi, 200)
    rep = verify_distance_inequality(euclidean(R1), [0.0],
                                     curve(t, np.cos(t)[:, None], -np.sin(t)[:, None]), ONE, "ers")
    assert rep["satisfied"]
    assert rep["worst_relative_excess"] < 0


def test_metric_drift_beyond_growth_is_caught():
    # a_t = e^{6t}: rho grows like e^{3t} while g = 1 only allows e^t
    t = np.linspace(0, 1, 41)
    stay = curve(t, np.ones((41, 1)), np.zeros((41, 1)))
    rep = verify_distance_inequality(conformal_exp(R1, rate=3.0), [0.0], stay, ONE, "erx")
    assert rep["verified"] and not rep["satisfied"]
    assert rep["lhs"] == pytest.approx(math.exp(3.0) - 1, abs=1e-9)
    ok = verify_distance_inequality(conformal_exp(R1, rate=3.0), [0.0], stay,
                                    GrowthFunction("constant", 3.0), "erx")
    assert ok["satisfied"]


# -- energy envelope -----------------------------------------------------------------------

def test_oscillator_energy_stays_under_envelope():
    traj = integrate_second_order(euclidean(R1), lambda t, q, v: -q, 0.0, [1.0], [0.0], 3.0)
    rep = verify_energy_envelope(traj, ONE)
    assert rep["satisfied"]
    assert rep["E0"] == pytest.approx(2.0)


def test_constant_energy_for_resting_particle():
    traj = integrate_second_order(euclidean(R2), lambda t, q, v: np.zeros_like(v), 0.0,
                                  [1.0, 1.0], [0.0, 0.0], 2.0)
    assert np.all(traj.E == traj.E[0])
    assert verify_energy_envelope(traj, ONE)["satisfied"]


def test_envelope_violation_is_reported():
    t = np.linspace(0, 1, 11)
    traj = curve(t, np.zeros((11, 1)), np.zeros((11, 1)))
    traj = Trajectory(t, traj.q, traj.v, np.exp(10 * t), Status.REACHED_HORIZON)
    rep = verify_energy_envelope(traj, ONE, beta=6.0)
    assert not rep["satisfied"]
    assert rep["worst_t"] == 1.0
