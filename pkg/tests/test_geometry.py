import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow.geodesy import (ChartExitError, distance, distances, energies, exp_map, proper_E,
                             proper_R, rho)
from geoflow.manifolds import ChartError, ChartManifold
from geoflow.metric import (MetricError, MetricField, TangentState, catalog, christoffel,
                            conformal_exp, conformal_poly, dt_metric_quadratic_form,
                            euclidean, from_expressions, metric_norm, round_sphere)

R1 = ChartManifold.euclidean(1)
R2 = ChartManifold.euclidean(2)
coord = st.floats(-2.0, 2.0, allow_nan=False)


# -- charts ----------------------------------------------------------------------

def test_torus_canonicalize_lands_in_fundamental_domain():
    torus = ChartManifold.torus([1.0, 2.0])
    q = torus.canonicalize([[-0.25, 5.0], [1.0, -1e-18]])
    assert np.all(q >= 0) and np.all(q < [1.0, 2.0])
    np.testing.assert_allclose(q[0], [0.75, 1.0])


def test_torus_displacement_takes_short_way():
    torus = ChartManifold.torus([1.0])
    assert torus.displacement([0.9], [0.1])[0] == pytest.approx(0.2)


def test_sphere_chart_excludes_poles():
    s2 = ChartManifold.sphere()
    assert not s2.is_valid([0.0, 1.0])
    assert not s2.is_valid([math.pi, 1.0])
    assert s2.is_valid([1e-3, 1.0])
    with pytest.raises(ChartError):
        s2.check([0.0, 0.0])


# -- metric norms ------------------------------------------------------------------

def test_flat_norm_is_euclidean():
    assert metric_norm(euclidean(R2), TangentState(0.0, [0, 0], [3, 4])) == pytest.approx(5.0)


def test_conformal_norm_scales_with_exponential():
    m = conformal_exp(R1)
    assert metric_norm(m, TangentState(1.0, [0.3], [1.0])) == pytest.approx(math.e, rel=1e-15)


def test_zero_vector_has_zero_norm():
    for m in (euclidean(R2), conformal_poly(R2), round_sphere()):
        q = [1.0, 0.5]
        assert metric_norm(m, TangentState(0.4, q, [0.0, 0.0])) == 0.0


def test_indefinite_metric_is_reported_with_point():
    bad = MetricField(R1, lambda t, q: -np.ones(np.shape(q)[:-1] + (1, 1)))
    with pytest.raises(MetricError, match="t="):
        metric_norm(bad, TangentState(0.5, [2.0], [1.0]))


# -- Christoffel symbols -------------------------------------------------------------

def test_flat_christoffels_vanish():
    assert np.all(christoffel(euclidean(R2), 0.3, np.array([1.0, 2.0])) == 0)


def test_sphere_christoffels_at_quarter_turn():
    gam = christoffel(round_sphere(), 0.0, np.array([math.pi / 4, 0.0]))
    assert gam[0, 1, 1] == pytest.approx(-0.5, abs=1e-12)
    assert gam[1, 0, 1] == pytest.approx(1.0, abs=1e-12)
    assert gam[1, 1, 0] == pytest.approx(1.0, abs=1e-12)


@given(st.floats(-3, 3))
def test_conformal_christoffels_vanish_at_every_time(t):
    assert np.all(christoffel(conformal_exp(R2), t, np.array([0.5, -1.0])) == 0)


CUSTOM = [["exp(t)*(1+q1^2)", "q1*q2/3"], ["q1*q2/3", "2+sin(q2)"]]


@given(st.floats(-1, 1), coord, coord)
def test_christoffels_symmetric_in_lower_indices(t, x, y):
    m = from_expressions(R2, CUSTOM)
    gam = christoffel(m, t, np.array([x, y]))
    np.testing.assert_allclose(gam, np.swapaxes(gam, -1, -2), atol=1e-9)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_central_difference_error_is_second_order(t, x, y):
    exact = from_expressions(R2, CUSTOM, analytic=True)
    q = np.array([x, y])
    h = 0.02
    err = [np.max(np.abs(exact.dq(t, q, step=s) - exact.dq(t, q))) for s in (h, h / 2)]
    err_t = [np.max(np.abs(exact.dt(t, q, step=s) - exact.dt(t, q))) for s in (h, h / 2)]
    for coarse, fine in (err, err_t):
        if coarse > 1e-9:
            assert 3.5 <= coarse / fine <= 4.5


# -- time derivative of the metric -----------------------------------------------------

def test_static_metric_has_no_drift():
    s = TangentState(2.0, [0.1, 0.2], [1.0, -1.0])
    assert dt_metric_quadratic_form(euclidean(R2), s) == 0.0


def test_exponential_metric_drift_is_twice_the_metric():
    s = TangentState(0.0, [0.0, 0.0], [1.0, 0.0])
    assert dt_metric_quadratic_form(conformal_exp(R2), s) == pytest.approx(2.0)


def test_polynomial_metric_drift():
    s = TangentState(1.0, [0.0], [2.0])
    assert dt_metric_quadratic_form(conformal_poly(R1), s) == pytest.approx(8.0)


# -- exponential map and distance ----------------------------------------------------------

def test_flat_exponential_map_is_translation():
    np.testing.assert_allclose(exp_map(euclidean(R2), 0.0, [0, 0], [3, 4]), [3, 4])


def test_sphere_exponential_map_along_equator():
    end = exp_map(round_sphere(), 0.0, [math.pi / 2, 0.0], [0.0, math.pi / 2])
    np.testing.assert_allclose(end, [math.pi / 2, math.pi / 2], atol=1e-9)


def test_zero_velocity_stays_put():
    p = np.array([1.0, 2.0])
    np.testing.assert_allclose(exp_map(round_sphere(), 0.0, p, [0.0, 0.0]), p)


def test_geodesic_through_pole_leaves_chart():
    with pytest.raises(ChartExitError) as info:
        exp_map(round_sphere(), 0.0, [0.5, 0.0], [-1.0, 0.0])
    assert 0.0 < info.value.parameter < 1.0


def test_flat_distance_by_shooting():
    res = distance(euclidean(R2), 0.0, [0, 0], [3, 4])
    assert res.converged
    assert res.value == pytest.approx(5.0, abs=1e-9)


def test_conformal_distance_scales():
    res = distance(conformal_exp(R1), 1.0, [0.0], [1.0])
    assert res.value == pytest.approx(math.e, rel=1e-9)
    assert res.cross_check_error < 1e-9


def test_sphere_meridian_distance():
    res = distance(round_sphere(), 0.0, [0.1, 0.0], [math.pi / 2, 0.0])
    assert res.value == pytest.approx(math.pi / 2 - 0.1, abs=1e-8)


def test_torus_distance_wraps_around():
    m = catalog("flat-torus", ChartManifold.torus([1.0]))
    res = distance(m, 0.0, [0.1], [0.9])
    assert res.value == pytest.approx(0.2, abs=1e-9)


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(-1, 1))
def test_shooting_agrees_with_closed_form_on_conformal_metric(p, q, t):
    m = conformal_exp(R2)
    vals, conv = rho(m, t, np.array(p), np.array([q]), method="shoot")
    exact, _ = rho(m, t, np.array(p), np.array([q]), method="closed")
    assert conv.all()
    assert vals[0] == pytest.approx(exact[0], abs=1e-8 * max(1.0, exact[0]))


def test_batched_distances_report_convergence_per_pair():
    out = distances(round_sphere(), 0.0, [[1.0, 0.0], [1.0, 0.0]], [[2.0, 0.0], [1.0, 1.0]])
    assert out["converged"].tolist() == [True, True]
    assert out["value"][0] == pytest.approx(1.0, abs=1e-9)


# -- proper functions ---------------------------------------------------------------

def test_proper_functions_at_basepoint():
    m = euclidean(R2)
    assert proper_R(m, [0, 0], 0.0, [0, 0]) == pytest.approx(1.0)
    assert proper_E(m, [0, 0], TangentState(0.0, [0, 0], [0, 0])) == pytest.approx(1.0)


def test_proper_functions_direct_formula():
    m = euclidean(R2)
    assert proper_R(m, [0, 0], 0.0, [3, 4]) == pytest.approx(6.0)
    assert proper_E(m, [0, 0], TangentState(0.0, [3, 4], [0, 1])) == pytest.approx(27.0)


def test_oscillator_orbit_has_constant_energy():
    t = np.linspace(0, 2 * math.pi, 50)
    E, _, _ = energies(euclidean(R1), [0.0], t, np.cos(t)[:, None], -np.sin(t)[:, None])
    np.testing.assert_allclose(E, 2.0, atol=1e-14)


@given(st.floats(-2, 2), st.floats(1e-6, 1e-3))
def test_distance_is_lipschitz_in_time(t, delta):
    m = conformal_poly(R2)
    p, q = np.zeros(2), np.array([[1.0, 2.0]])
    a, _ = rho(m, t, p, q)
    b, _ = rho(m, t + delta, p, q)
    assert abs(b[0] - a[0]) <= 10 * delta


def test_energy_grows_along_escaping_sequence():
    m = conformal_exp(R2)
    q = np.array([[r, -r] for r in np.geomspace(1, 1e6, 30)])
    E, _, _ = energies(m, np.zeros(2), 0.5, q, np.zeros_like(q))
    assert np.all(np.diff(E) > 0)
    assert E[-1] > 1e12
