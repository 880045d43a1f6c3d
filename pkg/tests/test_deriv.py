import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import derivative_property_violations, probe_points, relu_second_directional
from minimax_cert import deriv
from minimax_cert.deriv import QuotientScheme, lagrange_weights_at_zero
from minimax_cert.problems import build_example, pack_relu_net, relu_net_value, unpack_relu_net


def absval(x):
    return abs(float(x[0]))


def square(x):
    return float(x[0] ** 2)


def cube(x):
    return float(x[0] ** 3)


NS935 = build_example("nonsmooth-935")
ORIGIN = np.zeros(1)


def f_y(w):
    return NS935.eval(ORIGIN, w)


def f_x(v):
    return NS935.eval(v, ORIGIN)


# -- scheme ----------------------------------------------------------------

def test_scheme_validation():
    with pytest.raises(ValueError):
        QuotientScheme(t_sequence=(1e-3, 1e-2))
    with pytest.raises(ValueError):
        QuotientScheme(perturbation_count=0)
    with pytest.raises(ValueError):
        QuotientScheme(mode="sideways")
    with pytest.raises(ValueError):
        QuotientScheme.from_json({"bogus": 1})


def test_scheme_json_round_trip():
    s = QuotientScheme(seed=4, perturbation_count=8)
    assert QuotientScheme.from_json(s.to_json()) == s


def test_lagrange_weights_reproduce_polynomials():
    ts = [1e-2, 1e-3, 1e-4]
    w = lagrange_weights_at_zero(ts)
    for p in (lambda t: 3.0, lambda t: 3.0 + 2.0 * t, lambda t: 1.0 - t + 5.0 * t * t):
        assert w @ np.array([p(t) for t in ts]) == pytest.approx(p(0.0), abs=1e-10)


# -- first order -----------------------------------------------------------

def test_subderivative_cases():
    assert deriv.subderivative(absval, [0.0], [1.0]).value == pytest.approx(1.0, abs=1e-9)
    assert deriv.subderivative(square, [1.0], [1.0]).value == pytest.approx(2.0, abs=1e-8)
    for w in (1.0, -1.0, 0.3):
        assert abs(deriv.subderivative(f_y, ORIGIN, [w]).value) <= 1e-9


def test_clarke_cases():
    assert deriv.clarke_directional(absval, [0.0], [1.0]).value == pytest.approx(1.0, abs=1e-9)
    # limsup over base points left of 0 picks up the slope +1 of -|x|
    neg = deriv.clarke_directional(lambda x: -absval(x), [0.0], [1.0])
    assert neg.value == pytest.approx(1.0, abs=1e-9)
    for v in (1.0, -1.0):
        assert abs(deriv.clarke_directional(f_x, ORIGIN, [v]).value) <= 1e-9


def test_clarke_of_negative_abs_brute_force():
    # independent route: the quotient over a dense grid of base points
    xs = np.linspace(-1e-3, 1e-3, 2001)
    t = 1e-7
    q = (-np.abs(xs + t) + np.abs(xs)) / t
    assert q.max() == pytest.approx(1.0, abs=1e-9)


def test_directional_cases():
    assert deriv.directional(square, [1.0], [-1.0]).value == pytest.approx(-2.0, abs=1e-8)
    assert deriv.directional(absval, [0.0], [-1.0]).value == pytest.approx(1.0, abs=1e-9)


def test_zero_direction_is_exact_zero():
    est = deriv.subderivative(absval, [0.0], [0.0])
    assert est.value == 0.0 and est.converged


# -- second order ----------------------------------------------------------

def test_second_subderivative_cases():
    assert deriv.second_subderivative(square, [0.0], [1.0]).value == pytest.approx(2.0, abs=1e-8)
    assert abs(deriv.second_subderivative(lambda x: abs(x[0]) ** 3, [0.0], [1.0]).value) < 1e-6
    assert abs(deriv.second_subderivative(f_y, ORIGIN, [1.0]).value) < 1e-6


def test_pinned_cases():
    est = deriv.second_subderivative_pinned(square, [0.0], [0.0], [1.0])
    assert est.value == pytest.approx(2.0, abs=1e-8)
    div = deriv.second_subderivative_pinned(absval, [0.0], [0.0], [1.0])
    assert div.diverged and not div.converged and div.value == QuotientScheme().cap


def test_pinned_equals_unpinned_when_first_order_vanishes():
    for w in (1.0, -0.5, 2.0):
        first = deriv.subderivative(f_y, ORIGIN, [w]).value
        assert abs(first) < 1e-9
        a = deriv.second_subderivative(f_y, ORIGIN, [w]).value
        b = deriv.second_subderivative_pinned(f_y, ORIGIN, [0.0], [w]).value
        assert a == pytest.approx(b, abs=1e-6)


def test_generalized_second_cases():
    assert deriv.generalized_second(square, [0.0], [1.0], [1.0]).value == pytest.approx(2.0, abs=1e-8)
    assert abs(deriv.generalized_second(cube, [0.0], [1.0], [1.0]).value) < 1e-6
    for v in (1.0, -1.0, 0.5):
        assert deriv.generalized_second(f_x, ORIGIN, [v], [v]).value >= -1e-9


def test_generalized_second_of_cube_brute_force():
    # expansion of the mixed quotient of x^3 is 6x' + 3(delta + t)
    xs = np.linspace(-1e-6, 1e-6, 201)
    t = d = 1e-5
    q = ((xs + d + t) ** 3 - (xs + d) ** 3 - (xs + t) ** 3 + xs ** 3) / (d * t)
    assert np.allclose(q, 6 * xs + 3 * (d + t), atol=1e-5)
    assert abs(q).max() < 1e-4


def test_second_directional_smooth():
    est = deriv.second_directional(lambda x: float(np.sin(x[0])), [0.3], [1.0])
    assert est.value == pytest.approx(-np.sin(0.3), rel=1e-6)
    assert est.converged


def test_second_order_resolves_nearby_kink():
    # a kink at distance 2e-3: the coarse step straddles it, the finer ones do not
    g = lambda x: float(max(x[0] - 2e-3, 0.0) + x[0] ** 2)
    est = deriv.second_subderivative(g, [0.0], [1.0])
    assert est.converged and est.value == pytest.approx(2.0, abs=1e-5)


# -- properties ------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.sampled_from([0.5, 2.0]))
def test_homogeneity_on_abs_plus_quadratic(x, v, lam):
    g = lambda z: float(abs(z[0]) + 0.5 * z[0] ** 2)
    a = deriv.subderivative(g, [x], [lam * v]).value
    b = deriv.subderivative(g, [x], [v]).value
    assert a == pytest.approx(lam * b, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("name", ["quadratic-5xy", "xy-cos", "quartic-4x2y2", "nonsmooth-935"])
def test_property_suite_small_fixtures(name):
    worst = derivative_property_violations(build_example(name), count=20, seed=5)
    assert all(v <= 0 for v in worst.values()), worst


def test_relu_second_order_includes_weight_cross_term():
    # off the kinks the second derivative along (dW, db) is 2|U|^2 + 4 z . (dW2 s);
    # dropping the cross term would only be right when dW2 = 0
    prob = build_example("relu-net-F")
    shape, xi = prob.relu_shape, prob.relu_xi
    g = lambda w: relu_net_value(w, xi, shape)
    rng = np.random.default_rng(3)
    for z in probe_points(prob, 5, seed=3):
        x = z[:prob.n]
        v = rng.standard_normal(prob.n)
        exact = relu_second_directional(x, v, xi, shape)
        assert deriv.second_subderivative(g, x, v).value == pytest.approx(exact, abs=1e-5 * (1 + abs(exact)))
        W1, W2, b1, _ = unpack_relu_net(x, *shape)
        dW1, dW2, db1, db2 = unpack_relu_net(v, *shape)
        v = pack_relu_net(dW1, 0 * dW2, db1, db2)
        U = W2 @ ((W1 @ xi + b1 > 0) * (dW1 @ xi + db1)) + db2
        assert relu_second_directional(x, v, xi, shape) == pytest.approx(2 * U @ U, rel=1e-12)
