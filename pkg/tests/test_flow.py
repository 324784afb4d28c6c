import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clebschlab.errors import PullbackDegeneracyError, TrajectoryEscapeError
from clebschlab.flow import (FlowMap, QuadratureDomain, fd_jacobian, gauss_box, get_threads, integrate_flow,
                             integrate_jacobian, integrate_trajectory, pairwise_sum, pullback_parameter_derivative,
                             pullback_threeform, set_threads, step_count, trace, write_worldlines)
from clebschlab.forms import KForm, ScalarField, VectorField, dx, wedge

K = 0.7


def hyperbolic():
    """X = (1, k x1, -k x2, 0): flow x1 e^{ks}, x2 e^{-ks}."""
    def fn(p):
        return np.stack([np.ones(len(p)), K * p[:, 1], -K * p[:, 2], np.zeros(len(p))], axis=1)

    def jac(p):
        J = np.zeros((len(p), 4, 4))
        J[:, 1, 1], J[:, 2, 2] = K, -K
        return J

    return VectorField(fn, jac)


BOOST = VectorField.constant([1.25, 0.75, 0.0, 0.0])


def test_boost_endpoint():
    y = integrate_trajectory(np.array([0.1, 0.2, 0.3]), 2.0, BOOST)
    assert np.allclose(y, [2.5, 1.6, 0.2, 0.3])


def test_hyperbolic_flow_and_jacobian():
    nodes = np.array([[0.5, 1.0, -0.4], [-0.2, 0.3, 0.9]])
    fm = integrate_flow(hyperbolic(), nodes, 1.0, steps_per_unit=64)
    assert np.allclose(fm.y[:, 1], nodes[:, 0] * np.exp(K), rtol=1e-9)
    assert np.allclose(fm.y[:, 2], nodes[:, 1] * np.exp(-K), rtol=1e-9)
    assert np.allclose(fm.jac[:, 1:, :], np.diag([np.exp(K), np.exp(-K), 1.0]), rtol=1e-9)
    assert np.allclose(fm.jac[:, 0, :], 0.0)


def test_variational_jacobian_matches_fd():
    X = VectorField.from_components([ScalarField.constant(1.0),
                                     ScalarField(lambda p: np.sin(p[:, 2]) + 0.1 * p[:, 0]),
                                     ScalarField(lambda p: p[:, 1] * p[:, 3]),
                                     ScalarField(lambda p: 0.3 * np.cos(p[:, 1]))])
    x0 = np.array([[0.2, -0.3, 0.5]])
    assert np.allclose(integrate_jacobian(x0, 0.8, X), fd_jacobian(x0, 0.8, X), atol=1e-6)


def test_rk4_fourth_order():
    nodes = np.array([[0.5, 1.0, -0.4]])
    exact = 0.5 * np.exp(3 * K)
    errs = [abs(integrate_flow(hyperbolic(), nodes, 3.0, n_steps=n).y[0, 1] - exact) for n in (12, 24, 48)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.8)


def test_flow_reversal():
    nodes = np.array([[0.5, 1.0, -0.4]])
    X = hyperbolic()
    y = trace(X, np.array([[0.0, 0.5, 1.0, -0.4]]), 1.0, 32)
    back = trace(VectorField(lambda p: -X._fn(p), lambda p: -X._jac(p)), y, 1.0, 32)
    assert np.allclose(back[0, 1:], nodes[0], atol=1e-8)


def test_escape_is_reported():
    X = VectorField(lambda p: np.stack([np.ones(len(p)), p[:, 1] ** 2, 0 * p[:, 1], 0 * p[:, 1]], axis=1))
    with pytest.raises(TrajectoryEscapeError), np.errstate(over="ignore", invalid="ignore"):
        integrate_trajectory(np.array([1.0, 0.0, 0.0]), 3.0, X, n_steps=200)


def test_degenerate_pullback_detected():
    fm = FlowMap("s", 1.0, np.zeros((1, 3)), np.zeros((1, 4)), np.zeros((1, 4, 3)))
    with pytest.raises(PullbackDegeneracyError):
        pullback_threeform(fm, wedge(dx(1), dx(2), dx(3)))


@pytest.mark.parametrize("lam,spu,n", [(1.0, 64, 64), (0.5, 64, 32), (0.01, 64, 1), (0.0, 64, 1), (1.0 / 3, 3, 1)])
def test_step_count(lam, spu, n):
    assert step_count(lam, spu) == n


@pytest.mark.parametrize("order", [1, 2, 4, 6])
def test_gauss_box_exact_for_polynomials(order):
    nodes, w = gauss_box((-1, 0, 2), (1, 0.5, 3), order, panels=(2, 1, 3))
    deg = 2 * order - 1
    approx = np.sum(w * nodes[:, 0] ** deg * nodes[:, 1] ** deg)
    exact = (1 - (-1) ** (deg + 1)) / (deg + 1) * 0.5 ** (deg + 1) / (deg + 1) * 1.0
    assert approx == pytest.approx(exact, abs=1e-12)


def test_quadrature_domain_metadata():
    dom = QuadratureDomain((-1, -1, -1), (1, 1, 1))
    assert dom.size == 16**3
    assert pairwise_sum(dom.weights) == pytest.approx(8.0, rel=1e-14)
    assert dom.metadata()["nodes"] == 4096
    assert dom.refined().size == 32**3


def test_invalid_box():
    with pytest.raises(ValueError):
        gauss_box((0, 0, 0), (1, 0, 1))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_pairwise_sum_close_to_fsum(xs):
    import math

    assert pairwise_sum(xs) == pytest.approx(math.fsum(xs), abs=1e-6 * (1 + sum(abs(x) for x in xs)))


def test_threads_do_not_change_results():
    rng = np.random.default_rng(3)
    nodes = rng.uniform(-1, 1, size=(3000, 3))
    X = hyperbolic()
    set_threads(1)
    a = integrate_flow(X, nodes, 0.7).jac
    set_threads(4)
    try:
        assert get_threads() == 4
        b = integrate_flow(X, nodes, 0.7).jac
    finally:
        set_threads(None)
    assert np.array_equal(a, b)


def test_lie_identity_along_boost():
    rho = ScalarField(lambda p: 1 + 0.2 * np.sin(p[:, 1]), lambda p: np.stack(
        [0 * p[:, 0], 0.2 * np.cos(p[:, 1]), 0 * p[:, 0], 0 * p[:, 0]], axis=1))
    omega = KForm(3, {(1, 2, 3): rho})
    nodes = np.random.default_rng(0).uniform(-1, 1, (10, 3))
    lhs, rhs = pullback_parameter_derivative(BOOST, nodes, 0.5, omega, dlam=1e-3)
    assert np.allclose(lhs, rhs, atol=1e-6)


def test_write_worldlines(tmp_path):
    path = tmp_path / "w.csv"
    write_worldlines(path, BOOST, np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 1.0, samples=4)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["node", "param", "x0", "x1", "x2", "x3"]
    assert len(rows) == 1 + 5 * 2
    last = rows[-1]
    assert float(last[2]) == pytest.approx(1.25) and float(last[3]) == pytest.approx(1.75)
