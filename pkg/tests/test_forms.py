import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clebschlab.errors import DegreeError, DimensionError
from clebschlab.forms import (MINKOWSKI, KForm, ScalarField, VectorField, basis, divergence, dx, ext_deriv, flat,
                              interior, lie_derivative, perm_sign, pullback_values, sharp, top_component,
                              volume_form, wedge)
from clebschlab.verification import (divergence_residual, random_field, random_form, random_points, random_vector,
                                     rescaling_residual)

seeds = st.integers(0, 2**31 - 1)


def coord(i):
    return ScalarField.coordinate(i)


@pytest.mark.parametrize("seq,sign", [((0, 1, 2), 1), ((1, 0, 2), -1), ((2, 0, 1), 1), ((0, 0, 1), 0)])
def test_perm_sign(seq, sign):
    assert perm_sign(seq) == sign


@pytest.mark.parametrize("k,count", [(0, 1), (1, 4), (2, 6), (3, 4), (4, 1)])
def test_basis_sizes(k, count):
    assert len(basis(4, k)) == count


def test_wedge_of_coordinate_differentials_is_volume():
    vol = wedge(dx(0), dx(1), dx(2), dx(3))
    pts = np.zeros((3, 4))
    assert np.allclose(top_component(vol)(pts), 1.0)
    assert np.allclose(top_component(wedge(dx(1), dx(0), dx(2), dx(3)))(pts), -1.0)


def test_component_sign_on_permuted_index():
    w = wedge(dx(1), dx(2))
    p = np.zeros((1, 4))
    assert w.component((2, 1))(p)[0] == -1.0


def test_evaluation_on_vectors_is_determinant():
    w = wedge(dx(1), dx(2))
    p = np.zeros((1, 4))
    a, b = np.array([[0, 2.0, 1.0, 0]]), np.array([[0, 3.0, 5.0, 0]])
    assert np.isclose(w(p, a, b)[0], 2 * 5 - 1 * 3)


def test_exterior_derivative_of_coordinate_product():
    # d(x1 dx2) = dx1 ^ dx2
    w = KForm(1, {(2,): coord(1)})
    dw = ext_deriv(w)
    p = np.random.default_rng(0).normal(size=(5, 4))
    assert np.allclose(dw.component((1, 2))(p), 1.0)
    assert np.allclose(dw.component((0, 3))(p), 0.0)


def test_ext_deriv_of_top_form_raises():
    with pytest.raises(DegreeError):
        ext_deriv(volume_form())


def test_top_component_requires_top_degree():
    with pytest.raises(DegreeError):
        top_component(dx(0))


def test_interior_of_time_direction():
    U = VectorField.constant([1.25, 0.75, 0.0, 0.0])
    assert np.isclose(interior(U, dx(0)).values(np.zeros((1, 4)))[0, 0], 1.25)
    iv = interior(VectorField.coordinate_basis(0), volume_form())
    assert np.allclose(iv.component((1, 2, 3))(np.zeros((1, 4))), 1.0)
    assert not iv.is_zero()


def test_sharp_flat_roundtrip_minkowski():
    X = VectorField.constant([2.0, 1.0, -1.0, 0.5])
    p = np.zeros((2, 4))
    assert np.allclose(flat(X).values(p)[0], MINKOWSKI.lower(np.array([2.0, 1.0, -1.0, 0.5])))
    assert np.allclose(sharp(flat(X))(p), X(p))


def test_divergence_of_linear_field():
    X = VectorField.from_components([coord(0).scale(2.0), coord(1), coord(2).scale(-1.0), ScalarField.constant(3.0)])
    assert np.allclose(divergence(X)(np.ones((4, 4))), 2.0)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        VectorField.from_components([coord(0), coord(1)])


@given(seeds, st.integers(0, 2))
def test_dd_is_zero(seed, k):
    rng = np.random.default_rng(seed)
    w = random_form(rng, k)
    assert np.max(np.abs(ext_deriv(ext_deriv(w)).values(random_points(rng, 8)))) == 0.0


@given(seeds, st.sampled_from([(0, 1), (1, 1), (1, 2), (2, 1)]))
def test_leibniz_rule(seed, degrees):
    rng = np.random.default_rng(seed)
    k, l = degrees
    a, b = random_form(rng, k), random_form(rng, l)
    pts = random_points(rng, 8)
    lhs = ext_deriv(wedge(a, b), structural=False).values(pts)
    rhs = (wedge(ext_deriv(a), b) + wedge(a, ext_deriv(b)).scale((-1) ** k)).values(pts)
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(seeds, st.integers(1, 3))
def test_graded_commutativity(seed, k):
    rng = np.random.default_rng(seed)
    a, b = random_form(rng, k), random_form(rng, 1)
    pts = random_points(rng, 6)
    assert np.allclose(wedge(a, b).values(pts), (-1) ** k * wedge(b, a).values(pts))


@given(seeds, st.integers(1, 3))
def test_rescaling_identity(seed, k):
    rng = np.random.default_rng(seed)
    assert rescaling_residual(random_field(rng), random_vector(rng), random_form(rng, k), random_points(rng, 8)) < 1e-9


@given(seeds, st.sampled_from([3, 4]))
def test_divergence_identity(seed, dim):
    rng = np.random.default_rng(seed)
    assert divergence_residual(random_vector(rng, dim), random_field(rng, dim), random_points(rng, 8, dim)) < 1e-9


@given(seeds)
def test_lie_derivative_of_function_is_directional_derivative(seed):
    rng = np.random.default_rng(seed)
    f, X = random_field(rng), random_vector(rng)
    pts = random_points(rng, 8)
    lhs = lie_derivative(X, f).values(pts)[:, 0]
    assert np.allclose(lhs, np.einsum("nm,nm->n", X(pts), f.gradient(pts)))


@given(seeds)
def test_fd_gradient_matches_exact(seed):
    rng = np.random.default_rng(seed)
    f = random_field(rng)
    pts = random_points(rng, 8)
    assert np.allclose(f.fd_gradient(pts), f.gradient(pts), atol=1e-7)


def test_pullback_of_volume_under_linear_map_is_determinant():
    A = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 3.0]])
    J = np.zeros((1, 4, 3))
    J[0, 1:, :] = A
    out = pullback_values(wedge(dx(1), dx(2), dx(3)), np.zeros((1, 4)), J)
    assert np.isclose(out[0, 0], np.linalg.det(A))


@pytest.mark.parametrize("h", [1e-2, 5e-3])
def test_fd_identities_have_second_order_error(h):
    from clebschlab.verification import fd_identity_orders

    res = fd_identity_orders(np.random.default_rng(7), steps=(2 * h, h, h / 2))
    for errs, orders in res.values():
        assert np.all(orders > 1.9)
