import numpy as np
import pytest

from clebschlab.errors import DegenerateDensityError
from clebschlab.evolution import (Characteristics, ResidualNorm, continuity_residual_values, density_guard,
                                  kinematic_state, motion_residual_values, norm_identity_values, number_flux_form,
                                  phi_equation_residual_values, residual_continuity, static_state)
from clebschlab.forms import VectorField
from clebschlab.scenarios import build, names, shear_flow, uniform_flow
from clebschlab.state import eos_eval


def sample(sc, n=20, tmax=0.8, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = np.array(sc.domain.lo), np.array(sc.domain.hi)
    return np.column_stack([rng.uniform(0, tmax, n), lo + (hi - lo) * rng.uniform(size=(n, 3))])


def test_boost_feet_are_straight_lines():
    chars = Characteristics(uniform_flow([0.6, 0, 0]), t_ref=1.0)
    p = np.array([[0.5, 1.0, 0.2, -0.3]])
    foot, B = chars.feet(p)
    assert np.allclose(foot, [[0.7, 0.2, -0.3]])
    assert np.allclose(B[0, :, 1:], np.eye(3))
    assert np.allclose(B[0, :, 0], [-0.6, 0.0, 0.0])


def test_boost_state_translates_initial_data():
    sc = build("boost", beta=0.6)
    st = sc.state()
    p = sample(sc)
    shifted = p[:, 1:] - np.outer(p[:, 0], [0.6, 0, 0])
    assert np.allclose(st.lam1(p), sc.initial.lam1(shifted), atol=1e-13)
    assert np.allclose(st.rho(p), 1.0)
    h = float(eos_eval(sc.initial.eos, 1.0)[1])
    assert np.allclose(st.phi(p), -h * p[:, 0] / 1.25, atol=1e-12)


def test_rest_state_is_static():
    sc = build("rest")
    st, lift = sc.state(), static_state(sc.initial)
    p = sample(sc)
    for k in ("rho", "lam1", "sig1", "sig2"):
        assert np.allclose(getattr(st, k)(p), getattr(lift, k)(p))


@pytest.mark.parametrize("name", ["shear", "vortex", "abc3d", "compressive", "helicity", "planar", "boost"])
def test_kinematic_residuals_small(name):
    sc = build(name)
    st = sc.state()
    p = sample(sc)
    assert np.max(np.abs(norm_identity_values(st, p))) < 1e-12
    assert np.max(np.abs(motion_residual_values(st, p))) < 1e-8
    assert np.max(np.abs(phi_equation_residual_values(st, p))) < 1e-6


@pytest.mark.parametrize("name", ["compressive", "vortex"])
def test_continuity_residual_second_order_in_fd_step(name):
    sc = build(name)
    st = sc.state()
    p = sample(sc, 10)
    e = [np.max(np.abs(continuity_residual_values(st, p, h))) for h in (4e-3, 2e-3, 1e-3)]
    orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all(orders > 1.9)


def test_number_flux_at_rest():
    sc = build("rest")
    st = sc.state()
    U = VectorField.constant([1.0, 0, 0, 0])
    flux = number_flux_form(st.rho, U)
    p = sample(sc, 4)
    assert np.allclose(flux.component((1, 2, 3))(p), st.rho(p))
    assert np.allclose(flux.component((0, 2, 3))(p), 0.0)


def test_shear_lorentz_factor_gradient_exact():
    flow = shear_flow(0.5)
    g = flow.gamma
    p = np.array([[0.3, 0.1, 0.2, 0.0], [0.7, -0.4, 0.5, 0.3]])
    assert np.allclose(g.gradient(p), g.fd_gradient(p), atol=1e-8)


def test_residual_norm_weighting():
    r = np.array([3.0, 4.0])
    assert ResidualNorm.of(r) == ResidualNorm(4.0, np.sqrt(12.5))
    assert ResidualNorm.of(r, [1.0, 0.0]).l2 == 3.0
    assert ResidualNorm.of(np.array([[3.0, 4.0]])).sup == 5.0


def test_density_guard():
    assert np.array_equal(density_guard([1.0, 2.0], 1.0), [1.0, 2.0])
    with pytest.raises(DegenerateDensityError):
        density_guard([1.0, 1e-15], 1.0)


def test_weighted_continuity_norm():
    sc = build("compressive")
    st = sc.state()
    p = sample(sc, 8)
    rn = residual_continuity(st, p, np.ones(8), 1e-3)
    assert rn.sup >= rn.l2 > 0


def test_scenario_catalogue():
    assert set(names()) >= {"rest", "boost", "shear", "vortex", "abc3d", "planar", "helicity", "compressive",
                            "dyn_rest", "dyn_boost", "dyn_wave"}
    with pytest.raises(KeyError):
        build("nope")
    with pytest.raises(ValueError):
        build("shear", beta=1.2)
