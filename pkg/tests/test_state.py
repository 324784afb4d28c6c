import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clebschlab.errors import CausalityError, ConfigError, DomainError, SingularStateError, UnphysicalEnthalpyError
from clebschlab.expr import compile_field
from clebschlab.forms import ScalarField
from clebschlab.state import (ClebschState, EquationOfState, FluidConstants, canonical_momentum, derived_fields,
                              enthalpy_from_norm, eos_enthalpy_derivative, eos_eval, eos_invert, four_velocity,
                              load_state, dump_state, lorentz_factor, proper_velocity, state_from_dict,
                              state_to_dict, swap_pairs)


def expr_state(phi, lam1="0", sig1="0", lam2="0", sig2="0", rho="1", **kw):
    f = {k: compile_field(v) for k, v in dict(phi=phi, lam1=lam1, sig1=sig1, lam2=lam2, sig2=sig2, rho=rho).items()}
    return ClebschState(**f, **kw)


def test_polytrope_values():
    eos = EquationOfState(rest_energy=1.0, K=1.0, Gamma=2.0)
    e, h, p = eos_eval(eos, 2.0)
    assert (float(e), float(h), float(p)) == (3.0, 5.0, 4.0)
    assert float(eos_invert(eos, 5.0)) == pytest.approx(2.0)


def test_gamma_two_closed_form_inverse():
    eos = EquationOfState(1.0, K=0.7, Gamma=2.0)
    h = np.array([1.0, 1.5, 4.0])
    assert np.allclose(eos_invert(eos, h), (h - 1.0) / (2 * 0.7))


@given(st.floats(0.05, 20.0), st.floats(0.05, 3.0), st.floats(1.1, 3.0))
def test_eos_roundtrip(rho, K, Gamma):
    eos = EquationOfState(1.0, K, Gamma)
    assert float(eos_invert(eos, eos_eval(eos, rho)[1])) == pytest.approx(rho, rel=1e-9)


@given(st.floats(0.1, 5.0))
def test_enthalpy_derivative_matches_difference(rho):
    eos = EquationOfState(1.0, 0.4, 5.0 / 3.0)
    h = 1e-6
    fd = (eos_eval(eos, rho + h)[1] - eos_eval(eos, rho - h)[1]) / (2 * h)
    assert float(eos_enthalpy_derivative(eos, rho)) == pytest.approx(float(fd), rel=1e-6)


def test_pressureless_inverse_warns_and_returns_reference():
    eos = EquationOfState(1.0, K=0.0, reference_density=2.5)
    with pytest.warns(RuntimeWarning):
        assert eos_invert(eos, 1.0) == 2.5


def test_enthalpy_below_rest_energy_rejected():
    with pytest.raises(UnphysicalEnthalpyError):
        eos_invert(EquationOfState(1.0, K=1.0), 0.5)


def test_nonpositive_density_rejected():
    with pytest.raises(DomainError):
        eos_eval(EquationOfState(), 0.0)


@pytest.mark.parametrize("kw", [dict(K=-1.0), dict(Gamma=1.0), dict(rest_energy=0.0)])
def test_invalid_eos(kw):
    with pytest.raises(ValueError):
        EquationOfState(**kw)


def test_lorentz_factor_and_four_velocity():
    assert float(lorentz_factor([0.6, 0, 0])) == pytest.approx(1.25)
    assert np.allclose(four_velocity([0.6, 0, 0]), [1.25, 0.75, 0, 0])
    with pytest.raises(CausalityError):
        lorentz_factor([0.0, 1.0, 0.0])


def test_boost_momentum_closure():
    st_ = expr_state("-1.25*x0 + 0.75*x1")
    p = np.random.default_rng(0).normal(size=(4, 4))
    assert np.allclose(enthalpy_from_norm(st_, p), 1.0)
    assert np.allclose(proper_velocity(st_)(p), [1.25, 0.75, 0.0, 0.0])
    U = proper_velocity(st_)(p)
    assert np.allclose(U[:, 0] ** 2 - np.sum(U[:, 1:] ** 2, axis=1), 1.0)


def test_clebsch_terms_enter_momentum():
    st_ = expr_state("-2*x0", lam1="x2", sig1="x1")
    P = canonical_momentum(st_).values(np.array([[0.0, 0.0, 3.0, 0.0]]))
    assert np.allclose(P, [[2.0, -3.0, 0.0, 0.0]])


def test_spacelike_momentum_is_singular():
    st_ = expr_state("x1")
    with pytest.raises(SingularStateError) as info:
        enthalpy_from_norm(st_, np.zeros((1, 4)))
    assert info.value.point is not None


def test_swap_pairs():
    st_ = expr_state("-x0", lam1="x1", sig1="x2", lam2="x3", sig2="x1")
    sw = swap_pairs(st_)
    assert sw.lam1 is st_.lam2 and sw.sig2 is st_.sig1


def test_derived_fields_norm_closure():
    st_ = expr_state("-1.25*x0 + 0.75*x1")
    d = derived_fields(st_)
    p = np.zeros((2, 4))
    assert np.allclose(d.h(p), 1.0)
    assert np.allclose(d.gamma(p), 1.25)
    assert np.allclose(d.u(p), [1.0, 0.6, 0, 0])


def test_snapshot_roundtrip(tmp_path):
    st_ = expr_state("-1.1*x0 + 0.3*x1", lam1="sin(x2)", sig1="x1", rho="1 + 0.1*x3",
                     eos=EquationOfState(1.0, 0.2, 1.5), constants=FluidConstants(c=2.0))
    d = state_to_dict(st_)
    d["params"] = {"a": 0.3}
    d["fields"]["phi"] = {"expr": "-1.1*x0 + a*x1"}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(d))
    back = load_state(path)
    p = np.random.default_rng(1).normal(size=(5, 4))
    assert np.allclose(back.lam1(p), np.sin(p[:, 2]))
    assert np.allclose(back.phi(p), -1.1 * p[:, 0] + 0.3 * p[:, 1])
    assert back.eos == st_.eos and back.constants == st_.constants


def test_snapshot_format_checked():
    with pytest.raises(ConfigError):
        state_from_dict({"format": "other"})


def test_unserializable_field():
    st_ = expr_state("-x0")
    st_ = ClebschState(**{**st_.__dict__, "rho": ScalarField(lambda p: p[:, 0] * 0 + 1)})
    with pytest.raises(ValueError):
        state_to_dict(st_)
