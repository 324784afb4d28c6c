import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clebschlab.diagnostics import (SERIES_COLUMNS, DiagnosticsSeries, EnstrophyFunctional, FormBundle,
                                    boundary_circulation, dQdt_measured, dQdt_predicted, enstrophy_2d,
                                    enstrophy_rel, enstrophy_semirel, helicity_rel, helicity_t, relative_drift,
                                    s_flow, vartheta_rel, vartheta_semirel)
from clebschlab.errors import DegenerateDensityError
from clebschlab.expr import compile_field
from clebschlab.flow import QuadratureDomain
from clebschlab.scenarios import build
from clebschlab.state import ClebschState, EquationOfState

SMALL = QuadratureDomain((-1, -1, -1), (1, 1, 1), 4, 2)


def expr_state(**fields):
    base = dict(phi="-x0", lam1="0", sig1="0", lam2="0", sig2="0", rho="1")
    base.update(fields)
    return ClebschState(**{k: compile_field(v) for k, v in base.items()})


def test_vartheta_hand_example():
    st_ = expr_state(lam1="x1", sig1="x2", sig2="x3", rho="2")
    assert np.allclose(vartheta_semirel(st_, np.random.default_rng(0).normal(size=(5, 4))), 0.5)


def test_vartheta_constant_lambda_is_zero():
    st_ = expr_state(lam1="3", sig1="x2", sig2="x3")
    assert np.allclose(vartheta_semirel(st_, np.zeros((2, 4))), 0.0)


def test_vartheta_planar_is_vorticity_over_density():
    sc = build("planar")
    st_ = sc.state()
    p = np.array([[0.0, 0.3, -0.2, 0.25]])
    gl, gs = sc.initial.lam1.gradient(p[:, 1:]), sc.initial.sig1.gradient(p[:, 1:])
    wz = gl[:, 0] * gs[:, 1] - gl[:, 1] * gs[:, 0]
    assert np.allclose(vartheta_semirel(st_, p), wz / sc.initial.rho(p[:, 1:]))


def test_vanishing_density_guarded():
    st_ = expr_state(lam1="x1", sig1="x2", sig2="x3", rho="0")
    with pytest.raises(DegenerateDensityError):
        vartheta_semirel(st_, np.zeros((1, 4)), floor=1e-12)


@pytest.mark.parametrize("spec,x,fx,fpx", [("id", 2.0, 2.0, 1.0), ("x^2", 3.0, 9.0, 6.0), ("power:3", 2.0, 8.0, 12.0)])
def test_functional_parse(spec, x, fx, fpx):
    f = EnstrophyFunctional.parse(spec)
    assert float(f.f(x)) == fx and float(f.fprime(x)) == fpx


def test_custom_functional_checked():
    EnstrophyFunctional.custom(np.sin, np.cos)
    with pytest.raises(ValueError):
        EnstrophyFunctional.custom(np.sin, np.sin)
    with pytest.raises(ValueError):
        EnstrophyFunctional.parse("cube")


def test_rest_fluid_constant_diagnostics():
    sc = build("rest")
    b = FormBundle(sc.state())
    f = EnstrophyFunctional.power(2)
    q0 = enstrophy_semirel(b, f, SMALL, 0.0)
    assert enstrophy_semirel(b, f, SMALL, 0.7) == q0
    assert enstrophy_rel(b, f, SMALL, 0.7) == pytest.approx(q0, rel=1e-14)
    assert dQdt_predicted(b, f, SMALL, 0.3) == 0.0


def test_boost_prediction_vanishes():
    sc = build("boost")
    b = FormBundle(sc.state())
    assert dQdt_predicted(b, EnstrophyFunctional.identity(), SMALL, 0.4) == 0.0


def test_rel_vartheta_matches_semirel_at_rest_and_s0():
    sc = build("rest")
    b = FormBundle(sc.state())
    fmap = s_flow(b, SMALL, 0.0)
    theta, _ = vartheta_rel(b, fmap)
    assert np.allclose(theta, vartheta_semirel(b, fmap.y))


def test_rel_vartheta_constant_per_node(shear_bundle):
    sc, b = shear_bundle
    t0, _ = vartheta_rel(b, s_flow(b, SMALL, 0.0))
    t1, _ = vartheta_rel(b, s_flow(b, SMALL, 1.0))
    assert np.max(np.abs(t1 - t0)) < 1e-6


def test_shear_frozen_values(shear_bundle):
    # default resolution (16^3 nodes, 64 steps per unit)
    sc, b = shear_bundle
    f = EnstrophyFunctional.power(2)
    assert enstrophy_semirel(b, f, sc.domain, 0.0) == pytest.approx(3.179398378863256, rel=1e-12)
    assert enstrophy_rel(b, f, sc.domain, 1.0) == pytest.approx(3.1154226376707, rel=1e-11)


def test_shear_drift_law_at_one_time(shear_bundle):
    sc, b = shear_bundle
    f = EnstrophyFunctional.power(2)
    pred = dQdt_predicted(b, f, SMALL, 0.5)
    meas = dQdt_measured(b, f, SMALL, 0.5)
    assert abs(pred) > 1e-2
    assert abs(meas - pred) < 1e-4 * abs(pred)


def test_planar_oracles():
    sc = build("planar")
    st_ = sc.state()
    dom = QuadratureDomain(sc.domain.lo, sc.domain.hi, 4, (4, 4, 1))
    f = EnstrophyFunctional.identity()
    q = enstrophy_semirel(st_, f, dom, 0.5)
    assert q == pytest.approx(enstrophy_2d(sc, f, 0.5), rel=1e-10)
    # Stokes: area integral (order 8) against the loop integral of the boundary
    fine = QuadratureDomain(sc.domain.lo, sc.domain.hi, 8, (4, 4, 1))
    q8 = enstrophy_semirel(st_, f, fine, 0.5)
    assert q8 == pytest.approx(boundary_circulation(st_, dom, 0.5), rel=1e-12)
    assert helicity_t(st_, dom, 0.5) == 0.0


def test_zero_vorticity_gives_mass():
    sc = build("planar")
    init = sc.initial
    from dataclasses import replace

    from clebschlab.scenarios import const3

    flat = replace(sc, initial=replace(init, lam1=const3(0.7)))
    f = EnstrophyFunctional.power(2)
    mass = enstrophy_2d(flat, EnstrophyFunctional.parse("power:0"), 0.0)
    assert enstrophy_2d(flat, f, 0.3) == 0.0
    dom = sc.domain
    assert mass == pytest.approx(sc.initial.rho(dom.nodes) @ dom.weights, rel=1e-12)


def test_helicity_conserved_for_compact_support():
    sc = build("helicity")
    b = FormBundle(sc.state())
    dom = QuadratureDomain(sc.domain.lo, sc.domain.hi, 4, 3)
    h0, h1 = helicity_rel(b, dom, 0.0), helicity_rel(b, dom, 0.5)
    assert abs(h0) > 0.1
    assert abs(h1 - h0) < 1e-6 * abs(h0)


def test_series_csv_roundtrip(tmp_path):
    s = DiagnosticsSeries()
    s.append(param=0.0, Q=1.0, frakQ=2.0)
    s.append(param=0.5, Q=1.25, frakQ=2.0)
    path = tmp_path / "series.csv"
    s.write_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(SERIES_COLUMNS)
    back = DiagnosticsSeries.read_csv(path)
    assert back.rows[1]["Q"] == 1.25 and math.isnan(back.rows[0]["helicity_t"])
    with pytest.raises(ValueError):
        s.append(param=0.5)


def test_series_header_golden():
    assert SERIES_COLUMNS == ("param", "Q", "dQdt_meas", "dQdt_pred", "frakQ", "helicity_t", "helicity_rel",
                              "norm_resid_max", "continuity_resid_l2", "ohm_resid_l2")


@given(st.lists(st.floats(0.5, 2.0), min_size=2, max_size=10))
def test_relative_drift_bounds(vals):
    d = relative_drift(vals)
    assert d >= 0
    assert d == pytest.approx(max(abs(v - vals[0]) for v in vals) / abs(vals[0]))
