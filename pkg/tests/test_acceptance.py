"""Acceptance criteria, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
under output capture).  Everything runs at the default resolution of 16^3
quadrature nodes and 64 RK4 steps per unit unless stated otherwise.
"""

import numpy as np
import pytest

from clebschlab.cli import main as cli_main
from clebschlab.cli import convergence_table
from clebschlab.diagnostics import (EnstrophyFunctional, FormBundle, boundary_circulation, dQdt_measured,
                                    dQdt_predicted, differencing_noise_floor, enstrophy_2d, enstrophy_rel,
                                    enstrophy_semirel, helicity_rel, helicity_t, relative_drift, s_flow, t_flow)
from clebschlab.dynamic import dyn_boost, dyn_wave, level_residuals
from clebschlab.flow import QuadratureDomain
from clebschlab.scenarios import build
from clebschlab.verification import run_suite

IDENTITY = EnstrophyFunctional.identity()
SQUARE = EnstrophyFunctional.power(2)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_operator_identities(report):
    results = run_suite("forms", seed=0) + run_suite("flow", seed=0)
    bad = [r.line() for r in results if not r.passed]
    worst = max(r.worst for r in results if r.kind == "max")
    orders = [r.worst for r in results if r.kind == "min"]
    report(1, "operator identities", not bad,
           f"{len(results)} properties, worst residual {worst:.1e}, min observed order {min(orders):.2f}"
           + (f"; failing: {bad}" if bad else ""))


def test_criterion_2_relativistic_enstrophy(report):
    drifts = {}
    for name in ("shear", "vortex"):
        sc = build(name, beta=0.5)
        b = FormBundle(sc.state())
        m0, m1 = s_flow(b, sc.domain, 0.0), s_flow(b, sc.domain, sc.param_max)
        for f in (IDENTITY, SQUARE):
            vals = [enstrophy_rel(b, f, sc.domain, s, fmap=m) for s, m in ((0.0, m0), (sc.param_max, m1))]
            drifts[f"{name}/{f.label}"] = relative_drift(vals)
    orders = {}
    for name in ("shear", "vortex"):
        rows = convergence_table(name, 3, SQUARE)
        orders[name] = min(r["order_frakQ_drift"] for r in rows[1:])
    ok = max(drifts.values()) <= 1e-4 and min(orders.values()) >= 2.0
    report(2, "relativistic enstrophy conservation", ok,
           f"max drift {max(drifts.values()):.1e} (tol 1e-4), min refinement order "
           f"{min(orders.values()):.2f} (need 2)")


def test_criterion_3_drift_law(report):
    sc = build("shear")
    b = FormBundle(sc.state())
    dom, delta = sc.domain, 0.02
    ts = np.linspace(0.0, 1.0, 5)
    q = [enstrophy_semirel(b, SQUARE, dom, t) for t in ts]
    pred = np.array([dQdt_predicted(b, SQUARE, dom, t) for t in ts])
    meas = np.array([dQdt_measured(b, SQUARE, dom, t, delta) for t in ts])
    floor = differencing_noise_floor(q, delta, dom.size)
    mask = np.abs(pred) > 10 * floor
    err = float(np.max(np.abs(meas - pred)[mask] / np.abs(pred[mask])))
    rows = convergence_table("shear", 3, SQUARE)
    order = min(r["order_drift_law_error"] for r in rows[1:])
    # frozen at the default resolution
    assert q[0] == pytest.approx(3.179398378863256, rel=1e-10)
    report(3, "semi-relativistic drift law", mask.sum() == 5 and err <= 1e-2 and order >= 2.0,
           f"{mask.sum()} samples above 10x floor {floor:.1e}, max rel error {err:.1e} (tol 1e-2), "
           f"min order {order:.2f}")


def test_criterion_4_nonrelativistic_limit(report):
    sc = build("shear")
    drift = {}
    for beta in (0.1, 0.2):
        b = FormBundle(build("shear", beta=beta).state())
        drift[beta] = abs(enstrophy_semirel(b, SQUARE, sc.domain, 1.0) - enstrophy_semirel(b, SQUARE, sc.domain, 0.0))
    ratio = drift[0.2] / drift[0.1]
    assert ratio == pytest.approx(4.065548662937743, rel=1e-8)
    report(4, "gamma -> 1 limit", 3.6 <= ratio <= 4.4,
           f"Q drift {drift[0.1]:.3e} at beta 0.1, {drift[0.2]:.3e} at beta 0.2, ratio {ratio:.3f} (band [3.6, 4.4])")


def test_criterion_5_planar_reduction(report):
    sc = build("planar", beta=1e-3)
    st = sc.state()
    dom = QuadratureDomain(sc.domain.lo, sc.domain.hi, 8, (4, 4, 1))
    worst = 0.0
    for f in (IDENTITY, SQUARE):
        for t in (0.0, 0.5, 1.0):
            q, q2 = enstrophy_semirel(st, f, dom, t), enstrophy_2d(sc, f, t, order=8)
            worst = max(worst, abs(q - q2) / abs(q2))
    circ = max(abs(enstrophy_semirel(st, IDENTITY, dom, t) - boundary_circulation(st, dom, t)) for t in (0.0, 1.0))
    report(5, "2D reduction", worst <= 1e-6 and circ <= 1e-10,
           f"max rel mismatch vs 2D oracle {worst:.1e} (tol 1e-6), |Q_id - circulation| {circ:.1e}")


def test_criterion_6_helicity(report):
    sc = build("helicity")
    b = FormBundle(sc.state())
    vals = [helicity_rel(b, sc.domain, s) for s in (0.0, 0.5, sc.param_max)]
    drift = relative_drift(vals)
    pl = build("planar")
    pb = FormBundle(pl.state())
    planar = max(abs(helicity_t(pb, pl.domain, 0.5)), abs(helicity_rel(pb, pl.domain, 0.5)))
    report(6, "relativistic helicity", drift <= 1e-4 and planar <= 1e-12,
           f"C(0) = {vals[0]:.6f}, drift {drift:.1e} (tol 1e-4), planar helicity {planar:.1e}")


def test_criterion_7_dynamic_consistency(report):
    wave = dyn_wave()
    run = wave.run()
    norm = max(r.norm_residual_max for r in run.reports)
    res = []
    for n in (8, 16, 32):
        r = level_residuals(wave.run(n, 0.5 / n), n // 2)
        res.append({k: v.l2 for k, v in r.items()})
    orders = {k: min(np.log2(res[i][k] / res[i + 1][k]) for i in range(2)) for k in ("phi", "motion", "ohm")}
    sc = dyn_boost()
    lv = sc.run().levels[-1]
    ex = sc.exact(lv.t, sc.grid.points)
    boost_err = max(float(np.max(np.abs(lv.fields[k].grid_values() - ex[k]))) for k in ("sig1", "phi"))
    boost_err = max(boost_err, float(np.max(np.abs(lv.U - ex["U"]))))
    ok = norm <= 1e-6 and min(orders.values()) >= 1.9 and boost_err <= 1e-6
    report(7, "dynamic-mode consistency", ok,
           f"norm {norm:.1e}, orders " + ", ".join(f"{k} {v:.2f}" for k, v in orders.items())
           + f", boost error after 10 steps {boost_err:.1e}")


def test_criterion_8_determinism(report, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[scenario]\nname = "shear"\n[resolution]\npanels = 2\nsteps_per_unit = 32\n'
                   '[run]\nparam_max = 0.5\nevery = 0.25\nseed = 7\nthreads = 2\n'
                   'diagnostics = ["enstrophy", "helicity"]\n')
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli_main(["run", "--config", str(cfg), "--output", str(out)]) == 0
        blobs.append((out / "series.csv").read_bytes())
    report(8, "determinism", blobs[0] == blobs[1], f"two runs, {len(blobs[0])} CSV bytes, identical={blobs[0] == blobs[1]}")
