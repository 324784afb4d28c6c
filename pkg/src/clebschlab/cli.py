"""Command line front end: ``run``, ``verify`` and ``convergence``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import RunConfig, build_scenario, load_config
from .diagnostics import (DiagnosticsSeries, EnstrophyFunctional, FormBundle, SeriesOptions, dQdt_measured,
                          dQdt_predicted, differencing_noise_floor, enstrophy_rel, kinematic_series, relative_drift)
from .errors import ClebschLabError, ConfigError
from .evolution import residual_ohm
from .flow import QuadratureDomain, get_threads, pullback_parameter_derivative, set_threads

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STRICT = 0, 1, 2, 3, 4

CONSERVATION_TOL = 1e-4
DRIFT_LAW_TOL = 1e-2
NORM_TOL = 1e-6
ROUNDOFF = 1e-12


# --------------------------------------------------------------------------
# run


def series_for(cfg: RunConfig):
    """(scenario, series) for a parsed configuration."""
    sc, dom = build_scenario(cfg)
    r = cfg.run
    opts = SeriesOptions(f=cfg.functional, every=r.every, param_max=r.param_max,
                         steps_per_unit=cfg.resolution.steps_per_unit, delta=r.delta,
                         residual_stride=r.residual_stride, fd_step=cfg.resolution.fd_step,
                         enstrophy="enstrophy" in r.diagnostics, helicity="helicity" in r.diagnostics,
                         residuals="residuals" in r.diagnostics)
    if sc.mode == "dynamic":
        from .dynamic import dynamic_series

        n_steps = r.param_max / sc.dt
        if abs(n_steps - round(n_steps)) > 1e-9:
            raise ConfigError(f"run.param_max: {r.param_max} is not a multiple of the time step {sc.dt}")
        sc = replace(sc, n_steps=int(round(n_steps)), domain=dom)
        return sc, dynamic_series(sc, opts)
    sc = sc.with_domain(dom)
    return sc, kinematic_series(sc, opts)


def _drift(values):
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    if v.size < 2:
        return None
    spread = float(np.max(np.abs(v - v[0])))
    if spread <= ROUNDOFF * max(1.0, float(np.max(np.abs(v)))):
        return spread
    return relative_drift(v, floor=ROUNDOFF)


def summarize(sc, series: DiagnosticsSeries, cfg: RunConfig):
    col = series.column
    drifts = {k: _drift(col(k)) for k in ("Q", "frakQ", "helicity_t", "helicity_rel")}
    invariants = {}

    def judge(name, value, tol):
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return
        invariants[name] = {"value": value, "tol": tol, "pass": bool(value <= tol)}

    if "enstrophy" in cfg.run.diagnostics:
        judge("frakQ_conservation", drifts["frakQ"], CONSERVATION_TOL)
        pred, meas = col("dQdt_pred"), col("dQdt_meas")
        floor = differencing_noise_floor(col("Q"), cfg.run.delta, sc.domain.size)
        mask = np.abs(pred) > 10 * floor
        err = np.abs(meas[mask] - pred[mask]) / np.abs(pred[mask])
        invariants["drift_law"] = {"value": float(err.max()) if err.size else 0.0, "tol": DRIFT_LAW_TOL,
                                   "samples_checked": int(mask.sum()), "noise_floor": floor,
                                   "pass": bool(err.size == 0 or err.max() <= DRIFT_LAW_TOL)}
    if "helicity" in cfg.run.diagnostics:
        if getattr(sc, "params", {}).get("compact_support"):
            judge("helicity_conservation", drifts["helicity_rel"], CONSERVATION_TOL)
        if getattr(sc, "planar", False):
            hel = float(np.nanmax(np.abs(np.concatenate([col("helicity_t"), col("helicity_rel")]))))
            judge("planar_helicity_zero", hel, ROUNDOFF)
    residuals = {}
    if "residuals" in cfg.run.diagnostics:
        residuals = {"norm_max": float(np.nanmax(col("norm_resid_max"))),
                     "continuity_l2_max": float(np.nanmax(col("continuity_resid_l2"))),
                     "ohm_l2_max": float(np.nanmax(col("ohm_resid_l2")))}
        judge("norm_identity", residuals["norm_max"], NORM_TOL)
    return {
        "scenario": sc.name,
        "mode": sc.mode,
        "f": cfg.functional.label,
        "drifts": drifts,
        "residuals": residuals,
        "invariants": invariants,
        "passed": all(v["pass"] for v in invariants.values()),
        "provenance": {
            "config": cfg.echo(),
            "config_path": cfg.source,
            "version": __version__,
            "resolution": {**series.metadata, "threads": get_threads()},
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    threads = args.threads if args.threads is not None else cfg.run.threads
    set_threads(threads)
    try:
        sc, series = series_for(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ClebschLabError, FloatingPointError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        set_threads(None)
    out = args.output or cfg.run.output
    os.makedirs(out, exist_ok=True)
    series.write_csv(os.path.join(out, "series.csv"))
    summary = summarize(sc, series, cfg)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, inv in summary["invariants"].items():
        print(f"{name}: {inv['value']:.3e} (tol {inv['tol']:.0e}) {'pass' if inv['pass'] else 'FAIL'}")
    print(f"wrote {out}/series.csv and {out}/summary.json")
    if args.strict and not summary["passed"]:
        return EXIT_STRICT
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def cmd_verify(args):
    from .verification import run_suite

    set_threads(args.threads)
    try:
        results = run_suite(args.suite, seed=args.seed, inject_failure=args.inject_failure)
    finally:
        set_threads(None)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print("failing properties:")
        for r in failed:
            print(f"  {r.suite}.{r.name} inputs={json.dumps(r.inputs, default=float)}")
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------
# convergence

CONVERGENCE_COLUMNS = ("level", "steps_per_unit", "panels", "dt", "frakQ_drift", "lie_flow_residual",
                       "drift_law_error", "ohm_residual")
METRICS = ("frakQ_drift", "lie_flow_residual", "drift_law_error", "ohm_residual")


def kinematic_level(sc, level, f, base_spu=8, base_panels=1, s_max=1.0, t_probe=0.5):
    spu = base_spu * 2**level
    panels = base_panels * 2**level
    dom = QuadratureDomain(sc.domain.lo, sc.domain.hi, 4, panels)
    st = sc.state(spu)
    b = FormBundle(st)
    vals = [enstrophy_rel(b, f, dom, s, spu) for s in (0.0, 0.5 * s_max, s_max)]
    lhs, rhs = pullback_parameter_derivative(b.U, dom.nodes, 0.5 * s_max, b.slice_density, 0.04 / 2**level, spu)
    pred = dQdt_predicted(b, f, dom, t_probe, spu)
    meas = dQdt_measured(b, f, dom, t_probe, 0.08 / 2**level, spu)
    pts = np.column_stack([np.full(dom.size, sc.c * t_probe), dom.nodes])
    ohm = residual_ohm(st, pts[::8], dom.weights[::8], 1e-2 / 2**level).l2
    return {"level": level, "steps_per_unit": spu, "panels": panels, "dt": float("nan"),
            "frakQ_drift": relative_drift(vals, ROUNDOFF),
            "lie_flow_residual": float(np.max(np.abs(lhs - rhs))),
            "drift_law_error": abs(meas - pred) / max(abs(pred), ROUNDOFF) if abs(pred) > ROUNDOFF else abs(meas - pred),
            "ohm_residual": ohm}


def dynamic_level(sc, level, f, spu=32):
    from .dynamic import level_residuals

    dt = sc.dt / 2**level
    n = sc.n_steps * 2**level
    run = sc.run(n, dt)
    b = FormBundle(run.state())
    dom = sc.domain
    T = run.levels[-1].t
    vals = [enstrophy_rel(b, f, dom, s, spu) for s in (0.0, 0.5 * T, T)]
    lhs, rhs = pullback_parameter_derivative(b.U, dom.nodes, 0.5 * T, b.slice_density, 0.04 / 2**level, spu)
    pred = dQdt_predicted(b, f, dom, 0.5 * T, spu)
    meas = dQdt_measured(b, f, dom, 0.5 * T, 0.02, spu)
    ohm = level_residuals(run, n // 2)["ohm"].l2
    return {"level": level, "steps_per_unit": spu, "panels": dom.panels if np.isscalar(dom.panels) else max(dom.panels),
            "dt": dt, "frakQ_drift": relative_drift(vals, ROUNDOFF), "lie_flow_residual": float(np.max(np.abs(lhs - rhs))),
            "drift_law_error": abs(meas - pred) / max(abs(pred), ROUNDOFF), "ohm_residual": ohm}


def observed_order(prev, cur, ratio=2.0, noise=ROUNDOFF):
    """log_ratio(prev / cur), or None when both sit at round-off."""
    if prev <= noise and cur <= noise:
        return None
    if prev <= 0 or cur <= 0:
        return None
    return math.log(prev / cur) / math.log(ratio)


def convergence_table(name, levels, f=None):
    from .scenarios import build

    if levels < 3:
        raise ValueError("convergence needs at least three levels")
    f = f or EnstrophyFunctional.power(2)
    sc = build(name)
    fn = dynamic_level if sc.mode == "dynamic" else kinematic_level
    rows = [fn(sc, level, f) for level in range(levels)]
    for i, row in enumerate(rows):
        for m in METRICS:
            row[f"order_{m}"] = None if i == 0 else observed_order(rows[i - 1][m], row[m])
    return rows


def write_convergence(rows, path):
    header = list(CONVERGENCE_COLUMNS) + [f"order_{m}" for m in METRICS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(rows):
            out = []
            for k in header:
                v = row[k]
                if k.startswith("order_"):
                    out.append("" if i == 0 else ("n/a" if v is None else repr(float(v))))
                else:
                    out.append(repr(v) if isinstance(v, int) else repr(float(v)))
            w.writerow(out)


def cmd_convergence(args):
    set_threads(args.threads)
    try:
        rows = convergence_table(args.scenario, args.levels, EnstrophyFunctional.parse(args.f))
    except KeyError as exc:
        print(f"config error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ClebschLabError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        set_threads(None)
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, "convergence.csv")
    write_convergence(rows, path)
    for row in rows:
        orders = " ".join(
            f"{m}={'n/a' if row[f'order_{m}'] is None else format(row[f'order_{m}'], '.2f')}" for m in METRICS
        ) if row["level"] else ""
        print(f"level {row['level']}: " + " ".join(f"{m}={row[m]:.3e}" for m in METRICS) + (f" | {orders}" if orders else ""))
    print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="clebschlab", description="Clebsch-variable relativistic fluid diagnostics")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured scenario and write series.csv / summary.json")
    r.add_argument("--config", required=True)
    r.add_argument("--strict", action="store_true", help="exit 4 when an invariant fails")
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--output", default=None, help="override run.output")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="randomized property suites")
    v.add_argument("--suite", required=True, choices=("forms", "flow", "evolution", "diagnostics", "all"))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--inject-failure", action="store_true", help="append a failing property (harness self-test)")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("convergence", help="observed orders under geometric refinement")
    c.add_argument("--scenario", required=True)
    c.add_argument("--levels", type=int, default=3)
    c.add_argument("--f", default="x^2")
    c.add_argument("--output", default=".")
    c.add_argument("--threads", type=int, default=None)
    c.set_defaults(func=cmd_convergence)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
