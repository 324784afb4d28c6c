"""Measured against predicted dQ/dt along a kinematic scenario.

    python3 scripts/drift_law.py [--scenario shear] [--samples 11]
"""

import argparse
import csv
import os
from dataclasses import dataclass

import numpy as np

from clebschlab.diagnostics import (EnstrophyFunctional, FormBundle, dQdt_measured, dQdt_predicted,
                                    differencing_noise_floor, enstrophy_semirel)
from clebschlab.scenarios import build


@dataclass
class DriftConfig:
    scenario: str = "shear"
    samples: int = 11
    t_max: float = 1.0
    delta: float = 0.02
    f: str = "x^2"
    output: str = "out/drift_law"


def run(cfg: DriftConfig):
    sc = build(cfg.scenario)
    f = EnstrophyFunctional.parse(cfg.f)
    b = FormBundle(sc.state())
    rows = []
    for t in np.linspace(0.0, cfg.t_max, cfg.samples):
        pred = dQdt_predicted(b, f, sc.domain, t)
        meas = dQdt_measured(b, f, sc.domain, t, cfg.delta)
        rows.append({"t": float(t), "Q": enstrophy_semirel(b, f, sc.domain, t), "pred": pred, "meas": meas,
                     "rel_error": abs(meas - pred) / abs(pred) if pred else float("nan")})
    floor = differencing_noise_floor([r["Q"] for r in rows], cfg.delta, sc.domain.size)
    return rows, floor


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default=DriftConfig.scenario)
    p.add_argument("--samples", type=int, default=DriftConfig.samples)
    p.add_argument("--output", default=DriftConfig.output)
    args = p.parse_args()
    cfg = DriftConfig(scenario=args.scenario, samples=args.samples, output=args.output)
    rows, floor = run(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    with open(os.path.join(cfg.output, f"{cfg.scenario}.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"noise floor {floor:.2e}")
    for r in rows:
        flag = "" if abs(r["pred"]) > 10 * floor else " (below 10x floor)"
        print(f"t={r['t']:.2f} pred={r['pred']:+.6e} meas={r['meas']:+.6e} rel={r['rel_error']:.1e}{flag}")


if __name__ == "__main__":
    main()
