"""Semi-relativistic enstrophy drift as a function of the shear speed.

    python3 scripts/beta_sweep.py [--betas 0.05 0.1 0.2 0.4] [--output out/beta_sweep]
"""

import argparse
import csv
import os
from dataclasses import dataclass

from clebschlab.diagnostics import EnstrophyFunctional, FormBundle, enstrophy_semirel
from clebschlab.scenarios import build


@dataclass
class SweepConfig:
    betas: tuple = (0.05, 0.1, 0.2, 0.4)
    t_max: float = 1.0
    f: str = "x^2"
    steps_per_unit: int = 64
    output: str = "out/beta_sweep"


def sweep(cfg: SweepConfig):
    f = EnstrophyFunctional.parse(cfg.f)
    rows = []
    for beta in cfg.betas:
        sc = build("shear", beta=beta)
        b = FormBundle(sc.state(cfg.steps_per_unit))
        q0 = enstrophy_semirel(b, f, sc.domain, 0.0, cfg.steps_per_unit)
        q1 = enstrophy_semirel(b, f, sc.domain, cfg.t_max, cfg.steps_per_unit)
        rows.append({"beta": beta, "Q0": q0, "Q1": q1, "drift": abs(q1 - q0), "drift_over_beta2": abs(q1 - q0) / beta**2})
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--betas", type=float, nargs="+", default=list(SweepConfig.betas))
    p.add_argument("--output", default=SweepConfig.output)
    args = p.parse_args()
    cfg = SweepConfig(betas=tuple(args.betas), output=args.output)
    rows = sweep(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    with open(os.path.join(cfg.output, "beta_sweep.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"beta={r['beta']:<5} drift={r['drift']:.4e} drift/beta^2={r['drift_over_beta2']:.4f}")


if __name__ == "__main__":
    main()
