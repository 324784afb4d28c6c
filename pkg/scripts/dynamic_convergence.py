"""Residual convergence of the dynamic solver under time-step halving.

    python3 scripts/dynamic_convergence.py [--grid 32] [--steps 8 16 32 64]
"""

import argparse
import csv
import os
from dataclasses import dataclass

import numpy as np

from clebschlab.dynamic import dyn_wave, level_residuals


@dataclass
class DynamicConvergenceConfig:
    grid: int = 32
    t_final: float = 0.5
    steps: tuple = (8, 16, 32, 64)
    amp: float = 0.05
    output: str = "out/dynamic_convergence"


def run(cfg: DynamicConvergenceConfig):
    rows = []
    for n in cfg.steps:
        sim = dyn_wave(n=cfg.grid, amp=cfg.amp).run(n, cfg.t_final / n)
        res = level_residuals(sim, n // 2)
        row = {"steps": n, "dt": cfg.t_final / n, "norm_max": max(r.norm_residual_max for r in sim.reports)}
        row.update({k: v.l2 for k, v in res.items()})
        rows.append(row)
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=DynamicConvergenceConfig.grid)
    p.add_argument("--steps", type=int, nargs="+", default=list(DynamicConvergenceConfig.steps))
    p.add_argument("--output", default=DynamicConvergenceConfig.output)
    args = p.parse_args()
    cfg = DynamicConvergenceConfig(grid=args.grid, steps=tuple(args.steps), output=args.output)
    rows = run(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    with open(os.path.join(cfg.output, "dynamic_convergence.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    keys = ("phi", "motion", "ohm", "continuity")
    for prev, cur in zip([None] + rows[:-1], rows):
        orders = "" if prev is None else "  orders " + " ".join(f"{k}={np.log2(prev[k] / cur[k]):.2f}" for k in keys)
        print(f"steps={cur['steps']:<3d} " + " ".join(f"{k}={cur[k]:.2e}" for k in keys) + orders)


if __name__ == "__main__":
    main()
