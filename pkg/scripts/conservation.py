"""Relativistic enstrophy and helicity along the proper-time flow for several scenarios.

    python3 scripts/conservation.py [--scenarios shear vortex helicity] [--f id x^2]
"""

import argparse
import csv
import os
from dataclasses import dataclass

import numpy as np

from clebschlab.diagnostics import EnstrophyFunctional, FormBundle, enstrophy_rel, helicity_rel, s_flow
from clebschlab.scenarios import build


@dataclass
class ConservationConfig:
    scenarios: tuple = ("shear", "vortex", "helicity")
    functionals: tuple = ("id", "x^2")
    samples: int = 5
    output: str = "out/conservation"


def run(cfg: ConservationConfig):
    rows = []
    for name in cfg.scenarios:
        sc = build(name)
        b = FormBundle(sc.state())
        for s in np.linspace(0.0, sc.param_max, cfg.samples):
            fmap = s_flow(b, sc.domain, s)
            row = {"scenario": name, "s": float(s), "helicity": helicity_rel(b, sc.domain, s, fmap=fmap)}
            for label in cfg.functionals:
                row[f"frakQ[{label}]"] = enstrophy_rel(b, EnstrophyFunctional.parse(label), sc.domain, s, fmap=fmap)
            rows.append(row)
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenarios", nargs="+", default=list(ConservationConfig.scenarios))
    p.add_argument("--f", nargs="+", default=list(ConservationConfig.functionals))
    p.add_argument("--output", default=ConservationConfig.output)
    args = p.parse_args()
    cfg = ConservationConfig(scenarios=tuple(args.scenarios), functionals=tuple(args.f), output=args.output)
    rows = run(cfg)
    os.makedirs(cfg.output, exist_ok=True)
    with open(os.path.join(cfg.output, "conservation.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for name in cfg.scenarios:
        sub = [r for r in rows if r["scenario"] == name]
        for key in [k for k in sub[0] if k not in ("scenario", "s")]:
            v = np.array([r[key] for r in sub])
            drift = np.max(np.abs(v - v[0])) / max(abs(v[0]), 1e-300)
            print(f"{name:9s} {key:12s} start {v[0]:+.6e} relative drift {drift:.1e}")


if __name__ == "__main__":
    main()
