#!/usr/bin/env python3
"""Study of the strict golden-rotation preset (factor = coboundary of sin).

Sweeps envelope extrema against the orbit length, probes a range of sizes k,
and records the size-1 construction residuals.  Writes envelopes.csv,
phase.csv and summary.json to the output directory.
"""

import argparse
import csv
import json
import os

from lcsdyn import (
    TorusAction,
    birkhoff_table,
    build_mu,
    limit_estimates,
    properness_probe,
    strict_rotation_system,
)
from lcsdyn.birkhoff import extrema_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/strict_study")
    ap.add_argument("--grid", type=int, default=1024)
    ap.add_argument("--n-max", type=int, default=2000)
    ap.add_argument("--k-max", type=float, default=2.0)
    ap.add_argument("--k-step", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    sys_ = strict_rotation_system("golden", {"type": "trig", "sin": [[1, 1.0]]},
                                  grid_resolution=args.grid)
    table = birkhoff_table(sys_, args.grid, n_max=args.n_max)
    extrema_to_csv(table, os.path.join(args.out, "envelopes.csv"))
    est = limit_estimates(table)
    print(f"envelope gap at n={args.n_max}: [{est.L_minus:+.2e}, {est.L_plus:+.2e}]"
          f" (bound {est.error_bound:.2e})")

    with open(os.path.join(args.out, "phase.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "verdict", "escape_bound", "witness_n"])
        k = -args.k_max
        while k <= args.k_max + 1e-12:
            rep = properness_probe(TorusAction(sys_, k), n_max=5000, starts=64)
            w.writerow([f"{k:.4f}", rep.verdict,
                        rep.escape_bound if rep.escape_bound is not None else "",
                        rep.witness.n if rep.witness else ""])
            print(f"k={k:+.2f}: {rep.verdict}")
            k += args.k_step

    mu = build_mu(sys_, 1.0, (-10, 10), samples=500, rng=args.seed)
    summary = {
        "limit_estimate": est.to_json(),
        "construction_k1": {
            "n_used": mu.n_used,
            "mu_residual": mu.report.residual_max,
            "g_residual": mu.gcons.functional_residual(),
            "slope_margin": mu.report.slope_margin,
        },
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"size-1 construction: n={mu.n_used}, "
          f"mu residual {mu.report.residual_max:.2e}")


if __name__ == "__main__":
    main()
