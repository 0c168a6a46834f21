"""Analytic metrics over every default sweep, as one CSV (plot-ready).

    python scripts/fig_sweeps.py [--out sweeps.csv] [--simulate --replications 20]

With --simulate each point is also simulated (slow); the simulated rows
carry standard errors.
"""

import argparse
import csv
import sys

from thzmm import sim, strategies, sweeps

METRICS = ("pi_N", "pi_O", "pi_O_mmw", "pi_O_thz", "utilization")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="CSV path (stdout if omitted)")
    ap.add_argument("--simulate", action="store_true")
    ap.add_argument("--replications", type=int, default=20)
    ap.add_argument("--horizon", type=float, default=1e5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["sweep", "key", "association", "strategy", "label", "value", "mode",
                *METRICS, *(f"{m}_se" for m in METRICS)])
    cfg = sim.SimConfig(seed=args.seed, horizon=args.horizon, replications=args.replications)
    for sw in sweeps.default_sweeps():
        head = [sw.name, sw.key, sw.association, sw.strategy, sw.label]
        for i, (v, scn) in enumerate(sw.points):
            r = strategies.run(scn)
            w.writerow([*head, v, "analytic", *(repr(getattr(r, m)) for m in METRICS),
                        *([""] * len(METRICS))])
            if args.simulate:
                est = sim.simulate_scenario(scn, sim.SimConfig(**{**cfg.__dict__, "seed": args.seed ^ i}))
                w.writerow([*head, v, "simulate", *(repr(est[m].mean) for m in METRICS),
                            *(repr(est[m].se) for m in METRICS)])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
