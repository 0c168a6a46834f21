"""Regenerate the golden PRB-demand pmfs by direct sampling.

Each file holds the empirical pmf of 10^7 simulated UEs (uniform position,
Bernoulli blockage, lowest-MCS-that-fits), independent of the analytic
CDF machinery in thzmm.demand.

    python scripts/regen_goldens.py [--samples N] [--seed S]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import pmf_from_sinr_samples, sample_native_sinr, sample_rerouted_sinr  # noqa: E402
from thzmm import radio  # noqa: E402
from thzmm.scenario import default_scenario  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"


def _accumulate(sampler, scn, samples, rng, chunk=1_000_000):
    counts, infeasible, done = None, 0.0, 0
    while done < samples:
        n = min(chunk, samples - done)
        p, inf = pmf_from_sinr_samples(scn, sampler(n, rng))
        p = p * n
        if counts is None:
            counts = p
        else:
            if len(p) > len(counts):
                counts = np.pad(counts, (0, len(p) - len(counts)))
            counts[:len(p)] += p
        infeasible += inf * n
        done += n
    return counts / samples, infeasible / samples


def write(path, probs, infeasible, samples, seed):
    lines = [f"# samples={samples} seed={seed}", "r,probability"]
    lines += [f"{r},{float(p)!r}" for r, p in enumerate(probs) if p > 0]
    lines.append(f"infeasible,{float(infeasible)!r}")
    path.write_text("\n".join(lines) + "\n")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=20240)
    args = ap.parse_args(argv)
    scn = default_scenario()
    radii = radio.coverage_radii(scn)
    GOLDEN.mkdir(parents=True, exist_ok=True)
    jobs = {
        "pmf_native.csv": lambda n, rng: sample_native_sinr(scn, radii.r_M, n, rng),
        "pmf_rerouted_A1.csv": lambda n, rng: sample_rerouted_sinr(
            scn, radii.r_M, radii.r_T_A1, n, rng),
    }
    for i, (name, sampler) in enumerate(jobs.items()):
        rng = np.random.default_rng([args.seed, i])
        probs, inf = _accumulate(sampler, scn, args.samples, rng)
        write(GOLDEN / name, probs, inf, args.samples, args.seed)
        print(f"{name}: mean {np.dot(np.arange(len(probs)), probs):.4f} PRBs, infeasible {inf:.3g}")


if __name__ == "__main__":
    main()
