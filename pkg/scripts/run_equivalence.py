"""Norm ratios of random atoms on dyadic systems for several N.

For each N prints the min/max of every pairwise ratio of
(sum|eta|, ||S||_1, ||P||_1, sign-flip supremum) and writes a JSON report.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from splineortho.analysis import equivalence_report, random_atom
from splineortho.knotseq import dyadic_sequence
from splineortho.orthosys import build_system


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--N", default="64,128,256")
    p.add_argument("--atoms", type=int, default=50)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results/equivalence.json"))
    args = p.parse_args()

    out = {}
    for N in [int(v) for v in args.N.split(",")]:
        system = build_system(dyadic_sequence(args.k, N - 1), N)
        rng = np.random.default_rng(args.seed)
        atoms = [random_atom(rng) for _ in range(args.atoms)]
        reps = [equivalence_report(a, system, args.trials, args.seed + i) for i, a in enumerate(atoms)]
        bands = {}
        for key in reps[0].ratios:
            v = np.array([r.ratios[key] for r in reps])
            bands[key] = {"min": float(v.min()), "max": float(v.max())}
        out[N] = {"bands": bands, "lengths": [a.length for a in atoms],
                  "norms": [r.norms for r in reps]}
        print(f"N={N}: " + "  ".join(f"{k} [{b['min']:.3f}, {b['max']:.3f}]" for k, b in bands.items()))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
