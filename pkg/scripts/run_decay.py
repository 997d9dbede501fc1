"""Decay diagnostics of orthonormal spline systems.

For dyadic and random sequences prints the decay base q, the constants of
the coefficient and tail bounds, the pooled coefficient slope and the
largest characteristic-interval count N0.
"""
import argparse

import numpy as np

from splineortho.knotseq import KnotSequence, dyadic_sequence, random_points
from splineortho.orthosys import build_system, max_N0, system_coefficient_slope, system_decay_report


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k", default="2,3,4")
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--random", type=int, default=3, help="number of random sequences")
    args = p.parse_args()

    print("k  sequence   q     C_coef    C_p1      C_p2      C_pinf    slope    N0")
    for k in [int(v) for v in args.k.split(",")]:
        seqs = [("dyadic", dyadic_sequence(k, args.N - 1))]
        seqs += [(f"random{s}", KnotSequence(k, tuple(random_points(args.N - 1, np.random.default_rng(s)))))
                 for s in range(1, args.random + 1)]
        for name, seq in seqs:
            system = build_system(seq, args.N)
            rep = system_decay_report(system)
            C = rep.C
            print(f"{k}  {name:9s} {rep.q!s:5s} {C['coef']:9.3g} {C['tail_p1']:9.3g} {C['tail_p2']:9.3g} "
                  f"{C['tail_pinf']:9.3g} {system_coefficient_slope(system):8.3f} {max_N0(system)[0]:4d}")


if __name__ == "__main__":
    main()
