#!/usr/bin/env python3
"""Track the charged-pair volume sum across scales.

For each scale r the scale-r word family is enumerated and ordered
pairs with distinct leading symbols that cannot be certified separated
contribute r^-2 * overlap * |I_a| * |I_b|.  A decaying sweep supports
summability of the non-transversal interaction; growth means the
chosen separation scale charges essentially all pairs.
"""

import argparse
import sys

from horseshoe.conditions import ntr_sweep
from horseshoe.maps import make_affine_example, make_baker


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--family", choices=("baker", "affine"), default="affine")
    ap.add_argument("--lam", type=float, default=0.6)
    ap.add_argument("--a", type=float, default=0.8)
    ap.add_argument("--b", type=float, default=0.55)
    ap.add_argument("--delta", type=float, default=None,
                    help="separation scale; affine default (a-b)/4, baker 0.1")
    ap.add_argument("--r-exp-min", type=int, default=3)
    ap.add_argument("--r-exp-max", type=int, default=7)
    ap.add_argument("--pair-budget", type=int, default=20_000)
    ap.add_argument("--tail-depth", type=int, default=48)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--csv", type=str, default=None)
    args = ap.parse_args(argv)

    if args.family == "baker":
        spec = make_baker(args.lam)
        delta = 0.1 if args.delta is None else args.delta
    else:
        spec = make_affine_example(args.a, args.b)
        delta = (args.a - args.b) / 4.0 if args.delta is None else args.delta

    r_list = [2.0 ** -k for k in range(args.r_exp_min, args.r_exp_max + 1)]
    sweep = ntr_sweep(spec, r_list, delta, pair_budget=args.pair_budget,
                      tail_depth=args.tail_depth, seed=args.seed)
    print(f"map {spec.label}  delta = {delta}")
    for rep in sweep.reports:
        tag = " (subsampled)" if rep.subsampled else ""
        print(f"  r = {rep.r:10.6f}  pairs {rep.n_pairs:>9}  charged "
              f"{rep.charged_fraction:6.1%}  sum = {rep.sum_value:.6g}"
              f"{tag}")
    if sweep.exponent is None:
        print("all sums zero; no decay fit")
    else:
        print(f"fitted decay exponent {sweep.exponent:+.4f}")
    if args.csv:
        sweep.to_csv(args.csv)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
