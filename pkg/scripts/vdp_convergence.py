"""van der Pol: iterates mu^n and error decay against the simulated explosion point.

    python3 scripts/vdp_convergence.py --eps 0.02 0.05 0.1 --csv vdp_convergence.csv
"""
import argparse
import csv
import sys

from canard.algorithm import find_fold, iterate
from canard.expr import SystemDef
from canard.oracle import locate_explosion


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eps", type=float, nargs="+", default=[0.02, 0.05, 0.1])
    p.add_argument("--max-iter", type=int, default=3)
    p.add_argument("--no-oracle", action="store_true", help="skip the simulation")
    p.add_argument("--csv", help="write one row per (eps, n)")
    args = p.parse_args(argv)

    rows = []
    for eps in args.eps:
        sys_ = SystemDef.from_strings("y - x^3/3 + x", "eps*(z - x)", {"eps": eps})
        run = iterate(find_fold(sys_, 0.9, 0.9, (0.5, 1.5), -0.6), max_iter=args.max_iter)
        z_star = float("nan")
        if not args.no_oracle:
            z_star = locate_explosion(sys_, 0.95 if eps >= 0.1 else 0.98, 1.0, 30).z_star
        print(f"eps = {eps}  (z* = {z_star:.10f})")
        print(f"{'n':>3} {'mu^n':>16} {'delta_n':>12} {'ratio/eps':>10} {'(mu^n - z*)/eps^(n+1)':>22}")
        prev = None
        for s in run.steps:
            ratio = s.delta / prev / eps if prev else float("nan")
            scaled = (s.mu - z_star) / eps ** (s.n + 1)
            print(f"{s.n:>3d} {s.mu:>16.12f} {s.delta:>12.4e} {ratio:>10.3f} {scaled:>22.4f}")
            rows.append([eps, s.n, s.mu, s.delta, z_star])
            prev = s.delta
        print()
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "n", "mu", "delta", "z_star"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
