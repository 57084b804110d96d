"""Export the Templator fold functions (zeta0, Lambda, Lambda~, e0~) as CSV for plotting.

    python3 scripts/templator_functions.py --which 1 --out out/templator
"""
import argparse
import sys
from pathlib import Path

from canard import funspace as fs
from canard.algorithm import check_assumptions, find_fold
from canard.expr import SystemDef

GUESSES = {1: (0.0145, 0.42, 4.1), 2: (0.6, 0.97, 1.3)}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--which", type=int, choices=[1, 2], default=1)
    p.add_argument("--K", type=float, default=0.02)
    p.add_argument("--out", default="out/templator")
    args = p.parse_args(argv)

    sys_ = SystemDef.from_strings(
        "k_u*y^2 + k_T*y^2*x - q*x/(K + x)",
        "z - k_u*y^2 - k_T*y^2*x",
        dict(k_u=0.01, k_T=1.0, q=1.0, K=args.K),
    )
    fold = find_fold(sys_, *GUESSES[args.which][:2], None, GUESSES[args.which][2])
    diag = check_assumptions(fold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, g in [
        ("zeta0", fold.zeta0),
        ("lambda", fold.lam),
        ("lambda_tilde", fold.lam_tilde),
        ("e0_tilde", fs.deflate_root(fold.e0, fold.x0)),
    ]:
        fs.to_csv(g, out / f"{name}.csv")
    print(f"x0 = {fold.x0:.10f}, mu0 = {fold.mu0:.10f}, domain = [{fold.domain[0]:.6g}, {fold.domain[1]:.6g}]")
    for k, v in diag.rows():
        print(f"{k:<18} {v}")
    print(f"wrote CSVs to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
