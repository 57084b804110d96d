"""Uniform amplitude sweep over the oracle bracket of a job config.

    python3 scripts/amplitude_sweep.py configs/templator.cfg --points 41 --csv sweep.csv
"""
import argparse
import csv
import sys

import numpy as np

from canard.config import load_config
from canard.oracle import measure_cycle


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--z-lo", type=float)
    p.add_argument("--z-hi", type=float)
    p.add_argument("--csv")
    args = p.parse_args(argv)

    cfg = load_config(args.config)
    if cfg.oracle is None and (args.z_lo is None or args.z_hi is None):
        p.error("config has no [oracle] block; pass --z-lo and --z-hi")
    lo = args.z_lo if args.z_lo is not None else cfg.oracle.z_lo
    hi = args.z_hi if args.z_hi is not None else cfg.oracle.z_hi
    seed = cfg.oracle.start if cfg.oracle else (0.0, 0.0)
    rtol = cfg.oracle.rtol if cfg.oracle else 1e-9
    sys_ = cfg.system()
    rows = []
    for z in np.linspace(lo, hi, args.points):
        m = measure_cycle(sys_, float(z), seed, rtol=rtol)
        rows.append((float(z), m.amplitude, m.period))
        print(f"z = {z:.8f}  amplitude = {m.amplitude:.6f}  period = {m.period:.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["z", "amplitude", "period"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
