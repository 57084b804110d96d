"""``canard check|analyze|oracle <config>``.

Exit codes: 0 success, 1 other failure, 2 fold not found, 3 config error,
4 Newton failure during the iteration, 5 oracle bracket without a jump.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import funspace as fs
from .algorithm import (
    BranchLostError,
    CanardError,
    FoldData,
    FoldNotFoundError,
    IterationError,
    LambdaTildeZeroError,
    check_assumptions,
    find_fold,
    iterate,
)
from .config import ConfigError, JobConfig, load_config
from .oracle import NoSignChangeError, OracleError, locate_explosion

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_FOLD = 2
EXIT_CONFIG = 3
EXIT_NEWTON = 4
EXIT_NO_JUMP = 5


def _fold(cfg: JobConfig) -> FoldData:
    return find_fold(
        cfg.system(),
        cfg.x_guess,
        cfg.z_guess,
        cfg.domain,
        cfg.y_seed,
        scan_radius=cfg.scan_radius,
    )


def _table(rows) -> str:
    out = []
    for key, val in rows:
        if isinstance(val, float):
            val = f"{val:.10g}" if abs(val) >= 1e4 or (val != 0 and abs(val) < 1e-4) else f"{val:.10f}"
        out.append(f"{key:<18} {val}")
    return "\n".join(out)


def _fold_rows(fold: FoldData):
    return [
        ("x0", fold.x0),
        ("mu0", fold.mu0),
        ("y0", fold.y0),
        ("domain", f"[{fold.domain[0]:.10g}, {fold.domain[1]:.10g}]"),
    ]


def cmd_check(cfg: JobConfig) -> int:
    fold = _fold(cfg)
    diag = check_assumptions(fold)
    print(_table(_fold_rows(fold) + diag.rows()))
    return EXIT_OK


def cmd_analyze(cfg: JobConfig) -> int:
    fold = _fold(cfg)
    diag = check_assumptions(fold)
    print(_table(_fold_rows(fold) + [("ratio", diag.ratio), ("case", diag.case_label)]))
    print()
    try:
        run = iterate(fold, max_iter=cfg.max_iter, tol=cfg.tol)
    except IterationError as exc:
        run = exc.run
        print(run.table())
        print(f"termination: error ({exc})")
        return EXIT_FAIL
    print(run.table())
    print(f"termination: {run.termination}")
    best = run.best
    print(f"best: n={best.n} mu={best.mu:.15f} delta={best.delta:.5e}")
    if cfg.csv:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fs.to_csv(best.zeta, out / "zeta_n.csv")
        run.to_csv(out / "errors.csv")
    return EXIT_NEWTON if run.termination == "newton_failure" else EXIT_OK


def cmd_oracle(cfg: JobConfig) -> int:
    if cfg.oracle is None:
        raise ConfigError("missing key: oracle.z_lo")
    ob = cfg.oracle
    amp_kw = {"rtol": ob.rtol}
    if ob.settle_time is not None:
        amp_kw["settle_time"] = ob.settle_time
    res = locate_explosion(cfg.system(), ob.z_lo, ob.z_hi, ob.n_bisect, seed=ob.start, **amp_kw)
    print(res.report())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "amplitude_sweep.csv")
    return EXIT_OK


_COMMANDS = {"check": cmd_check, "analyze": cmd_analyze, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="canard", description="Locate canard explosion points of planar slow-fast systems.")
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("config", help="job configuration file")
    p.add_argument("--max-iter", type=int, default=None, help="override algorithm.max_iter")
    p.add_argument("--tol", type=float, default=None, help="override algorithm.tol")
    p.add_argument("--out", default=None, help="output directory for CSV files")
    p.add_argument("--csv", action="store_true", help="write CSV artifacts")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(
            max_iter=args.max_iter, tol=args.tol, out_dir=args.out, csv=True if args.csv else None
        )
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FoldNotFoundError, BranchLostError, LambdaTildeZeroError) as exc:
        print(f"fold not found: {exc}", file=sys.stderr)
        return EXIT_FOLD
    except NoSignChangeError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_NO_JUMP
    except (CanardError, OracleError, fs.FunspaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
