import os
import sys
import logging
import argparse
from typing import List, Optional

from config import load_config, load_env
from coupler import run
from db import insert_run, list_runs
from errors import ConfigError, FitError, NSVError
from oracle import run_oracle_checks
from rates import fit_exponential, write_verdicts
from report import build_report, decay_for, write_report
from utils import fmt_num, read_series, write_csv
from verify import verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nsv", description="Navier-Stokes-Vlasov stability harness")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: NSV_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a simulation")
    r.add_argument("--config", default=None)
    r.add_argument("--out", default=None, help="output directory (default: output.directory)")
    r.add_argument("--no-ledger", action="store_true", help="skip the run ledger insert")
    r.add_argument("--list", action="store_true", help="print the run ledger instead of running")
    r.add_argument("--scenario", default=None, help="with --list: only runs of this scenario")

    v = sub.add_parser("verify", help="property suite on the reference scenarios")
    v.add_argument("--config", required=True)
    v.add_argument("--only-config", action="store_true", help="skip the embedded reference scenarios")
    v.add_argument("--no-oracles", action="store_true")
    v.add_argument("--full", action="store_true", help="also run the acceptance-size scenarios (slow)")

    f = sub.add_parser("fit", help="fit an exponential rate to a series column")
    f.add_argument("--series", required=True)
    f.add_argument("--column", required=True)
    f.add_argument("--t0", type=float, default=None)
    f.add_argument("--t1", type=float, default=None)

    o = sub.add_parser("oracle", help="oracle cross-checks")
    o.add_argument("--out", default=None, help="directory for oracle.csv")
    return p


LEDGER_COLUMNS = ("run_id", "created_at", "scenario", "dimension", "cells", "particles", "alpha", "sigma",
                  "within_budget", "verdicts_passed", "verdicts_total", "out_dir")


def print_ledger(env, scenario: Optional[str] = None) -> int:
    rows = list_runs(env["NSV_RUNS_DB"], scenario=scenario)
    print(" ".join(LEDGER_COLUMNS))
    for row in rows:
        print(" ".join(fmt_num(row[c]) if isinstance(row[c], float) else str(row[c]) for c in LEDGER_COLUMNS))
    return EXIT_OK


def cmd_run(args, env) -> int:
    if args.list:
        return print_ledger(env, args.scenario)
    if not args.config:
        raise ConfigError("--config", "run needs --config (or --list)")
    cfg = load_config(args.config)
    out = args.out or cfg.output.directory
    os.makedirs(out, exist_ok=True)
    result = run(cfg, out_dir=out, threads=env["NSV_THREADS"])
    decay = decay_for(result)
    write_verdicts(os.path.join(out, "verdicts.csv"), decay)
    write_report(os.path.join(out, "report.json"), build_report(result, decay))
    logging.info(f"Run complete: {len(result.series)} samples, within_budget={result.within_budget}, "
                 f"verdicts {decay.passed}/{len(decay.verdicts)}")
    if not args.no_ledger:
        try:
            c = result.constants
            run_id = insert_run({
                "scenario": result.scenario, "dimension": cfg.d, "cells": cfg.domain.cells,
                "particles": result.final.ensemble.count, "alpha": c.alpha, "alpha1": c.alpha1,
                "alpha2": c.alpha2, "sigma": c.sigma, "within_budget": result.within_budget,
                "verdicts_passed": decay.passed, "verdicts_total": len(decay.verdicts), "out_dir": out,
            }, env["NSV_RUNS_DB"])
            logging.info(f"Ledger: run {run_id}")
        except Exception as e:
            logging.exception(f"Ledger insert failed: {e}")
    return EXIT_OK


def cmd_verify(args, env) -> int:
    cfg = load_config(args.config)
    res = verify(cfg, threads=env["NSV_THREADS"], reference=not args.only_config,
                 oracles=not args.no_oracles, full=args.full)
    for w in res.warnings:
        print(f"WARNING: {w}")
    print(res.frame().to_string(index=False))
    failed = [r for r in res.rows if not r.passed]
    for r in failed:
        print(f"FAILED {r.scenario}/{r.prop}: measured {fmt_num(r.measured)} vs bound {fmt_num(r.bound)}")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_fit(args, env) -> int:
    if not os.path.isfile(args.series):
        raise ConfigError("--series", f"series file not found: {args.series}")
    df = read_series(args.series)
    if args.column not in df.columns:
        raise ConfigError("--column", f"unknown column {args.column!r}; available: {', '.join(df.columns)}")
    fit = fit_exponential(df["t"], df[args.column], args.t0, args.t1)
    print(f"lambda_fit={fit.rate!r} C_fit={fit.prefactor!r} residual={fit.residual!r} samples={fit.samples}")
    return EXIT_OK


def cmd_oracle(args, env) -> int:
    checks = run_oracle_checks()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.check:<24} measured={fmt_num(c.measured)} bound={fmt_num(c.bound)}")
    if args.out:
        write_csv(os.path.join(args.out, "oracle.csv"), ("check", "measured", "bound", "pass"),
                  ([c.check, c.measured, c.bound, c.passed] for c in checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "fit": cmd_fit, "oracle": cmd_oracle}


def main(argv: Optional[List[str]] = None) -> int:
    env = load_env()
    logging.basicConfig(level=getattr(logging, env["NSV_LOG_LEVEL"], logging.INFO),
                        format="%(asctime)s | %(levelname)s | %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        env["NSV_THREADS"] = args.threads
    try:
        return COMMANDS[args.command](args, env)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as e:
        logging.error(f"fit failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except NSVError as e:
        logging.exception(f"{args.command} aborted: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as e:
        logging.exception(f"I/O failure: {e}")
        return EXIT_FAIL
    except KeyboardInterrupt:
        logging.info("Stopped by user.")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
