"""Command line entry point.

Exit codes: 0 ok, 2 configuration, 3 solver failure, 4 I/O, 5 degenerate
diagnostics sample, 1 anything else raised by the library.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_config
from .errors import SpecpartError
from .fieldio import read_fields
from . import runner


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="specpart", description="Spectral optimal partitions on 2-D grids.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve, audit and write artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: output.directory)")
    r.add_argument("--seed", type=int, help="first seed (default: solver.seed)")
    r.add_argument("--restarts", type=int, help="number of seeds tried (default: solver.n_restarts)")
    r.add_argument("--jobs", type=int, default=1, help="parallel restart processes")

    a = sub.add_parser("audit", help="partition audit and diagnostics of a saved fields.spf")
    a.add_argument("fields")
    a.add_argument("config")
    a.add_argument("--out", help="output directory (default: output.directory)")

    e = sub.add_parser("eig", help="lowest eigenvalues of the configured domain")
    e.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.command == "run":
            if args.restarts is not None and args.restarts < 1:
                print("specpart: error: --restarts must be >= 1", file=sys.stderr)
                return 2
            return runner.run(cfg, args.out, args.seed, args.restarts, max(args.jobs, 1))
        if args.command == "audit":
            return runner.audit(cfg, read_fields(args.fields), args.out)
        sys.stdout.write(runner.eig_report(cfg))
        return 0
    except SpecpartError as exc:
        print(f"specpart: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
