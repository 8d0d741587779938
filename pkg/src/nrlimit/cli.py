"""Command line entry point ``nrlimit``.

Exit codes: 0 when every acceptance gate passes, 1 on a numerical failure
(a failed gate, a blown-up run, a baseline mismatch), 2 on configuration or
usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import ConfigError, compare_csv, load_config, run

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nrlimit", description="Nonrelativistic-limit experiments on the periodic box.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run the experiment described by a JSON config")
    r.add_argument("config")
    e = sub.add_parser("verify-estimates", help="run the symbol and kernel estimate checks")
    e.add_argument("config")
    c = sub.add_parser("compare", help="compare two diagnostics CSV files")
    c.add_argument("baseline")
    c.add_argument("new")
    c.add_argument("--rtol", type=float, default=1e-9)
    c.add_argument("--atol", type=float, default=0.0)
    return p


def _report(gates: dict, paths: dict) -> int:
    for name, g in gates.items():
        print(f"{'PASS' if g['passed'] else 'FAIL'}  {name}")
    for kind, path in paths.items():
        print(f"wrote {kind}: {path}")
    return EXIT_OK if all(g["passed"] for g in gates.values()) else EXIT_NUMERIC


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            try:
                res = compare_csv(args.baseline, args.new, args.rtol, args.atol)
            except OSError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            if res.structural:
                print(f"MISMATCH: {res.structural}")
                return EXIT_NUMERIC
            for row, col, a, b in res.mismatches[:20]:
                print(f"MISMATCH row {row} column {col}: {a} vs {b}")
            if res.mismatches:
                print(f"{len(res.mismatches)} mismatching cells in {res.rows} rows")
                return EXIT_NUMERIC
            print(f"OK: {res.rows} rows agree to rtol={args.rtol:g}")
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "verify-estimates":
            cfg = replace(cfg, mode="estimate_lab")
        _, gates, paths = run(cfg)
        return _report(gates, paths)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
