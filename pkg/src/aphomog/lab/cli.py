"""Command-line entry point: ``aphomog-lab <subcommand> --config spec.yaml``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import SUBCOMMANDS, load_spec
from .experiments import run_experiment
from .report import emit

log = logging.getLogger("aphomog.lab")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aphomog-lab", description="Homogenization experiment runner.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="YAML experiment specification")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the spec seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep rows")
        p.add_argument("--formats", default="csv,json,svg", help="comma-separated output formats")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        spec = load_spec(args.config)
        kind = SUBCOMMANDS[args.command]
        if spec.kind != kind:
            raise ValueError(f"config kind {spec.kind!r} does not match subcommand {args.command!r}")
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        report = run_experiment(spec, threads=max(1, args.threads))
        paths = emit(report, args.out, tuple(f for f in args.formats.split(",") if f))
    except Exception as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    for c in report.checks:
        mark = {True: "PASS", False: "FAIL", None: "INCONCLUSIVE"}[c["passed"]]
        info = "" if c.get("asserted", True) else " (info)"
        print(f"{mark:12s} {c['name']}{info}: value={c['value']} threshold={c['threshold']}")
    failed = sum(1 for r in report.rows if r.get("status") != "ok")
    print(f"status: {report.status} ({len(report.rows)} rows, {failed} not ok)")
    for fmt, p in paths.items():
        print(f"wrote {p}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
