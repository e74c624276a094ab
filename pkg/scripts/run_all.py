"""Run every experiment config and write reports under one output directory.

    python scripts/run_all.py --out results --threads 4
"""

import argparse
import sys
import time
from pathlib import Path

from aphomog.lab.config import load_spec
from aphomog.lab.experiments import run_experiment
from aphomog.lab.report import emit

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    ap.add_argument("--out", default="results")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args(argv)

    worst = 0
    for path in sorted(Path(args.configs).glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        t0 = time.time()
        rep = run_experiment(load_spec(path), threads=args.threads)
        emit(rep, Path(args.out) / path.stem, stem=rep.kind)
        print(f"{path.stem:32s} {rep.status:13s} {time.time() - t0:6.1f}s")
        worst = max(worst, {0: 0, 2: 1, 1: 2}[rep.exit_code])
    return {0: 0, 1: 2, 2: 1}[worst]


if __name__ == "__main__":
    sys.exit(main())
