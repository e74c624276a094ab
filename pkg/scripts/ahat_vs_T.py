"""Convergence of the approximate homogenized coefficient as T grows.

Prints Ahat_T and successive differences for the periodic field (compared with
the harmonic mean sqrt(3)) and for the quasi-periodic field, where no closed
form is known and the rate is measured empirically.
"""

import argparse
import math
import sys

import numpy as np

from aphomog.apfield import scalar_field
from aphomog.corrector import compute_Ahat, corrector_grid, solve_approx_corrector
from aphomog.discrete import SolverConfig
from aphomog.fitting import fit_loglog


def sweep(field, T_list, h, averaging, cfg):
    vals = []
    for T in T_list:
        cs = solve_approx_corrector(field, T, corrector_grid(field, T, h), cfg)
        vals.append(compute_Ahat(field, cs, averaging).Ahat[0, 0, 0, 0])
    return np.array(vals)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--T", type=float, nargs="+", default=[4, 8, 16, 32, 64])
    ap.add_argument("--h", type=float, default=1 / 32)
    args = ap.parse_args(argv)
    cfg = SolverConfig(rel_tol=1e-9 if args.m == 1 else 1e-8)
    T = np.array(args.T, float)

    per = scalar_field(2.0, [(1.0, 1.0)], m=args.m, mu=1 / 3, name="periodic")
    vals = sweep(per, T, args.h, "uniform", cfg)
    print("periodic: T, Ahat_T, |Ahat_T - sqrt(3)|")
    for t, v in zip(T, vals):
        print(f"  {t:6g} {v:.12f} {abs(v - math.sqrt(3)):.3e}")

    qp = scalar_field(3.0, [(1.0, 1.0), (math.sqrt(2.0), 1.0)], m=args.m, mu=0.2, name="quasiperiodic")
    vals = sweep(qp, T, args.h, "filtered", cfg)
    diffs = np.abs(np.diff(vals))
    print("quasi-periodic: T, Ahat_T, |Ahat_2T - Ahat_T|")
    for t, v, dv in zip(T, vals, list(diffs) + [float("nan")]):
        print(f"  {t:6g} {v:.12f} {dv:.3e}")
    if np.all(diffs > 0) and len(diffs) >= 2:
        fit = fit_loglog(T[:-1], diffs)
        print(f"  successive-difference decay exponent {-fit.slope:.3f} (fit residual {fit.residual:.3f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
