#!/usr/bin/env python3
"""Mesh-refinement study for the Dirichlet solver on the bulge fixture.

The datum pi/sin(pi s) on the unit interval with zero exterior data has
the exact p = 2 solution (1 - x^2)_+^s, so the sup error is measurable
directly.  Prints an error table with halving ratios.

Usage:
    python3 scripts/solver_convergence.py [--s S] [--meshes 64 128 256 512]
"""

import argparse
import sys
import time

import numpy as np

from fracp.functionals import Ball
from fracp.solver import CoefficientField, assemble, bulge_data_constant, solve


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s", type=float, default=0.75)
    ap.add_argument("--meshes", type=int, nargs="+",
                    default=[64, 128, 256, 512])
    ap.add_argument("--tol", type=float, default=1e-11)
    args = ap.parse_args()

    domain = Ball(0.0, 1.0)
    coeff = CoefficientField.constant(1.0)
    f = bulge_data_constant(args.s)

    print(f"s = {args.s}, f = {f:.12g}, exact solution (1 - x^2)^s")
    print(f"{'cells':>6} {'sup error':>12} {'relative':>12} "
          f"{'ratio':>7} {'time':>7}")
    prev = None
    for cells in args.meshes:
        t0 = time.time()
        problem = assemble(domain, cells, args.s, 2.0, coeff, f, 0.0)
        result = solve(problem, tol=args.tol)
        dt = time.time() - t0
        x = result.solution.x
        exact = np.maximum(1.0 - x**2, 0.0) ** args.s
        err = float(np.max(np.abs(result.solution.values - exact)))
        rel = err / float(np.max(exact))
        ratio = "" if prev is None else f"{err / prev:7.3f}"
        print(f"{cells:6d} {err:12.4e} {rel:12.4e} {ratio:>7} {dt:6.2f}s")
        prev = err
    return 0


if __name__ == "__main__":
    sys.exit(main())
