"""Nonconvex scalar example: local quadratic convergence and the positivity condition.

    python scripts/example_1d.py [--C 0.2] [--D 60]

Prints the error sequence of the inner iteration (interior radius, where the
iteration reduces to Newton's method on a nonconvex function) with the ratios
e_{k+1} / e_k^2, then the constrained solution at radius 0.25 together with
its multiplier and the smallest eigenvalue of r'' + lambda.
"""
import argparse

import numpy as np

from quasitrust.ivanov import SolverOptions, check_posdef, inner_solve
from quasitrust.problems import QuarticExample, example_1d


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--C", type=float, default=0.2)
    ap.add_argument("--D", type=float, default=60.0)
    ap.add_argument("--rho-interior", type=float, default=2.0)
    ap.add_argument("--rho", type=float, default=0.25)
    args = ap.parse_args()

    ex = example_1d(args.C, args.D, 1.0)
    print(f"C = {args.C}, D = {args.D} (D must exceed {QuarticExample.d_threshold(args.C):.4g})")
    opts = SolverOptions(eps_kkt=1e-14, eps_step=1e-15, max_inner=50)
    errors = [1.0]
    inner_solve(ex, args.rho_interior, np.zeros(1), opts,
                on_iterate=lambda k, x, lam, res, sol: errors.append(abs(x.coeffs[0] - 1.0)))
    print(f"\nrho = {args.rho_interior}: iterates from x0 = 0")
    print(f"{'k':>3} {'error':>12} {'e_k/e_(k-1)^2':>14}")
    for k, e in enumerate(errors):
        ratio = e / errors[k - 1] ** 2 if k and errors[k - 1] > 1e-13 and e > 1e-13 else float("nan")
        print(f"{k:>3} {e:>12.3e} {ratio:>14.4g}")

    st = inner_solve(ex, args.rho, np.zeros(1), opts)
    pd = check_posdef(ex, st.x_k, args.rho)
    print(f"\nrho = {args.rho}: x = {st.x_k.coeffs[0]:.12f}, lambda = {pd.lambda_rho:.6g}, "
          f"r'' = {ex.second_derivative(st.x_k.coeffs[0]):.6g}, r'' + lambda = {pd.min_eig:.6g}")


if __name__ == "__main__":
    main()
