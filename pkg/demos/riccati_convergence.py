"""Convergence of the finite-horizon Riccati pair to its stationary limit.

Integrates the backward pair on a scalar regulator and on its
mean-coupled variant, then fits the exponential rate at which the
solutions approach the algebraic roots.
"""

import math

import numpy as np

from mflq import (
    convergence_profile,
    fit_turnpike_decay,
    integrate_finite_horizon,
    make_problem,
    solve_are,
)


def main():
    problems = {
        "scalar regulator": make_problem(
            1, 1, A=[[-1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]]),
        "mean-coupled": make_problem(
            1, 1, A=[[-1.0]], Abar=[[0.5]], B=[[1.0]], Q=[[1.0]],
            R=[[1.0]]),
    }
    T = 10.0
    for name, problem in problems.items():
        are = solve_are(problem)
        path = integrate_finite_horizon(problem, T, steps=2000)
        prof = convergence_profile(path, are)
        print(f"== {name} ==")
        print(f"  P  = {are.P[0, 0]:.12f}   Pi = {are.Pi[0, 0]:.12f}")
        print(f"  residuals: {are.residual_P:.2e}, {are.residual_Pi:.2e}")
        for col, label in ((1, "P"), (2, "Pi")):
            _, right = fit_turnpike_decay(prof[:, col], T, prof[:, 0])
            print(f"  |{label}_T(t) - {label}| ~ K exp(-lam (T-t)):"
                  f" lam = {right.lam:.4f}, R^2 = {right.r_squared:.5f}")
    print()
    print(f"reference rates: 2*sqrt(2) = {2 * math.sqrt(2):.4f},"
          f" sqrt(5) = {math.sqrt(5):.4f}")


if __name__ == "__main__":
    main()
