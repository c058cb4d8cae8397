"""
Tikhonov Oracle Demo

This script walks the Tikhonov trajectory of the smallest problem where
plain equilibrium seeking is not enough: the rotation map F(x) = A x with
A = [[0, 1], [-1, 0]] and the upper-level objective f(x) = 0.5 ||x - c||^2.

The rotation has the origin as its only zero, so the optimal equilibrium
is x* = (0, 0) whatever c is. The regularized problems VI(F + lambda grad f)
have the closed-form solutions x*_lambda = lambda (A + lambda I)^{-1} c,
which the script compares against the numerical solver.

Key Components:
- build_skew_toy: the rotation problem as a one-agent ProblemInstance
- tikhonov_solve: one strongly monotone regularized solve
- sequential_regularization: warm-started sweep towards lambda -> 0
"""

import pathlib
import sys

import numpy as np
import pandas as pd

# Add project root to path
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1]))

from optneq.problem import build_skew_toy  # noqa: E402
from optneq.solvers import sequential_regularization, tikhonov_solve  # noqa: E402

A = np.array([[0.0, 1.0], [-1.0, 0.0]])
c = np.array([1.0, 1.0])
inst = build_skew_toy(A, c)


def closed_form(lam):
    return lam * np.linalg.solve(A + lam * np.eye(2), c)


# Single regularized solve
# At lambda = 1 the solution is (0, 1); each method should land there
print("=" * 60)
print("Single Tikhonov solve at lambda = 1")
print("=" * 60)
for method in ("newton", "extragradient", "forward"):
    result = tikhonov_solve(inst, 1.0, 1e-10, method=method)
    mark = "✅" if result.converged else "❌"
    print(f"{mark} {method:13s} x = {np.round(result.x, 10)}  residual = {result.residual:.2e}  "
          f"iterations = {result.iterations}")

# Sequential regularization
# Each stage starts from the previous solution; the endpoint approaches x*
print()
print("=" * 60)
print("Sequential regularization sweep")
print("=" * 60)
solution = sequential_regularization(inst, [1.0, 0.1, 0.01, 0.001], 1e-10)
table = pd.DataFrame(
    {
        "lambda": [st.lam for st in solution.trajectory],
        "x1": [st.x[0] for st in solution.trajectory],
        "x2": [st.x[1] for st in solution.trajectory],
        "closed form error": [np.linalg.norm(st.x - closed_form(st.lam)) for st in solution.trajectory],
        "residual": [st.residual for st in solution.trajectory],
    }
)
print(table.to_markdown(index=False, floatfmt=".3e"))
print(f"\n📍 x* estimate: {solution.x_star}  (distance to origin {np.linalg.norm(solution.x_star):.3e})")
