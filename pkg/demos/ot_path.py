"""
The straight-line probability path and its vector field
========================================================

Noise at t=0 is carried to data at t=1 along straight lines, so following the
exact conditional field lands on sigma_min * x0 + x1 at any step size.  On a
curved trajectory (dy/dt = y) the midpoint error shrinks 4x per halved step.
"""

import numpy as np

from flowfill.flow import SIGMA_MIN, conditional_flow, conditional_vector_field, ot_mean_std
from flowfill.ode import SolverConfig, solve

rng = np.random.default_rng(0)
x0 = rng.normal(size=5)
x1 = np.array([2.0, -1.0, 0.5, 3.0, 0.0])

# mean and std of the path at a few times
for t in (0.0, 0.25, 0.5, 1.0):
    mu, sigma = ot_mean_std(t, x1)
    print(f"t={t:4.2f}  mean={np.round(mu, 3)}  std={sigma:.5f}")

# integrate the exact field from the noise sample
for h in (1 / 8, 1 / 16, 1 / 64):
    end = solve(lambda t, x: conditional_vector_field(t, x, x1), x0, SolverConfig(step_size=h)).endpoint
    gap = np.abs(end - conditional_flow(1.0, x0, x1)).max()
    print(f"h=1/{round(1 / h):<3d} max endpoint error {gap:.2e}")

print("expected endpoint:", np.round(SIGMA_MIN * x0 + x1, 5))

# a curved trajectory shows the second-order convergence
prev = None
for h in (1 / 16, 1 / 32, 1 / 64):
    err = abs(solve(lambda t, y: y, np.ones(1), SolverConfig(step_size=h)).endpoint[0] - np.e)
    ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
    print(f"dy/dt=y  h=1/{round(1 / h):<3d} error {err:.2e}{ratio}")
    prev = err
