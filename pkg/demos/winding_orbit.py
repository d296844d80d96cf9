"""Periodic bouncing orbit of the catalog problem that closes after k periods.

Usage: python3 winding_orbit.py [k] [nu]
"""
from __future__ import annotations

import logging
import math
import sys

from orbit_bounce.analysis import classify_band, theta_envelope
from orbit_bounce.model import WindingSpec, catalog_problem
from orbit_bounce.solver import continue_in_L

logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")

k = int(sys.argv[1]) if len(sys.argv) > 1 else 64
nu = int(sys.argv[2]) if len(sys.argv) > 2 else 1

problem = catalog_problem()
print(classify_band(*problem.rates, problem.T).as_dict())

orbit = continue_in_L(problem, WindingSpec(k, nu))
_, st = orbit.trajectory.uniform(4001, 0.0, problem.T)
R = float(st[0].max())
lo, hi = theta_envelope(orbit.L, 0.0, R, problem.R0, problem.T)

print(f"L = {orbit.L:.10g}")
print(f"Theta = {orbit.theta_value:.12g}   target 2 pi nu / k = {2 * math.pi * nu / k:.12g}")
print(f"Theta envelope [{lo:.6g}, {hi:.6g}]")
print(f"residuals {orbit.residuals}")
print(f"rotation count {orbit.rotation_count}, impacts per period {orbit.impacts_per_period}")
