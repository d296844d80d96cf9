"""Penalty solutions with stiffness n = 1e2, 1e3, 1e4 approach the bouncing orbit.

The floor column is -sup|x'| / sqrt(n); every rung stays above it.
"""
from __future__ import annotations

import math

from orbit_bounce.model import WindingSpec, catalog_problem
from orbit_bounce.penalty import convergence_ladder
from orbit_bounce.solver import continue_in_L

problem = catalog_problem()
orbit = continue_in_L(problem, WindingSpec(64, 1))
res = convergence_ladder(problem, orbit.L, n_ladder=(1e2, 1e3, 1e4), exact=orbit.solution,
                         guess=orbit.solution)

print(f"{'n':>8} {'min x':>12} {'floor':>12} {'dist to exact':>14}")
for r in res.rungs:
    print(f"{r.n:8.0f} {r.min_x:12.3e} {-r.max_xprime / math.sqrt(r.n):12.3e} "
          f"{r.sup_dist_to_exact:14.3e}")
