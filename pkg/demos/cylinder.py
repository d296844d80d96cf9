"""Radial orbit coupled weakly to one transverse oscillator."""
from __future__ import annotations

import math

import numpy as np

from orbit_bounce.analysis import AsymmetricBand
from orbit_bounce.model import WindingSpec, catalog_problem
from orbit_bounce.solver import CylinderProblem, TransverseComponent, solve_cylinder


def f2(t, y):
    return 9.0 * y + 0.1 * np.cos(2 * t)


band = AsymmetricBand(9.0, 9.0, 9.0, 9.0, 1, math.pi)
for eps in (0.0, 0.01, 0.05):
    comp = TransverseComponent(f2, band, b2=lambda t, x, ys, e=eps: e * x / (1 + x * x))
    sol = solve_cylinder(CylinderProblem(catalog_problem(), [comp]), WindingSpec(64, 1))
    print(f"eps={eps:<5} sweeps={sol.sweeps:2d} L={sol.orbit.L:.10g} "
          f"y(0)={sol.transverse[0].state0[0]:+.6e}")
