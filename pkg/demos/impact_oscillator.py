"""Bouncing x'' + x = 0 on x >= 0: the motion is |sin t| with impacts at k*pi."""
from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

from orbit_bounce.integrator import integrate_bouncing
from orbit_bounce.model import RadialField, problem_from_force
from orbit_bounce import svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out_impact")
out.mkdir(parents=True, exist_ok=True)

problem = problem_from_force("affine_forcing", {"mu": 1.0}, T=math.pi, R0=1.0)
traj = integrate_bouncing(RadialField(problem, 0.0), (0.0, 1.0), (0.0, 10 * math.pi))

ts = np.linspace(0, 10 * math.pi, 5001)
x = np.array([traj.state(t)[0] for t in ts])
print("impacts:", len(traj.impacts))
print("max |t_k - k pi| =", np.max(np.abs(traj.impact_times - math.pi * np.arange(1, 11))))
print("sup |x - |sin t|| =", np.max(np.abs(x - np.abs(np.sin(ts)))))

svg.write_plots(traj, out / "time.svg", out / "phase.svg")
print("plots in", out)
