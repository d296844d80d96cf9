"""Stiff-spring replacement of the wall and the ``n -> infinity`` ladder.

The wall at ``x = 0`` is replaced by a linear spring of stiffness ``n`` with a
small pull-in ``delta``::

    g_n(t, x) = g(t, x)                         x >= 1/n
              = n x (g(t, x) + delta) - delta   0 < x < 1/n
              = n x - delta                     x <= 0

so the approximating equation ``x'' + g_n(t, x) = 0`` is smooth enough to
integrate on the whole line.  Inside the wall the motion follows arcs of
the ellipse ``y**2 + n x**2 - 2 delta x = c**2``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import CentralForceProblem, RadialField, SCHEMA

logger = logging.getLogger(__name__)

MAX_DEFAULT_STIFFNESS = 1e6
DEFAULT_LADDER = (100, 1000, 10_000, 100_000)


@dataclass(frozen=True)
class PenaltyParams:
    n: float
    delta: float = 1e-3

    def __post_init__(self):
        if not self.n >= 1:
            raise ValueError(f"stiffness n must be >= 1, got {self.n}")
        if not self.delta > 0:
            raise ValueError(f"pull-in delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class ResonantPenaltyParams:
    base: PenaltyParams
    kappa: float
    band: tuple     # (mu_N, mu_N+1)

    def __post_init__(self):
        lo, hi = self.band
        if not self.kappa > 1:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        eff = _effective_rate(self.base.n, self.kappa)
        if not lo < eff < hi:
            raise ValueError(f"n (sqrt(kappa)-1)^2/kappa = {eff} is outside ({lo}, {hi})")

    @classmethod
    def for_band(cls, n: float, band: tuple, delta: float = 1e-3) -> "ResonantPenaltyParams":
        return cls(PenaltyParams(n, delta), kappa_for(n, *band), tuple(band))


class PenaltyField:
    """``g_n`` built on top of any wall field ``g(t, x)``.

    Angular data (``L``, ``R0``, ``T``) of the base field is forwarded so the
    integrators can carry the angle along.
    """

    def __init__(self, base, n: float, delta: float):
        self.base = base
        self.n = float(n)
        self.delta = float(delta)
        self.inv_n = 1.0 / self.n
        for attr in ("L", "R0", "T"):
            if hasattr(base, attr):
                setattr(self, attr, getattr(base, attr))

    def _scalar(self, t, x):
        n, delta = self.n, self.delta
        if x >= self.inv_n:
            return self.base(t, x)
        if x > 0.0:
            return n * x * (self.base(t, x) + delta) - delta
        return n * x - delta

    def __call__(self, t, x):
        if np.ndim(x) == 0 and np.ndim(t) == 0:
            return self._scalar(t, x)
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return np.array([self._scalar(a, b) for a, b in zip(t.ravel(), x.ravel())]).reshape(x.shape)

    def wall(self, t):
        return self(t, 0.0)

    def __repr__(self):
        return f"PenaltyField(n={self.n:g}, delta={self.delta:g}, base={self.base!r})"


def make_penalty(g, p: PenaltyParams) -> PenaltyField:
    return PenaltyField(g, p.n, p.delta)


def _effective_rate(n, kappa):
    return n * (math.sqrt(kappa) - 1.0) ** 2 / kappa


def kappa_for(n: float, mu_lo: float, mu_hi: float) -> float:
    """Rescaling ``kappa_n > 1`` with ``n (sqrt(kappa)-1)**2 / kappa`` at the band midpoint.

    The left side equals ``n (1 - 1/sqrt(kappa))**2``, which increases from 0
    to ``n`` as ``kappa`` grows, so a solution exists iff the midpoint is
    below ``n``.
    """
    if not mu_lo < mu_hi:
        raise ValueError("band needs mu_lo < mu_hi")
    target = 0.5 * (mu_lo + mu_hi)
    if not n > target:
        need = math.floor(target) + 1
        raise ValueError(f"no admissible kappa for n={n}: the band midpoint {target} "
                         f"needs n >= {need}")
    return 1.0 / (1.0 - math.sqrt(target / n)) ** 2


def make_resonant_penalty(problem: CentralForceProblem, L: float,
                          p: ResonantPenaltyParams) -> PenaltyField:
    """Penalty field on ``-L**2/(x+R0)**3 + kappa f(t, x+R0)``."""
    return PenaltyField(RadialField(problem, L, force_scale=p.kappa), p.base.n, p.base.delta)


def negative_transit_time(p: PenaltyParams, c: float) -> float:
    """Time spent at ``x < 0`` by an excursion entering the wall with speed ``c``."""
    if not c > 0:
        raise ValueError("crossing speed must be positive")
    n, d = p.n, p.delta
    return (math.pi - 2.0 * math.asin(d / math.sqrt(n * c * c + d * d))) / math.sqrt(n)


def penetration_depth_bound(p: PenaltyParams, c: float) -> float:
    """Deepest point ``(delta - sqrt(delta**2 + c**2 n)) / n`` of the excursion."""
    if not c > 0:
        raise ValueError("crossing speed must be positive")
    n, d = p.n, p.delta
    return (d - math.sqrt(d * d + c * c * n)) / n


def ellipse_energy(p: PenaltyParams, x, y):
    """``y**2 + n x**2 - 2 delta x``, conserved along excursions into ``x < 0``."""
    return np.asarray(y) ** 2 + p.n * np.asarray(x) ** 2 - 2.0 * p.delta * np.asarray(x)


# --------------------------------------------------------------------------
# convergence ladder
# --------------------------------------------------------------------------

@dataclass
class LadderRung:
    n: float
    delta: float
    kappa: float
    solution: object            # solver.PeriodicSolution or solver.OrbitResult
    min_x: float
    max_x: float
    max_xprime: float
    C_fit: float
    derivative_bound_ok: bool
    sup_dist_to_prev: Optional[float] = None
    sup_dist_to_exact: Optional[float] = None
    L: Optional[float] = None

    def as_dict(self) -> dict:
        return {"n": self.n, "delta": self.delta, "kappa": self.kappa,
                "sup_dist_to_prev": self.sup_dist_to_prev, "min_x": self.min_x,
                "max_xprime": self.max_xprime, "C_fit": self.C_fit,
                "sup_dist_to_exact": self.sup_dist_to_exact,
                "derivative_bound_ok": self.derivative_bound_ok, "L": self.L}


@dataclass
class LadderResult:
    rungs: list
    failure: Optional[dict] = None
    exact: object = None
    notes: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.failure is None

    def report(self) -> list:
        return [r.as_dict() for r in self.rungs]

    def to_json(self) -> str:
        return json.dumps({"schema": SCHEMA, "rungs": self.report(), "failure": self.failure},
                          indent=2)


GRID_POINTS = 2048


def _profile(sol, T, num=GRID_POINTS):
    ts = np.linspace(0.0, T, num)
    traj = sol.trajectory
    _, st = traj.uniform(num, 0.0, T)
    return ts, st


def _rung_stats(x, xp, n):
    sup_x = float(np.max(np.abs(x)))
    sup_xp = float(np.max(np.abs(xp)))
    ratio = max(sup_xp / sup_x, sup_x / sup_xp) if sup_x > 0 and sup_xp > 0 else math.inf
    ok = bool(np.min(x) >= -sup_xp / math.sqrt(n))
    return float(np.min(x)), sup_x, sup_xp, ratio, ok


def convergence_ladder(problem: CentralForceProblem, L: Optional[float], spec=None,
                       n_ladder: Sequence[float] = DEFAULT_LADDER, *, delta: float = 1e-3,
                       band: Optional[tuple] = None, cfg=None, guess=None, exact=None,
                       allow_stiff: bool = False, jobs: int = 1) -> LadderResult:
    """T-periodic penalty solutions for increasing stiffness.

    With a fixed ``L`` every rung is a periodic shoot at that angular
    momentum; with ``L=None`` each rung solves the winding equation for
    ``spec`` by continuation in ``L``.  ``band`` switches on the rescaled
    nonlinearities for double resonance.  Each rung starts from the previous
    rung's solution, so the ladder follows one branch.  ``exact`` (a bouncing
    solution or orbit, or ``"auto"`` at fixed ``L``) enables the distance to
    the limit orbit.
    """
    from . import solver as _solver

    n_ladder = [float(n) for n in n_ladder]
    if not allow_stiff and max(n_ladder) > MAX_DEFAULT_STIFFNESS:
        raise ValueError(f"stiffness above {MAX_DEFAULT_STIFFNESS:g} needs allow_stiff=True "
                         "(explicit steps shrink like 1/sqrt(n))")
    if L is None and spec is None:
        raise ValueError("give either a fixed L or a winding spec")
    cfg = cfg or _solver.ShootingConfig()
    T = problem.T
    result = LadderResult(rungs=[])

    if isinstance(exact, str) and exact == "auto":
        if L is None:
            raise ValueError("exact='auto' needs a fixed L")
        exact = _solver.shoot_periodic(RadialField(problem, L), T, cfg, mode="bouncing",
                                       guess=guess)
    result.exact = exact
    exact_x = None
    if exact is not None:
        exact_x = _profile(exact, T)[1][0]

    prev_x, prev = None, guess
    for n in n_ladder:
        kappa = 1.0
        try:
            if band is not None:
                kappa = kappa_for(n, *band)
            if L is None:
                params = PenaltyParams(n, delta)
                sol = _solver.continue_in_L(problem, spec, mode="penalty", cfg=cfg,
                                            penalty=params, kappa=kappa, guess=prev)
                L_used = sol.L
            else:
                fld = PenaltyField(RadialField(problem, L, force_scale=kappa), n, delta)
                g0 = prev.state0 if prev is not None and hasattr(prev, "state0") else prev
                sol = _solver.shoot_periodic(fld, T, cfg, mode="penalty", guess=g0)
                L_used = L
        except Exception as exc:    # partial ladder with failure report
            logger.warning("ladder rung n=%g failed: %s", n, exc)
            result.failure = {"n": n, "reason": str(exc)}
            break
        _, st = _profile(sol, T)
        x, xp = st[0], st[1]
        mn, sx, sxp, C, ok = _rung_stats(x, xp, n)
        rung = LadderRung(n=n, delta=delta, kappa=kappa, solution=sol, min_x=mn, max_x=sx,
                          max_xprime=sxp, C_fit=C, derivative_bound_ok=ok, L=L_used)
        if prev_x is not None:
            rung.sup_dist_to_prev = float(np.max(np.abs(x - prev_x)))
        if exact_x is not None:
            rung.sup_dist_to_exact = float(np.max(np.abs(x - exact_x)))
        result.rungs.append(rung)
        prev_x, prev = x, sol
    return result
