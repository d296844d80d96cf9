"""Periodic orbits: shooting, continuation in ``L`` and coupled systems.

A ``T``-periodic radial motion is a fixed point of a return map, found by
Newton's method with a central finite-difference Jacobian and Armijo
backtracking.  Smooth (and penalty) problems use the time-``T`` map on
``(x(0), x'(0))``.  Bouncing problems with impacts use the impact section
instead: starting on the wall at time ``t_a`` with outgoing speed ``v_a``,
the next bounce near ``t_a + T`` must happen exactly one period later with
the same speed.  That map is smooth where the time-``T`` map is not.

The angular part is fixed afterwards by a scalar search in ``L`` for the
winding equation ``Theta(L, x_L) = 2 pi nu / k``.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from . import analysis
from .integrator import (IntegrationError, IntegratorOptions, integrate_bouncing,
                         integrate_smooth)
from .model import (SCHEMA, BouncingTrajectory, CentralForceProblem, RadialField,
                    ThetaProfile, WindingSpec)
from .penalty import PenaltyField, PenaltyParams, kappa_for

logger = logging.getLogger(__name__)

MODES = ("smooth", "penalty", "bouncing")


@dataclass(frozen=True)
class ShootingConfig:
    residual_tol: float = 1e-8
    max_newton_iters: int = 30
    fd_step: float = 1e-6
    multistart: tuple = ()          # (r0, v0) guesses; empty means the default ladder
    integrator: IntegratorOptions = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13)
    jobs: int = 1

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")


class ShootingFailure(RuntimeError):
    """No multistart guess converged; ``attempts`` lists ``(guess, best residual, reason)``."""

    def __init__(self, message: str, attempts: list):
        lines = "; ".join(f"{g}: {r:.3e} ({why})" for g, r, why in attempts)
        super().__init__(f"{message}: {lines}" if attempts else message)
        self.attempts = attempts


class InfeasibleSpec(ValueError):
    def __init__(self, spec: WindingSpec, theta_range: tuple, L_range: tuple, note: str = ""):
        self.spec, self.theta_range, self.L_range = spec, theta_range, L_range
        self.note = note
        msg = (f"target Theta = 2 pi {spec.nu}/{spec.k} = {spec.theta_target:.6g} is outside the "
               f"achieved range [{theta_range[0]:.6g}, {theta_range[1]:.6g}] for L in "
               f"[{L_range[0]:g}, {L_range[1]:g}]")
        super().__init__(f"{msg}; {note}" if note else msg)


class LLRefusal(ValueError):
    def __init__(self, reports: dict):
        self.reports = reports
        verdicts = ", ".join(f"{k}: {r.verdict}" for k, r in reports.items())
        super().__init__(f"Landesman-Lazer conditions not established ({verdicts})")


@dataclass
class PeriodicSolution:
    field: object
    mode: str
    state0: np.ndarray              # (x(0), x'(0))
    trajectory: BouncingTrajectory  # one period, [0, T]
    residual: float                 # |x(T)-x(0)| + |x'(T)-x'(0)|
    jacobian: np.ndarray            # of the residual map at the solution
    min_singular_value: float
    section: Optional[tuple] = None  # (t_a, v_a) for impact-section solutions
    iterations: int = 0
    guess_index: int = 0

    @property
    def T(self) -> float:
        return self.trajectory.t_span[1] - self.trajectory.t_span[0]

    @property
    def theta_value(self) -> float:
        t0, t1 = self.trajectory.t_span
        return float(self.trajectory.state(t1)[2] - self.trajectory.state(t0)[2])

    @property
    def impacts_per_period(self) -> int:
        # an impact at the start and one at the end of the period are the same bounce
        t0, t1 = self.trajectory.t_span
        T = t1 - t0
        eps = 1e-9 * max(1.0, T)
        phases = sorted((e.t - t0) % T for e in self.trajectory.impacts if t0 <= e.t <= t1)
        phases = [p for p in phases if T - p > eps] or phases[:1]
        return sum(1 for i, p in enumerate(phases) if i == 0 or p - phases[i - 1] > eps)


# --------------------------------------------------------------------------
# return maps
# --------------------------------------------------------------------------

class _NoReturn(Exception):
    def __init__(self, message, best=math.inf):
        super().__init__(message)
        self.best = best


class _ContactOnSection(Exception):
    pass


def _smooth_traj(field, z, T, opts, t0=0.0):
    arc = integrate_smooth(field, z, t0, t0 + T, opts)
    L, R0 = _ang(field)
    return BouncingTrajectory((arc,), (), (), (t0, t0 + T), L, R0)


def _ang(field):
    return float(getattr(field, "L", 0.0) or 0.0), float(getattr(field, "R0", 1.0) or 1.0)


def _period_residual(traj, T, wall_tol=1e-10):
    a = traj.state(traj.t_span[0])
    arcs = sorted(traj.pieces, key=lambda p: p.t1)
    b = np.asarray(arcs[-1](traj.t_span[1])) if arcs else a
    if a[0] <= wall_tol and b[0] <= wall_tol:
        return abs(b[0] - a[0]) + abs(abs(b[1]) - abs(a[1]))
    return abs(b[0] - a[0]) + abs(b[1] - a[1])


def _admissible(z):
    """Project a bouncing-mode state onto ``r >= 0`` with a non-incoming wall velocity."""
    z = np.array([max(float(z[0]), 0.0), float(z[1])])
    if z[0] == 0.0 and z[1] < 0:
        z[1] = -z[1]
    return z


def _time_map(field, mode, T, opts):
    def F(z):
        if mode == "bouncing":
            z = _admissible(z)
            traj = integrate_bouncing(field, z, (0.0, T), opts)
            end = traj.pieces[-1](T) if traj.pieces else z
        else:
            arc = integrate_smooth(field, z, 0.0, T, opts)
            end = arc(T)
        return np.asarray(end[:2], dtype=float) - np.asarray(z, dtype=float)
    return F


SECTION_EVENT_BUDGET = 64


def _section_map(field, T, opts):
    opts = replace(opts, max_events=min(opts.max_events, SECTION_EVENT_BUDGET))

    def F(z):
        t_a, v_a = float(z[0]), float(z[1])
        if not v_a > 0:
            raise _NoReturn("non-positive launch speed")
        traj = integrate_bouncing(field, (0.0, v_a), (t_a, t_a + 1.25 * T), opts)
        if traj.status != "ok":
            raise _NoReturn("chattering between section crossings")
        if traj.contacts:
            raise _ContactOnSection()
        hits = [e for e in traj.impacts if e.t > t_a + 0.25 * T]
        if not hits:
            raise _NoReturn("no bounce returns within 1.25 periods")
        ev = min(hits, key=lambda e: abs(e.t - t_a - T))
        return np.array([ev.t - t_a - T, ev.speed_out - v_a])
    return F


def _safe(F):
    def G(z):
        try:
            return F(z)
        except (_NoReturn, IntegrationError, ValueError):
            return None
    return G


def _fd_jacobian(F, z, h, lower=None):
    J = np.empty((len(z), len(z)))
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h[i]
        if lower is not None and z[i] - h[i] < lower[i]:
            fp, f0 = F(z + e), F(z)
            if fp is None or f0 is None:
                return None
            J[:, i] = (fp - f0) / h[i]
            continue
        fp, fm = F(z + e), F(z - e)
        if fp is None or fm is None:
            return None
        J[:, i] = (fp - fm) / (2 * h[i])
    return J


STALL_WINDOW = 8


def _newton(F, z0, cfg, scale, lower=None, valid=None):
    """Damped Newton on ``F(z) = 0``; returns ``(z, |F|, J, iterations)``."""
    z = np.asarray(z0, dtype=float)
    Fz = F(z)
    if Fz is None:
        raise _NoReturn("map undefined at the initial guess")
    nrm = float(np.sum(np.abs(Fz)))
    h = cfg.fd_step * np.maximum(np.abs(scale), 1e-2)
    it = 0
    history = [nrm]
    while nrm > cfg.residual_tol and it < cfg.max_newton_iters:
        if len(history) > STALL_WINDOW and history[-1] > 0.5 * history[-1 - STALL_WINDOW]:
            raise _NoReturn(f"Newton stagnates at residual {nrm:.3e}", min(history))
        it += 1
        J = _fd_jacobian(F, z, h, lower)
        if J is None:
            raise _NoReturn("map undefined near the iterate", min(history))
        dz = np.linalg.lstsq(J, -Fz, rcond=None)[0]
        lam, accepted = 1.0, False
        while lam >= 1e-4:
            zn = z + lam * dz
            if valid is not None:
                zn = valid(zn)
            Fn = F(zn) if zn is not None else None
            if Fn is not None:
                nn = float(np.sum(np.abs(Fn)))
                if nn <= (1 - 1e-4 * lam) * nrm or nn <= cfg.residual_tol:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            raise _NoReturn(f"line search stalled at residual {nrm:.3e}", min(history))
        z, Fz, nrm = zn, Fn, nn
        history.append(nrm)
    if nrm > cfg.residual_tol:
        raise _NoReturn(f"no convergence in {cfg.max_newton_iters} iterations "
                        f"(residual {nrm:.3e})", min(history))
    J = _fd_jacobian(F, z, h, lower)
    return z, nrm, J, it


SINGULAR_TOL = 1e-6


def _singular(J):
    if J is None or not np.all(np.isfinite(J)):
        return True
    sv = np.linalg.svd(J, compute_uv=False)
    return sv[-1] < SINGULAR_TOL * max(1.0, sv[0])


def _is_rest(traj, tol=1e-9):
    _, st = traj.uniform(257)
    return float(np.max(np.abs(st[:2]))) <= tol


def _min_sv(J):
    if J is None or not np.all(np.isfinite(J)):
        return math.nan
    return float(np.linalg.svd(J, compute_uv=False)[-1])


# --------------------------------------------------------------------------
# shooting
# --------------------------------------------------------------------------

def default_multistart(mode: str) -> tuple:
    if mode == "bouncing":
        return tuple((0.0, float(v)) for v in np.geomspace(0.01, 10.0, 8))
    return ((0.0, 0.0),) + tuple((float(a), 0.0) for a in np.geomspace(0.01, 10.0, 7))


def _guess_list(guess, cfg, mode):
    if guess is None:
        return list(cfg.multistart or default_multistart(mode))
    if isinstance(guess, PeriodicSolution):
        return [guess]
    arr = np.asarray(guess, dtype=float)
    if arr.ndim == 1:
        return [tuple(arr)]
    return [tuple(g) for g in arr]


def _finish_section(field, T, z, nrm, J, it, opts, idx):
    t_a, v_a = float(z[0]), float(z[1])
    t_a = t_a - math.floor(t_a / T) * T
    if t_a > T - opts.time_tol(T):
        t_a -= T
    long = integrate_bouncing(field, (0.0, v_a), (t_a - T, T), opts)
    traj = long.restricted(0.0, T)
    s0 = traj.state(0.0)[:2]
    # re-anchor the angle at t = 0
    traj = _shift_theta(traj, -float(traj.state(0.0)[2]))
    res = _period_residual(traj, T)
    return PeriodicSolution(field, "bouncing", np.asarray(s0, dtype=float), traj, res, J,
                            _min_sv(J), section=(t_a, v_a), iterations=it, guess_index=idx)


class _ShiftedArc:
    def __init__(self, arc, dtheta):
        self.arc, self.dtheta = arc, dtheta
        self.t0, self.t1 = arc.t0, arc.t1

    def __call__(self, t):
        out = np.array(self.arc(t), dtype=float)
        out[2] = out[2] + self.dtheta
        return out

    def derivative(self, t):
        return self.arc.derivative(t)

    @property
    def start_state(self):
        return self(self.t0)

    @property
    def end_state(self):
        return self(self.t1)


def _shift_theta(traj, dtheta):
    from .model import ContactInterval
    if dtheta == 0.0:
        return traj
    arcs = tuple(_ShiftedArc(a, dtheta) for a in traj.arcs)
    contacts = tuple(ContactInterval(c.t0, c.t1, c.theta0 + dtheta, c.omega) for c in traj.contacts)
    return BouncingTrajectory(arcs, traj.impacts, contacts, traj.t_span, traj.L, traj.R0,
                              traj.status, traj.diagnostics)


def _shoot_one(field, T, cfg, mode, g, idx):
    opts = cfg.integrator
    if isinstance(g, PeriodicSolution):
        if mode == "bouncing" and g.section is not None:
            return _shoot_section(field, T, cfg, np.array(g.section), idx)
        g = tuple(g.state0)
    z0 = np.asarray(g, dtype=float)
    if mode != "bouncing":
        F = _safe(_time_map(field, mode, T, opts))
        z, nrm, J, it = _newton(F, z0, cfg, scale=np.maximum(np.abs(z0), 1.0))
        traj = _smooth_traj(field, z, T, opts)
        if _singular(J):
            raise _NoReturn("singular period map: periodic solution is not isolated", nrm)
        return PeriodicSolution(field, mode, z, traj, _period_residual(traj, T), J, _min_sv(J),
                                iterations=it, guess_index=idx)
    # bouncing: look for a bounce to seed the section map
    if z0[0] < 0:
        raise _NoReturn("bouncing guesses need r0 >= 0")
    probe = integrate_bouncing(field, z0, (0.0, 2.0 * T), opts)
    if probe.impacts and not probe.contacts:
        ev = max(probe.impacts, key=lambda e: (e.speed_out, -e.t))
        try:
            return _shoot_section(field, T, cfg, np.array([ev.t, ev.speed_out]), idx)
        except _NoReturn as exc:
            logger.debug("section shooting from guess %d failed: %s", idx, exc)
        except _ContactOnSection:
            return _shoot_direct(field, T, cfg, z0, idx)
    elif probe.contacts:
        return _shoot_direct(field, T, cfg, z0, idx)
    F = _safe(_time_map(field, mode, T, opts))
    z, nrm, J, it = _newton(F, z0, cfg, scale=np.maximum(np.abs(z0), 1.0),
                            lower=np.array([0.0, -np.inf]))
    z = _admissible(z)
    traj = integrate_bouncing(field, z, (0.0, T), opts)
    if _is_rest(traj):
        raise _NoReturn("converged to a rest state on the wall", nrm)
    sv = _min_sv(J)
    if _singular(J):
        raise _NoReturn("singular period map: periodic solution is not isolated", nrm)
    return PeriodicSolution(field, mode, z, traj, _period_residual(traj, T), J, sv,
                            iterations=it, guess_index=idx)


def _shoot_section(field, T, cfg, z0, idx):
    opts = cfg.integrator
    F = _safe(_section_map(field, T, opts))
    sec_cfg = replace(cfg, residual_tol=0.1 * cfg.residual_tol)

    def valid(z):
        return z if z[1] > 0 else None
    try:
        z, nrm, J, it = _newton(F, z0, sec_cfg, scale=np.array([T, max(abs(z0[1]), 1e-2)]),
                                valid=valid)
    except _ContactOnSection:
        raise
    return _finish_section(field, T, z, nrm, J, it, opts, idx)


def _shoot_direct(field, T, cfg, z0, idx):
    """Fallback when contact intervals break the section map."""
    opts = cfg.integrator
    F = _time_map(field, "bouncing", T, opts)

    def obj(z):
        try:
            return float(np.sum(np.abs(F(z))))
        except (IntegrationError, ValueError):
            return math.inf
    res = minimize(obj, np.asarray(z0, dtype=float), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 0.1 * cfg.residual_tol, "maxiter": 2000})
    z = _admissible(res.x)
    traj = integrate_bouncing(field, z, (0.0, T), opts)
    r = _period_residual(traj, T)
    if r > cfg.residual_tol:
        raise _NoReturn(f"direct residual minimisation stalled at {r:.3e}", r)
    if _is_rest(traj):
        raise _NoReturn("converged to a rest state on the wall")
    return PeriodicSolution(field, "bouncing", z, traj, r, np.full((2, 2), np.nan), math.nan,
                            iterations=int(res.nit), guess_index=idx)


def shoot_periodic(field, T: float, cfg: Optional[ShootingConfig] = None, mode: str = "smooth",
                   guess=None) -> PeriodicSolution:
    """``T``-periodic solution of ``x'' + field(t, x) = 0``.

    ``mode`` is ``"smooth"``/``"penalty"`` (no wall) or ``"bouncing"``
    (perfect wall at ``x = 0``).  ``guess`` is a state ``(x0, v0)``, a list of
    states, or a previous :class:`PeriodicSolution`; without it the multistart
    list of ``cfg`` (or an eight-guess energy ladder) is tried in order and
    the first converged guess wins.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = cfg or ShootingConfig()
    guesses = _guess_list(guess, cfg, mode)

    def attempt(item):
        idx, g = item
        try:
            return _shoot_one(field, T, cfg, mode, g, idx), None
        except _NoReturn as exc:
            return None, (exc.best, str(exc))
        except _ContactOnSection:
            return None, (math.inf, "contact on the section")
        except IntegrationError as exc:
            return None, (math.inf, str(exc))

    items = list(enumerate(guesses))
    attempts = []
    if cfg.jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as ex:
            outcomes = list(ex.map(attempt, items))
    else:
        outcomes = []
        for it in items:
            outcomes.append(attempt(it))
            if outcomes[-1][0] is not None:
                break
    for (idx, g), (sol, why) in zip(items, outcomes):
        if sol is not None:
            return sol
        label = "previous solution" if isinstance(g, PeriodicSolution) else \
            tuple(round(float(c), 6) for c in g)
        attempts.append((label, *why))
    raise ShootingFailure("no multistart guess converged", attempts)


# --------------------------------------------------------------------------
# winding equation
# --------------------------------------------------------------------------

@dataclass
class OrbitResult:
    L: float
    spec: WindingSpec
    state0: np.ndarray
    trajectory: BouncingTrajectory
    theta_profile: ThetaProfile
    residuals: dict
    rotation_count: float
    impacts_per_period: int
    theta_value: float
    mode: str
    solution: PeriodicSolution = None
    R0: float = 1.0
    T: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def as_dict(self) -> dict:
        return {"schema": SCHEMA, "L": self.L, "k": self.spec.k, "nu": self.spec.nu,
                "residuals": dict(self.residuals), "rotation_count": self.rotation_count,
                "impacts_per_period": self.impacts_per_period, "theta_value": self.theta_value,
                "mode": self.mode, "state0": [float(self.state0[0]), float(self.state0[1])],
                "R0": self.R0, "T": self.T}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, default=float)


def k_min(nu: int, L0: float, R0: float, T: float, R: float) -> int:
    """Smallest ``k`` with ``2 pi nu / k < T L0 / (R0 + R)**2``."""
    if min(nu, L0, R0, T, R) <= 0:
        raise ValueError("k_min needs positive arguments")
    return int(math.floor(2 * math.pi * nu * (R0 + R) ** 2 / (T * L0))) + 1


def _field_for(problem, L, mode, penalty, kappa):
    base = RadialField(problem, L, force_scale=kappa)
    if mode == "penalty":
        if penalty is None:
            raise ValueError("penalty mode needs PenaltyParams")
        return PenaltyField(base, penalty.n, penalty.delta)
    return base


class _Branch:
    """Solutions along ``L``, each warm-started from the nearest known one.

    ``warm`` may also hold seeds from a neighbouring problem (the previous
    ladder rung); those are only used as initial guesses.
    """

    def __init__(self, problem, mode, cfg, penalty, kappa):
        self.problem, self.mode, self.cfg = problem, mode, cfg
        self.penalty, self.kappa = penalty, kappa
        self.solved: dict = {}
        self.warm: dict = {}

    def _nearest(self, L):
        if not self.warm:
            return None
        Lb = min(self.warm, key=lambda a: (abs(a - L), a not in self.solved))
        return Lb, self.warm[Lb]

    def _try(self, L, guess):
        fld = _field_for(self.problem, L, self.mode, self.penalty, self.kappa)
        return shoot_periodic(fld, self.problem.T, self.cfg, mode=self.mode, guess=guess)

    def solve(self, L, depth=0):
        if L in self.solved:
            return self.solved[L]
        near = self._nearest(L)
        sol = None
        if near is not None:
            try:
                sol = self._try(L, near[1])
            except ShootingFailure:
                if depth < 6 and near[0] in self.solved and \
                        abs(near[0] - L) > 1e-9 * max(1.0, L):
                    self.solve(0.5 * (near[0] + L), depth + 1)
                    return self.solve(L, depth + 1)
        if sol is None:
            sol = self._try(L, None)
        self.solved[L] = self.warm[L] = sol
        return sol

    def theta(self, L):
        if L == 0.0:
            return 0.0      # no angular motion, whatever the radial profile
        return self.solve(L).theta_value


def _assemble(problem, spec, L, sol, mode, cfg, diagnostics):
    T, R0 = problem.T, problem.R0
    traj = sol.trajectory
    theta_val = analysis.theta_functional(L, traj, R0, T)
    prof = ThetaProfile(traj, L, 0.0, R0, T=T)
    res_rho = _period_residual(traj, T)
    a = traj.state(0.0)
    arcs = sorted(traj.pieces, key=lambda p: p.t1)
    b = np.asarray(arcs[-1](T))
    r_res = abs(b[0] - a[0])
    v_res = res_rho - r_res
    residuals = {"rho": float(r_res), "rho_prime": float(v_res),
                 "theta": float(abs(spec.k * theta_val - 2 * math.pi * spec.nu))}
    try:
        rot = analysis.rotation_number(traj, (0.0, T)).count
    except analysis.UndefinedWinding:
        rot = math.nan
    return OrbitResult(L=float(L), spec=spec, state0=np.asarray(sol.state0, dtype=float),
                       trajectory=traj, theta_profile=prof, residuals=residuals,
                       rotation_count=float(rot), impacts_per_period=sol.impacts_per_period,
                       theta_value=float(theta_val), mode=mode, solution=sol, R0=R0, T=T,
                       diagnostics=diagnostics)


SCAN_POINTS = 17


def _rotation_window(problem):
    if problem.rates is None:
        return None
    band = analysis.classify_band(*problem.rates, problem.T)
    return (band.N, band.N + 1) if band.kind == "nonresonant" else None


def continue_in_L(problem: CentralForceProblem, spec: WindingSpec, mode: str = "bouncing",
                  cfg: Optional[ShootingConfig] = None, *, L_range: Optional[tuple] = None,
                  penalty: Optional[PenaltyParams] = None, kappa: float = 1.0,
                  guess=None, rotation="auto", R: Optional[float] = None) -> OrbitResult:
    """Solve ``Theta(L, x_L) = 2 pi nu / k`` along the branch of periodic solutions.

    The grid of 17 points on ``[0, L0]`` is walked upward (continued point to
    point, with halving substeps when a shot fails) until the first bracket
    of the target; Brent's method then refines ``L``.  Since the smallest-L
    bracket is the one used, later grid points could not change the answer.
    Monotonicity is checked on the walked prefix.

    ``rotation`` is the admissible set of rotation counts of the radial
    phase path; ``"auto"`` means ``{N, N+1}`` for a nonresonant ``problem.rates``
    and no restriction otherwise.  The walk stops when the branch leaves the
    admissible set.  With an amplitude bound ``R``, specs with
    ``k < k_min(nu, L0, R0, T, R)`` are rejected up front.  A previous
    :class:`OrbitResult` as ``guess`` tries a local secant refinement first.
    """
    cfg = cfg or ShootingConfig()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    lo, hi = L_range if L_range is not None else (0.0, problem.L0)
    target = spec.theta_target
    if R is not None:
        km = k_min(spec.nu, hi, problem.R0, problem.T, R)
        if spec.k < km:
            env = (0.0, problem.T * hi / (problem.R0 + R) ** 2)
            raise InfeasibleSpec(spec, env, (lo, hi),
                                 note=f"k={spec.k} is below k_min={km} for amplitude bound R={R:g}")
    if rotation == "auto":
        rotation = _rotation_window(problem)
    branch = _Branch(problem, mode, cfg, penalty, kappa)
    tol = cfg.residual_tol * target
    diagnostics = {"kappa": kappa}

    def admissible(L):
        if rotation is None or L == 0.0:
            return True
        try:
            rot = analysis.rotation_number(branch.solve(L).trajectory, (0.0, problem.T)).count
        except analysis.UndefinedWinding:
            return False
        return rotation[0] <= rot <= rotation[-1]

    L_star = None
    if isinstance(guess, OrbitResult):
        L_star = _secant(branch, guess, target, tol, lo, hi)
        if L_star is not None and not admissible(L_star):
            L_star = None
        diagnostics["refined_from"] = guess.L

    if L_star is None:
        Ls, thetas, bracket, left = [], [], None, None
        for L in np.linspace(lo, hi, SCAN_POINTS):
            L = float(L)
            th = branch.theta(L)
            if not admissible(L):
                left = L
                break
            Ls.append(L)
            thetas.append(th)
            d = th - target
            if d == 0:
                bracket = (L, L)
                break
            if len(Ls) > 1 and (thetas[-2] - target) * d < 0:
                bracket = (Ls[-2], L)
                break
        thetas = np.array(thetas)
        diagnostics["scan_L"] = Ls
        diagnostics["scan_theta"] = thetas.tolist()
        diagnostics["monotone"] = bool(np.all(np.diff(thetas) >= 0))
        if left is not None:
            diagnostics["branch_left_rotation_window_at"] = left
        if not diagnostics["monotone"]:
            logger.warning("Theta(L) is not monotone on the scan; using the smallest-L bracket")
        if bracket is None:
            note = (f"branch leaves rotation counts {list(rotation)} at L={left:g}"
                    if left is not None else "")
            raise InfeasibleSpec(spec, (float(thetas.min()), float(thetas.max())),
                                 (lo, Ls[-1]), note=note)
        if bracket[0] == bracket[1]:
            L_star = bracket[0]
        else:
            L_star = _bracketed_root(branch, target, 0.1 * tol, *bracket)
            if abs(branch.theta(L_star) - target) > tol:
                L_star = _secant(branch, None, target, tol, *bracket, start=L_star) or L_star
    sol = branch.solve(L_star)
    return _assemble(problem, spec, L_star, sol, mode, cfg, diagnostics)


class _Hit(Exception):
    def __init__(self, L):
        self.L = L


def _bracketed_root(branch, target, tol, a, b):
    """Brent's method on ``Theta(L) - target``, stopping as soon as ``|.| <= tol``."""
    def fn(L):
        d = branch.theta(L) - target
        if abs(d) <= tol:
            raise _Hit(L)
        return d
    try:
        return brentq(fn, a, b, xtol=1e-15, rtol=1e-13, maxiter=100)
    except _Hit as hit:
        return hit.L


def _secant(branch, guess, target, tol, lo, hi, start=None, iters=25):
    try:
        if guess is not None:
            branch.warm[guess.L] = guess.solution
            L0 = guess.L
        else:
            L0 = start
        th0 = branch.theta(L0)
        L1 = L0 * target / th0 if th0 > 0 else L0 * 1.01
        for _ in range(iters):
            if not lo <= L1 <= hi:
                return None
            th1 = branch.theta(L1)
            if abs(th1 - target) <= tol:
                return L1
            if th1 == th0:
                return None
            L0, L1, th0 = L1, L1 - (th1 - target) * (L1 - L0) / (th1 - th0), th1
    except ShootingFailure:
        return None
    return None


# --------------------------------------------------------------------------
# resonant problems
# --------------------------------------------------------------------------

def solve_resonant(problem: CentralForceProblem, spec: WindingSpec, ll: "analysis.LLProblem",
                   cfg: Optional[ShootingConfig] = None, *,
                   n_ladder: Sequence[float] = (1_000, 10_000), delta: float = 1e-3,
                   tau_grid: int = 512) -> OrbitResult:
    """Orbit for a resonant band under Landesman-Lazer conditions.

    The sign conditions are checked first; then the winding equation is
    solved on the ``kappa``-rescaled penalty ladder, each rung continued from
    the previous one.  The result is the finest rung; its diagnostics carry
    the per-rung ``L`` and ``Theta`` values and a Richardson extrapolation in
    ``1/sqrt(n)`` of ``(L, x(0), x'(0))`` that is handed to the bouncing
    integrator.
    """
    cfg = cfg or ShootingConfig()
    if ll.band.N >= 1:
        reports = analysis.ll_check(ll, tau_grid)
    else:
        reports = {"LLcond2N0": analysis.ll_check_n0(ll, tau_grid=tau_grid)}
    if not all(r.ok for r in reports.values()):
        raise LLRefusal(reports)
    band = (ll.band.mu_lo, ll.band.mu_hi) if ll.band.N >= 1 else (0.0, ll.band.mu_hi)
    rungs, prev = [], None
    for n in n_ladder:
        kappa = kappa_for(n, *band)
        res = continue_in_L(problem, spec, mode="penalty", cfg=cfg,
                            penalty=PenaltyParams(n, delta), kappa=kappa, guess=prev)
        rungs.append((float(n), res))
        prev = res
    fin = rungs[-1][1]
    diag = {"ll": {k: r.as_dict() for k, r in reports.items()},
            "rungs": [{"n": n, "kappa": r.diagnostics.get("kappa"), "L": r.L,
                       "theta_value": r.theta_value} for n, r in rungs]}
    if len(rungs) >= 2:
        (n1, a), (n2, b) = rungs[-2], rungs[-1]
        diag["theta_rel_change"] = abs(b.theta_value - a.theta_value) / abs(b.theta_value)
        w1, w2 = math.sqrt(n1), math.sqrt(n2)
        ext = lambda p, q: (w2 * q - w1 * p) / (w2 - w1)   # noqa: E731
        L_ext = ext(a.L, b.L)
        s_ext = [ext(a.state0[i], b.state0[i]) for i in range(2)]
        diag["extrapolated"] = {"L": L_ext, "state0": s_ext}
        try:
            s0 = (max(s_ext[0], 0.0), s_ext[1] if s_ext[0] > 0 or s_ext[1] >= 0 else -s_ext[1])
            tr = integrate_bouncing(RadialField(problem, max(L_ext, 0.0)), s0, (0.0, problem.T),
                                    cfg.integrator)
            diag["extrapolated"].update(status=tr.status, impacts=len(tr.impacts),
                                        contacts=len(tr.contacts),
                                        end_state=[float(v) for v in tr.state(problem.T)[:2]])
            diag["extrapolated_trajectory"] = tr
        except (IntegrationError, ValueError) as exc:
            diag["extrapolated"]["error"] = str(exc)
    fin.diagnostics.update(diag)
    return fin


# --------------------------------------------------------------------------
# cylinder system
# --------------------------------------------------------------------------

@dataclass
class TransverseComponent:
    """``y'' + f2(t, y) + b2(t, x, y_all) = 0`` with its growth band."""

    f2: Callable
    band: analysis.AsymmetricBand
    b2: Optional[Callable] = None
    name: str = ""


@dataclass
class CylinderProblem:
    """Radial part ``f(t, rho) + b1(t, x, y) rho`` plus transverse oscillators."""

    radial: CentralForceProblem
    transverse: list
    b1: Optional[Callable] = None

    @property
    def coupled(self) -> bool:
        return self.b1 is not None or any(c.b2 is not None for c in self.transverse)


class CylinderFailure(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class CylinderSolution:
    orbit: OrbitResult
    transverse: list            # PeriodicSolution per component
    sweeps: int
    history: list
    residuals: dict
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"schema": SCHEMA, "orbit": self.orbit.as_dict(), "sweeps": self.sweeps,
                "history": self.history, "residuals": self.residuals, "warnings": self.warnings}


class _Periodic:
    """``T``-periodic evaluation of a one-period trajectory component."""

    def __init__(self, traj, T, comp=0):
        self.traj, self.T, self.comp = traj, T, comp

    def __call__(self, t):
        s = t - math.floor(t / self.T) * self.T
        return float(self.traj.state(s)[self.comp])


class _TransverseField:
    def __init__(self, comp, idx, x_of_t, ys, T):
        self.comp, self.idx, self.x, self.ys, self.T = comp, idx, x_of_t, ys, T

    def __call__(self, t, y):
        val = self.comp.f2(t, y)
        if self.comp.b2 is not None:
            yv = [y if j == self.idx else yj(t) for j, yj in enumerate(self.ys)]
            val = val + self.comp.b2(t, self.x(t), yv)
        return val


def _certificate_warnings(cp, rays=(1e2, 1e3, 1e4)):
    out = []
    T = cp.radial.T
    ts = np.linspace(0.0, T, 16, endpoint=False)
    for label, fn in ([("b1", cp.b1)] if cp.b1 else []) + \
            [(f"b2[{i}]", c.b2) for i, c in enumerate(cp.transverse) if c.b2]:
        ratios = []
        for a in rays:
            ys = [a] * len(cp.transverse)
            if label == "b1":
                ratios.append(max(abs(fn(t, a, ys)) for t in ts))
            else:
                ratios.append(max(abs(fn(t, a, ys)) / a for t in ts))
        if max(ratios) == 0.0:
            continue
        if not ratios[-1] < ratios[0] or ratios[-1] > 1e-2:
            out.append(f"{label} does not look sublinear on sampled rays: {ratios}")
    return out


def solve_cylinder(cp: CylinderProblem, spec: WindingSpec, cfg: Optional[ShootingConfig] = None,
                   *, max_sweeps: int = 50, grid: int = 512) -> CylinderSolution:
    """Gauss-Seidel alternation between the radial orbit and each transverse component."""
    cfg = cfg or ShootingConfig()
    T = cp.radial.T
    for i, c in enumerate(cp.transverse):
        b = c.band
        cls = analysis.classify_asymmetric(b.mu_check, b.mu_hat, b.nu_check, b.nu_hat, b.T)
        if not cls.admissible:
            raise ValueError(f"transverse component {i} has an inadmissible band {cls.as_dict()}")
    warnings = _certificate_warnings(cp)
    for w in warnings:
        logger.warning(w)
    ts = np.linspace(0.0, T, grid)
    zero = lambda t: 0.0   # noqa: E731
    ys_fn = [zero] * len(cp.transverse)
    ys_sol = [None] * len(cp.transverse)
    orbit, history = None, []
    prev_profiles = None
    for sweep in range(1, max_sweeps + 1):
        if orbit is None or cp.b1 is not None:
            if cp.b1 is None:
                prob = cp.radial
            else:
                y_now = list(ys_fn)
                R0 = cp.radial.R0
                prob = cp.radial.with_force(
                    lambda t, rho, _f=cp.radial.f, _y=y_now: _f(t, rho) + cp.b1(
                        t, rho - R0, [yy(t) for yy in _y]) * rho)
            orbit = continue_in_L(prob, spec, "bouncing", cfg, guess=orbit)
        x_of_t = _Periodic(orbit.trajectory, T, 0)
        for i, comp in enumerate(cp.transverse):
            fld = _TransverseField(comp, i, x_of_t, ys_fn, T)
            ys_sol[i] = shoot_periodic(fld, T, cfg, mode="smooth", guess=ys_sol[i])
            ys_fn[i] = _Periodic(ys_sol[i].trajectory, T, 0)
        profiles = np.vstack([orbit.trajectory.uniform(grid, 0.0, T)[1][0]] +
                             [s.trajectory.uniform(grid, 0.0, T)[1][0] for s in ys_sol])
        if prev_profiles is not None:
            diff = float(np.max(np.abs(profiles - prev_profiles)))
            history.append(diff)
            if diff <= cfg.residual_tol:
                break
        prev_profiles = profiles
        if not cp.coupled:
            history.append(0.0)
            break
        if len(history) >= 4 and history[-1] > 0.9 * history[-4]:
            raise CylinderFailure("alternation stagnates", history)
    else:
        raise CylinderFailure(f"no convergence in {max_sweeps} sweeps", history)
    residuals = {"radial": orbit.max_residual}
    for i, s in enumerate(ys_sol):
        residuals[f"y{i + 1}"] = s.residual
    return CylinderSolution(orbit, list(ys_sol), sweep, history, residuals, warnings)
