"""Event-aware integration of ``r'' + g(t, r) = 0`` with a wall at ``r = 0``.

Smooth motion is integrated with scipy's ``DOP853`` stepper (the 5(4)
``RK45`` pair on request) and every accepted step keeps its interpolant:
the 7th-order one of ``DOP853`` keeps interpolated derivatives close enough
to the vector field for residual and angular-momentum checks between steps.
Each step is scanned for wall crossings on the interpolant; crossings are
refined with Brent's bracketing method and then either

* reflected (``v -> -v``, exact sign flip) when the incoming speed exceeds
  ``v_stick``, or
* handed to contact mode, where the particle rests on the wall for as long
  as ``g(t, 0) >= 0``.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.optimize import brentq, minimize_scalar

from .model import (BounceEvent, BouncingTrajectory, ContactInterval, DenseArc,
                    PhaseState, PolarState, angular_data)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-11
    abs_tol: float = 1e-13
    max_step: float = 0.02          # keeps interpolant derivatives within 1e3 * rel_tol
    impact_tol: float = 1e-12       # relative to max(1, |t|)
    v_stick: Optional[float] = None  # None: 1e-8 * max(1, |v0|)
    max_events: int = 10_000
    zeno_count: int = 50
    contact_step: Optional[float] = None
    samples_per_step: int = 8
    method: str = "DOP853"           # or "RK45"

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "impact_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.v_stick is not None and self.v_stick < 0:
            raise ValueError("v_stick must be non-negative")
        if self.max_events < 1:
            raise ValueError("max_events must be at least 1")
        if self.method not in ("RK45", "DOP853"):
            raise ValueError(f"unknown stepper {self.method!r}")

    def time_tol(self, t: float) -> float:
        return self.impact_tol * max(1.0, abs(t))

    def stick_speed(self, v_scale: float = 1.0) -> float:
        if self.v_stick is not None:
            return self.v_stick
        return 1e-8 * max(1.0, abs(v_scale))


class IntegrationError(RuntimeError):
    """The adaptive stepper gave up; ``last_t`` is the last accepted time."""

    def __init__(self, message: str, last_t: float, partial=None):
        super().__init__(f"{message} (last good time t={last_t!r})")
        self.last_t = last_t
        self.partial = partial


class ImpactNotFound(ValueError):
    pass


class ContactHandoff(Exception):
    """Raised by :func:`reflect` when the incoming speed is below ``v_stick``."""

    def __init__(self, state):
        super().__init__("incoming speed below v_stick: contact mode, not a bounce")
        self.state = state


def _rhs(field):
    L, R0 = angular_data(field)

    if L:
        def fun(t, y):
            r = y[0]
            rho = r + R0
            return np.array([y[1], -field(t, r), L / (rho * rho)])
    else:
        def fun(t, y):
            return np.array([y[1], -field(t, y[0]), 0.0])
    return fun


def _stepper(field, t0, y0, t1, opts):
    cls = RK45 if opts.method == "RK45" else DOP853
    return cls(_rhs(field), t0, np.asarray(y0, dtype=float), t1, rtol=opts.rel_tol,
                atol=opts.abs_tol, max_step=opts.max_step)


# --------------------------------------------------------------------------
# event localisation
# --------------------------------------------------------------------------

def _refine_root(fn, lo, hi, opts):
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return brentq(fn, lo, hi, xtol=opts.time_tol(hi), rtol=4 * np.finfo(float).eps, maxiter=200)


def locate_impact(segment, t_lo: Optional[float] = None, t_hi: Optional[float] = None,
                  opts: Optional[IntegratorOptions] = None, samples: int = 64) -> float:
    """Earliest time in ``[t_lo, t_hi]`` where the radial coordinate reaches 0.

    ``segment`` is either a dense arc (state rows, ``t0``/``t1`` attributes)
    or a plain callable ``t -> r(t)``.  A sign change is bracketed on a
    uniform sample and refined with Brent's method to ``impact_tol``.  If no
    sign change is visible, a sampled minimum within ``abs_tol`` of the wall
    is reported as a grazing contact; otherwise :class:`ImpactNotFound`.
    """
    opts = opts or IntegratorOptions()
    if hasattr(segment, "t0") and hasattr(segment, "derivative"):
        t_lo = segment.t0 if t_lo is None else t_lo
        t_hi = segment.t1 if t_hi is None else t_hi

        def r(t):
            return float(segment(t)[0])
    else:
        if t_lo is None or t_hi is None:
            raise ValueError("bounds are required for a plain callable")

        def r(t):
            return float(segment(t))
    ts = np.linspace(t_lo, t_hi, samples + 1)
    rs = np.array([r(t) for t in ts])
    if rs[0] == 0.0:
        return float(ts[0])
    sign0 = np.sign(rs[0])
    change = np.nonzero(np.sign(rs[1:]) != sign0)[0]
    if change.size:
        i = change[0] + 1
        return float(_refine_root(r, ts[i - 1], ts[i], opts))
    j = int(np.argmin(np.abs(rs)))
    a, b = ts[max(j - 1, 0)], ts[min(j + 1, samples)]
    res = minimize_scalar(lambda t: abs(r(t)), bounds=(a, b), method="bounded",
                          options={"xatol": opts.time_tol(ts[j])})
    if abs(r(res.x)) <= opts.abs_tol:
        return float(res.x)
    raise ImpactNotFound(f"r does not reach the wall on [{t_lo}, {t_hi}]")


@dataclass
class _Event:
    kind: str          # "cross" or "graze"
    t: float
    state: np.ndarray


def _scan_step(d, a, b, t_start, r_floor, opts):
    ts = np.linspace(a, b, opts.samples_per_step + 1)
    ys = d(ts)
    r, v = ys[0], ys[1]
    ok = ts > t_start + opts.time_tol(t_start)
    below = np.nonzero(ok & (r < r_floor))[0]

    def rf(s):
        return float(d(s)[0]) - r_floor
    if below.size:
        i = below[0]
        lo = ts[i - 1] if i > 0 else a
        lo = max(lo, t_start + opts.time_tol(t_start)) if lo <= t_start else lo
        if rf(lo) < 0:
            lo = a
            if rf(a) < 0:     # hop shorter than the time tolerance: treat as touching down
                return _Event("graze", a, d(a))
        t_star = _refine_root(rf, lo, ts[i], opts)
        return _Event("cross", t_star, d(t_star))
    for j in range(len(ts) - 1):
        if v[j] < 0.0 <= v[j + 1] and ok[j + 1]:
            t_min = _refine_root(lambda s: float(d(s)[1]), ts[j], ts[j + 1], opts)
            r_min = float(d(t_min)[0])
            if r_min < r_floor:
                t_star = _refine_root(rf, ts[j], t_min, opts)
                return _Event("cross", t_star, d(t_star))
            if r_min <= opts.abs_tol:
                return _Event("graze", t_min, d(t_min))
    return None


def _first_crossing(d, a, b, t_start, direction, opts):
    ts = np.linspace(a, b, opts.samples_per_step + 1)
    r = d(ts)[0]
    for j in range(len(ts) - 1):
        if ts[j + 1] <= t_start + opts.time_tol(t_start):
            continue
        r0, r1 = r[j], r[j + 1]
        up = r0 < 0.0 <= r1
        down = r0 > 0.0 >= r1
        if (direction >= 0 and up) or (direction <= 0 and down):
            lo = ts[j] if ts[j] > t_start else t_start + opts.time_tol(t_start)
            return _refine_root(lambda s: float(d(s)[0]), lo, ts[j + 1], opts)
    return None


# --------------------------------------------------------------------------
# smooth integration
# --------------------------------------------------------------------------

def _run(field, t0, y0, t1, opts, scan=None):
    solver = _stepper(field, t0, y0, t1, opts)
    nodes, interps = [t0], []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            partial = DenseArc(nodes, interps) if interps else None
            raise IntegrationError(msg or "step size underflow", nodes[-1], partial)
        d = solver.dense_output()
        nodes.append(solver.t)
        interps.append(d)
        if scan is not None:
            hit = scan(d, solver.t_old, solver.t)
            if hit is not None:
                return DenseArc(nodes, interps).truncated(hit.t, end=hit.state), hit
    return DenseArc(nodes, interps), None


def integrate_smooth(field, s0, t0: float, t1: float, opts: Optional[IntegratorOptions] = None,
                     *, theta0: float = 0.0, stop_on_crossing: Optional[int] = None) -> DenseArc:
    """Integrate ``x'' + field(t, x) = 0`` on ``[t0, t1]`` without any wall.

    The returned :class:`DenseArc` answers state queries anywhere in its
    span.  With ``stop_on_crossing`` set to +1/-1/0 integration stops at the
    first zero of ``x`` after ``t0`` crossed upwards/downwards/either way;
    the crossing time is stored in ``arc.event_time`` (``None`` if absent).
    """
    opts = opts or IntegratorOptions()
    if not t1 > t0:
        raise ValueError("integration needs t1 > t0")
    y0 = [float(s0[0]), float(s0[1]), float(theta0)]
    scan = None
    if stop_on_crossing is not None:
        def scan(d, a, b):
            tc = _first_crossing(d, a, b, t0, stop_on_crossing, opts)
            return None if tc is None else _Event("cross", tc, d(tc))
    arc, hit = _run(field, float(t0), y0, float(t1), opts, scan)
    arc.event_time = None if hit is None else hit.t
    return arc


# --------------------------------------------------------------------------
# wall interaction
# --------------------------------------------------------------------------

def reflect(state, opts: Optional[IntegratorOptions] = None, *, R0: Optional[float] = None):
    """Perfect bounce: clamp to the wall and flip the sign of the radial speed.

    Accepts a :class:`PhaseState` (wall at ``r = 0``) or a
    :class:`PolarState` together with the wall radius ``R0``; the angle and
    angular momentum pass through untouched.  Raises :class:`ContactHandoff`
    when ``|v| <= v_stick``.
    """
    opts = opts or IntegratorOptions()
    if isinstance(state, PolarState):
        if R0 is None:
            raise ValueError("reflecting a polar state needs the wall radius R0")
        gap = state.rho - R0
    else:
        gap = state[0]
    v = state[1]
    if abs(gap) > opts.abs_tol:
        raise ValueError(f"state is not on the wall (gap {gap!r})")
    if v >= 0:
        raise ValueError("reflection needs an incoming (negative) radial velocity")
    if -v <= opts.stick_speed():
        raise ContactHandoff(state)
    if isinstance(state, PolarState):
        return PolarState(R0, -v, state.theta, state.L)
    return PhaseState(0.0, -v)


def _contact_step(field, opts, t0, t_end):
    if opts.contact_step is not None:
        return opts.contact_step
    T = getattr(field, "T", None)
    h = (T / 512.0) if T else (t_end - t0) / 512.0
    return min(h, opts.max_step) if h > 0 else 1e-3


def contact_advance(field, t0: float, t_end: float, opts: Optional[IntegratorOptions] = None):
    """Stay on the wall from ``t0`` while ``g(t, 0) >= 0``.

    ``g(t, 0)`` is sampled at the contact step and the first sample below
    ``-abs_tol`` ends the contact; the release time is the refined zero of
    ``g(t, 0)`` in that last bracket.  Returns ``(t_release, (t0, t_release))``.
    """
    opts = opts or IntegratorOptions()

    def gw(t):
        return float(field(t, 0.0))
    if gw(t0) < -opts.abs_tol:
        raise ValueError(f"contact mode needs g(t0, 0) >= 0, got {gw(t0)!r} at t0={t0!r}")
    h = _contact_step(field, opts, t0, t_end)
    a = t0
    while a < t_end:
        b = min(a + h, t_end)
        gb = gw(b)
        if gb < -opts.abs_tol:
            ga = gw(a)
            t_rel = a if ga <= 0.0 else _refine_root(gw, a, b, opts)
            return t_rel, (t0, t_rel)
        a = b
    return t_end, (t0, t_end)


# --------------------------------------------------------------------------
# bouncing integration
# --------------------------------------------------------------------------

def _terminal_impact(state, t0, t1, v_stick, opts) -> bool:
    """Whether the wall is hit at the end of the span, up to integration accuracy.

    An impact exactly at ``t1`` lands on either side of it after rounding and
    global error (which grows roughly like ``rel_tol`` per unit time);
    reporting it at ``t1`` keeps impact counts on ``(t0, t1]`` stable.
    """
    r, v = float(state[0]), float(state[1])
    window = opts.time_tol(t1) + opts.rel_tol * (t1 - t0)
    return v < -v_stick and 0.0 <= r <= -v * window + opts.abs_tol


def integrate_bouncing(field, s0, t_span, opts: Optional[IntegratorOptions] = None,
                       *, theta0: float = 0.0) -> BouncingTrajectory:
    """Bouncing motion of ``r'' + g(t, r) = 0`` on ``r >= 0``.

    Between wall hits the motion is smooth; transversal hits reflect the
    velocity exactly; slow touchdowns and grazing minima enter contact mode
    when the field pins the particle to the wall.  Fifty bounces packed into
    less than ``1e3 * impact_tol`` are treated as a Zeno cascade and also
    switch to contact mode.  When ``max_events`` is exhausted the partial
    trajectory is returned with ``status == "event_budget"``.
    """
    opts = opts or IntegratorOptions()
    t0, t1 = float(t_span[0]), float(t_span[1])
    r0, v0 = float(s0[0]), float(s0[1])
    if r0 < 0:
        raise ValueError(f"bouncing motion starts off the wall, got r0={r0!r}")
    if r0 == 0.0 and v0 < 0:
        raise ValueError("a state on the wall must not point into it")
    L, R0 = angular_data(field)
    omega_wall = L / R0 ** 2
    v_stick = opts.stick_speed(v0)
    arcs, impacts, contacts, diags = [], [], [], []
    if not t1 > t0:
        return BouncingTrajectory((), (), (), (t0, t1), L, R0)

    t, y = t0, np.array([r0, v0, float(theta0)])
    at_rest = r0 == 0.0 and abs(v0) <= v_stick
    soft = at_rest
    events = 0
    status = "ok"
    recent = deque(maxlen=opts.zeno_count)

    while t < t1:
        if at_rest:
            y = np.array([0.0, 0.0, y[2]])
            if float(field(t, 0.0)) >= 0.0:
                t_rel, _ = contact_advance(field, t, t1, opts)
                if t_rel > t:
                    contacts.append(ContactInterval(t, t_rel, float(y[2]), omega_wall))
                    y = np.array([0.0, 0.0, y[2] + omega_wall * (t_rel - t)])
                    t = t_rel
                if t >= t1:
                    break
            at_rest, soft = False, True

        state = {"soft": soft}

        def scan(d, a, b, _start=t, _state=state):
            hit = _scan_step(d, a, b, _start, -opts.abs_tol if _state["soft"] else 0.0, opts)
            if _state["soft"] and np.max(d(np.linspace(a, b, 5))[0]) > opts.abs_tol:
                _state["soft"] = False
            return hit
        arc, hit = _run(field, t, y, t1, opts, scan)
        if arc.t1 > arc.t0:
            arcs.append(arc)
        if hit is None:
            end = arc(t1)
            if _terminal_impact(end, t0, t1, v_stick, opts):
                impacts.append(BounceEvent.at(t1, float(end[1])))
            break
        events += 1
        t = float(hit.t)
        v_in, theta = float(hit.state[1]), float(hit.state[2])
        if events > opts.max_events:
            status = "event_budget"
            diags.append(f"event budget of {opts.max_events} exhausted at t={t!r}; "
                         "possible chattering (Zeno) motion")
            break
        if hit.kind == "cross" and v_in < -v_stick:
            ev = BounceEvent.at(t, v_in)
            impacts.append(ev)
            y = np.array([0.0, ev.speed_out, theta])
            soft = False
            recent.append(t)
            if len(recent) == opts.zeno_count and recent[-1] - recent[0] < 1e3 * opts.time_tol(t):
                diags.append(f"Zeno cascade of {opts.zeno_count} bounces ending at t={t!r}; "
                             "switching to contact mode")
                recent.clear()
                at_rest = True
        else:
            y = np.array([0.0, 0.0, theta])
            at_rest = True

    return BouncingTrajectory(tuple(arcs), tuple(impacts), tuple(contacts), (t0, t1), L, R0,
                              status=status, diagnostics=tuple(diags))


def with_options(opts: Optional[IntegratorOptions], **changes) -> IntegratorOptions:
    return replace(opts or IntegratorOptions(), **changes)
