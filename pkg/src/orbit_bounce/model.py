"""Problem definitions, states and trajectory containers.

A problem is the triple ``(f, T, R0)``: a radial force ``f(t, rho)`` that is
``T``-periodic in time, acting on a particle outside a wall of radius ``R0``.
In wall-shifted coordinates ``r = rho - R0`` the radial motion obeys
``r'' + g(L, t, r) = 0`` with

    g(L, t, r) = -L**2 / (r + R0)**3 + f(t, r + R0)

and the angle follows ``theta' = L / (r + R0)**2``.  Angles are always kept
unwrapped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, interpolate

from .expr import compile_expression

SCHEMA = "orbit-bounce/1"


# --------------------------------------------------------------------------
# problems and fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CentralForceProblem:
    """Radial force ``f(t, rho)``, period ``T`` and wall radius ``R0``.

    ``rates`` optionally records the asymptotic growth band
    ``(mu_check, mu_hat)`` of ``f(t, rho)/rho``; the built-in catalog fills it
    in automatically.  ``force_spec`` keeps the catalog description so the
    problem can be written back to a file.
    """

    f: Callable
    T: float
    R0: float
    L0: float = 10.0
    rates: Optional[tuple] = None
    force_spec: Optional[dict] = None
    name: str = ""

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"period T must be positive, got {self.T}")
        if not self.R0 > 0:
            raise ValueError(f"wall radius R0 must be positive, got {self.R0}")
        if not self.L0 > 0:
            raise ValueError(f"L0 must be positive, got {self.L0}")

    def force(self, t, rho):
        return self.f(t, rho)

    def periodicity_defect(self, samples: int = 100, seed: int = 0) -> float:
        """Largest ``|f(t+T, rho) - f(t, rho)| / (1 + |f(t, rho)|)`` over random samples."""
        rng = np.random.default_rng(seed)
        ts = rng.uniform(-5 * self.T, 5 * self.T, samples)
        rhos = self.R0 + rng.exponential(2.0 * self.R0, samples)
        worst = 0.0
        for t, rho in zip(ts, rhos):
            a = float(self.f(t, rho))
            b = float(self.f(t + self.T, rho))
            worst = max(worst, abs(b - a) / (1.0 + abs(a)))
        return worst

    def with_force(self, f: Callable, **changes) -> "CentralForceProblem":
        kw = dict(f=f, T=self.T, R0=self.R0, L0=self.L0, rates=self.rates,
                  force_spec=None, name=self.name)
        kw.update(changes)
        return CentralForceProblem(**kw)


def _affine_forcing(mu, A=0.0, omega=0.0, phi=0.0, B=0.0, R0=1.0):
    def f(t, rho):
        return mu * (rho - R0) + A * np.sin(omega * t + phi) + B
    return f


def _bounded_perturbation(mu, eps, A=0.0, omega=0.0, phi=0.0, B=0.0, R0=1.0):
    base = _affine_forcing(mu, A, omega, phi, B, R0)

    def f(t, rho):
        return base(t, rho) + eps * np.sin(rho - R0) * np.cos(omega * t)
    return f


FORCE_KINDS = ("affine_forcing", "bounded_perturbation", "expression")


def make_force(kind: str, params: dict, T: float, R0: float):
    """Build ``(f, rates)`` for a catalog force description.

    * ``affine_forcing``: ``mu*(rho-R0) + A*sin(omega*t + phi) + B``
    * ``bounded_perturbation``: the above plus ``eps*sin(rho-R0)*cos(omega*t)``
    * ``expression``: ``params["expr"]`` in the variables ``t``, ``rho`` and
      ``x = rho - R0`` (``T`` and ``R0`` are bound); rates must be supplied
      as ``params["rates"]``.
    """
    params = dict(params)
    if kind == "affine_forcing":
        f = _affine_forcing(R0=R0, **params)
        rates = (float(params["mu"]), float(params["mu"]))
    elif kind == "bounded_perturbation":
        f = _bounded_perturbation(R0=R0, **params)
        rates = (float(params["mu"]), float(params["mu"]))
    elif kind == "expression":
        expr = compile_expression(params["expr"], ["t", "rho", "x"], T=T, R0=R0)

        def f(t, rho, _e=expr):
            return _e(t, rho, rho - R0)
        rates = tuple(params["rates"]) if params.get("rates") is not None else None
    else:
        raise ValueError(f"unknown force kind {kind!r}; expected one of {FORCE_KINDS}")
    return f, rates


def problem_from_force(kind: str, params: dict, T: float, R0: float, L0: float = 10.0,
                       name: str = "") -> CentralForceProblem:
    f, rates = make_force(kind, params, T, R0)
    prob = CentralForceProblem(f=f, T=T, R0=R0, L0=L0, rates=rates,
                               force_spec={"kind": kind, "params": dict(params)}, name=name)
    if prob.periodicity_defect() > 1e-12:
        raise ValueError(f"force {kind} with {params} is not {T}-periodic in t")
    return prob


def catalog_problem() -> CentralForceProblem:
    """``f(t, rho) = 2.5 (rho - 1) + 0.1 sin 2t`` with ``T = pi``, ``R0 = 1``.

    Its growth rate 2.5 sits strictly between the asymptotes 1 and 4, so the
    problem is nonresonant with ``N = 1``.
    """
    return problem_from_force("affine_forcing", {"mu": 2.5, "A": 0.1, "omega": 2.0},
                              T=math.pi, R0=1.0, L0=10.0, name="catalog-mu2.5")


class RadialField:
    """The wall-shifted field ``g(L, t, r)``; callable as ``field(t, r)``.

    ``force_scale`` multiplies ``f`` and is only used by the rescaled
    penalty nonlinearities near resonance; it defaults to 1.
    """

    def __init__(self, problem: CentralForceProblem, L: float, force_scale: float = 1.0):
        if L < 0:
            raise ValueError(f"angular momentum must be non-negative, got {L}")
        self.problem = problem
        self.L = float(L)
        self.R0 = float(problem.R0)
        self.T = float(problem.T)
        self.force_scale = float(force_scale)
        self._L2 = self.L * self.L

    def __call__(self, t, r):
        rho = r + self.R0
        val = self.problem.f(t, rho)
        if self.force_scale != 1.0:
            val = self.force_scale * val
        if self._L2:
            val = val - self._L2 / rho ** 3
        return val

    def wall(self, t):
        """``g(L, t, 0)``: positive values push the particle onto the wall."""
        return self(t, 0.0)

    def __repr__(self):
        return f"RadialField(L={self.L}, R0={self.R0}, T={self.T})"


def radial_field(problem: CentralForceProblem, L: float) -> RadialField:
    return RadialField(problem, L)


def angular_data(field) -> tuple[float, float]:
    """``(L, R0)`` carried by a field, or ``(0, 1)`` for plain scalar fields."""
    L = getattr(field, "L", None)
    R0 = getattr(field, "R0", None)
    if L is None or R0 is None:
        return 0.0, 1.0
    return float(L), float(R0)


# --------------------------------------------------------------------------
# states and events
# --------------------------------------------------------------------------

class PhaseState(NamedTuple):
    r: float
    v: float


class PolarState(NamedTuple):
    rho: float
    v: float
    theta: float
    L: float


def to_polar(s: PhaseState, R0: float, theta: float, L: float) -> PolarState:
    return PolarState(s.r + R0, s.v, theta, L)


@dataclass(frozen=True)
class BounceEvent:
    t: float
    speed_in: float
    speed_out: float

    def __post_init__(self):
        if self.speed_out != -self.speed_in:
            raise ValueError("a perfect bounce must negate the radial velocity exactly")

    @classmethod
    def at(cls, t: float, v_in: float) -> "BounceEvent":
        return cls(float(t), float(v_in), -float(v_in))


@dataclass(frozen=True)
class WindingSpec:
    """``k`` forcing periods per ``nu`` revolutions around the wall."""

    k: int
    nu: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k}")
        if int(self.nu) != self.nu or self.nu < 1:
            raise ValueError(f"nu must be an integer >= 1, got {self.nu}")

    @property
    def theta_target(self) -> float:
        """Angle the radial period must sweep: ``2 pi nu / k``."""
        return 2.0 * math.pi * self.nu / self.k


# --------------------------------------------------------------------------
# trajectory pieces
# --------------------------------------------------------------------------

def _power_coeffs(d) -> np.ndarray:
    """Coefficients ``c`` with ``y(t_old + x h) = sum_j c[:, j] x**j`` for a scipy dense output."""
    if hasattr(d, "Q"):            # RK45/RK23: y_old + h * sum_k Q[:, k] x**(k+1)
        return np.hstack([d.y_old[:, None], d.h * d.Q])
    if hasattr(d, "F"):            # DOP853: nested products with x and (1 - x)
        c = np.zeros((len(d.y_old), len(d.F) + 1))
        for i, f in enumerate(reversed(d.F)):
            c[:, 0] += f
            shifted = np.zeros_like(c)
            shifted[:, 1:] = c[:, :-1]
            c = shifted if i % 2 == 0 else c - shifted
        c[:, 0] += d.y_old
        return c
    raise TypeError(f"unsupported dense output {type(d).__name__}")


class DenseArc:
    """A smooth trajectory piece stitched from per-step Runge-Kutta interpolants.

    States are rows ``(r, v, theta)``.  Evaluation uses the interpolants only,
    never re-integration.
    """

    def __init__(self, nodes: Sequence[float], interpolants: Sequence, t1: Optional[float] = None,
                 end: Optional[np.ndarray] = None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.end = None if end is None else np.asarray(end, dtype=float)
        self.interpolants = list(interpolants)
        if len(self.interpolants) != len(self.nodes) - 1:
            raise ValueError("need one interpolant per step")
        self.t0 = float(self.nodes[0])
        self.t1 = float(self.nodes[-1] if t1 is None else t1)
        self._cache: dict = {}

    def _index(self, t):
        idx = np.searchsorted(self.nodes, t, side="right") - 1
        return np.clip(idx, 0, len(self.interpolants) - 1)

    def _coeffs(self, i):
        c = self._cache.get(i)
        if c is None:
            c = self._cache[i] = _power_coeffs(self.interpolants[i])
        return c

    def _eval(self, t, deriv: bool):
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._index(tt)
        out = np.empty((3, tt.size))
        for i in np.unique(idx):
            mask = idx == i
            d = self.interpolants[i]
            x = (tt[mask] - d.t_old) / d.h
            c = self._coeffs(i)
            powers = np.arange(c.shape[1])
            if deriv:
                p = powers[1:, None] * x[None, :] ** (powers[1:, None] - 1)
                out[:, mask] = (c[:, 1:] @ p) / d.h
            else:
                out[:, mask] = c @ (x[None, :] ** powers[:, None])
        if self.end is not None and not deriv:
            out[:, tt == self.t1] = self.end[:, None]
        return out[:, 0] if scalar else out

    def __call__(self, t):
        return self._eval(t, deriv=False)

    def derivative(self, t):
        return self._eval(t, deriv=True)

    def truncated(self, t1: float, end: Optional[np.ndarray] = None) -> "DenseArc":
        """The arc up to ``t1``; ``end`` pins the state reported at ``t1`` (an event state)."""
        keep = int(np.searchsorted(self.nodes, t1, side="left"))
        keep = max(keep, 1)
        return DenseArc(self.nodes[: keep + 1], self.interpolants[:keep], t1=t1, end=end)

    def clipped(self, t0: float, t1: float) -> "DenseArc":
        """The same interpolants restricted to ``[t0, t1]`` inside the span."""
        t0, t1 = max(t0, self.t0), min(t1, self.t1)
        lo = int(np.clip(np.searchsorted(self.nodes, t0, side="right") - 1, 0, len(self.interpolants) - 1))
        hi = int(np.clip(np.searchsorted(self.nodes, t1, side="left"), lo + 1, len(self.nodes) - 1))
        nodes = np.concatenate([[t0], self.nodes[lo + 1:hi], [t1]])
        end = self.end if t1 == self.t1 else None
        return DenseArc(nodes, self.interpolants[lo:hi], t1=t1, end=end)

    @property
    def end_state(self):
        return self(self.t1)

    @property
    def start_state(self):
        return self(self.t0)


class SampledArc:
    """A smooth piece rebuilt from samples (for imported trajectories).

    ``r`` uses a cubic Hermite spline with slopes ``v``; ``v`` and ``theta``
    use cubic splines, so ``derivative`` gives ``(v, v', theta')``.
    """

    def __init__(self, t, r, v, theta):
        t = np.asarray(t, dtype=float)
        if t.size < 2:
            raise ValueError("a sampled arc needs at least two samples")
        self.t0, self.t1 = float(t[0]), float(t[-1])
        self.samples = t
        self._r = interpolate.CubicHermiteSpline(t, r, v)
        kind = "not-a-knot" if t.size > 3 else "natural"
        if t.size == 2:
            self._v = interpolate.make_interp_spline(t, v, k=1)
            self._th = interpolate.make_interp_spline(t, theta, k=1)
        else:
            self._v = interpolate.CubicSpline(t, v, bc_type=kind)
            self._th = interpolate.CubicSpline(t, theta, bc_type=kind)

    def __call__(self, t):
        return np.array([self._r(t), self._v(t), self._th(t)])

    def derivative(self, t):
        return np.array([self._r.derivative()(t), self._v.derivative()(t), self._th.derivative()(t)])

    @property
    def end_state(self):
        return self(self.t1)

    @property
    def start_state(self):
        return self(self.t0)


@dataclass(frozen=True)
class ContactInterval:
    """A stretch of time spent on the wall (``r = v = 0``)."""

    t0: float
    t1: float
    theta0: float = 0.0
    omega: float = 0.0   # angular speed L / R0**2 while sticking

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        th = self.theta0 + self.omega * (t - self.t0)
        z = np.zeros_like(th)
        return np.array([z, z, th])

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        z = np.zeros_like(t)
        return np.array([z, z, z + self.omega])

    @property
    def length(self) -> float:
        return self.t1 - self.t0


@dataclass(frozen=True)
class BouncingTrajectory:
    """Piecewise trajectory: smooth arcs, instantaneous bounces and wall contacts.

    ``status`` is ``"ok"`` or names the reason the trajectory stopped early
    (``"event_budget"``); ``diagnostics`` collects human-readable notes such
    as Zeno detections.
    """

    arcs: tuple
    impacts: tuple
    contacts: tuple
    t_span: tuple
    L: float = 0.0
    R0: float = 1.0
    status: str = "ok"
    diagnostics: tuple = field(default_factory=tuple)

    @property
    def t_end(self) -> float:
        ends = [p.t1 for p in self.pieces]
        return max(ends) if ends else self.t_span[0]

    @property
    def pieces(self) -> list:
        return sorted(list(self.arcs) + list(self.contacts), key=lambda p: (p.t0, p.t1))

    @property
    def impact_times(self) -> np.ndarray:
        return np.array([e.t for e in self.impacts])

    @property
    def breakpoints(self) -> list[float]:
        pts = [e.t for e in self.impacts]
        for c in self.contacts:
            pts.extend([c.t0, c.t1])
        return sorted(set(pts))

    def _piece_for(self, t: float):
        pieces = self.pieces
        if not pieces:
            raise ValueError("empty trajectory")
        chosen = pieces[0]
        for p in pieces:
            if p.t0 <= t:
                chosen = p
            else:
                break
        return chosen

    def state(self, t):
        """Rows ``(r, v, theta)``; at a bounce time the outgoing state is returned."""
        if np.ndim(t) == 0:
            return np.asarray(self._piece_for(float(t))(float(t)), dtype=float)
        tt = np.asarray(t, dtype=float)
        out = np.empty((3, tt.size))
        for j, tj in enumerate(tt):
            out[:, j] = self._piece_for(tj)(tj)
        return out

    def sample(self, per_arc: int = 64) -> np.ndarray:
        """Vectorised sampling: array of rows ``(t, r, v, theta)`` piece by piece."""
        rows = []
        for p in self.pieces:
            ts = np.linspace(p.t0, p.t1, per_arc if p.t1 > p.t0 else 1)
            st = np.asarray(p(ts)).reshape(3, -1)
            rows.append(np.vstack([ts, st]).T)
        return np.vstack(rows) if rows else np.empty((0, 4))

    def restricted(self, t0: float, t1: float) -> "BouncingTrajectory":
        """The part of the trajectory on ``[t0, t1]`` (bounces at ``t0`` are kept)."""
        arcs = tuple(a.clipped(t0, t1) for a in self.arcs if a.t1 > t0 and a.t0 < t1)
        impacts = tuple(e for e in self.impacts if t0 <= e.t <= t1)
        contacts = tuple(ContactInterval(max(c.t0, t0), min(c.t1, t1),
                                         c.theta0 + c.omega * (max(c.t0, t0) - c.t0), c.omega)
                         for c in self.contacts if c.t1 > t0 and c.t0 < t1)
        return BouncingTrajectory(arcs, impacts, contacts, (t0, t1), self.L, self.R0,
                                  self.status, self.diagnostics)

    def uniform(self, num: int, t0: Optional[float] = None, t1: Optional[float] = None):
        """``(t, states)`` on a uniform grid, evaluated piecewise."""
        t0 = self.t_span[0] if t0 is None else t0
        t1 = self.t_end if t1 is None else t1
        ts = np.linspace(t0, t1, num)
        out = np.empty((3, num))
        pieces = self.pieces
        starts = np.array([p.t0 for p in pieces])
        idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(pieces) - 1)
        for i in np.unique(idx):
            m = idx == i
            out[:, m] = np.asarray(pieces[i](ts[m])).reshape(3, -1)
        return ts, out


# --------------------------------------------------------------------------
# angular motion
# --------------------------------------------------------------------------

def _profile_callable(x):
    if isinstance(x, BouncingTrajectory):
        return (lambda t: x.state(t)[0]), x.breakpoints
    if callable(x):
        return x, []
    raise TypeError("radial profile must be callable or a BouncingTrajectory")


class ThetaProfile:
    """``theta(t) = theta0 + int_0^t L / (R0 + x(s))**2 ds``.

    With a period ``T`` the integral over whole periods is computed once and
    reused, so evaluation at ``t = k T`` costs one quadrature.
    """

    def __init__(self, x, L: float, theta0: float, R0: float, T: Optional[float] = None,
                 breakpoints: Sequence[float] = (), t_ref: float = 0.0):
        self._x, bps = _profile_callable(x)
        self.breakpoints = sorted(set(list(bps) + list(breakpoints)))
        self.L, self.theta0, self.R0, self.T = float(L), float(theta0), float(R0), T
        self.t_ref = float(t_ref)
        self._period_value = None
        if self.L and T is not None:
            grid = np.linspace(self.t_ref, self.t_ref + T, 513)
            self._check(grid)

    def _check(self, grid):
        xs = np.array([float(self._x(t)) for t in grid])
        if np.any(xs <= -self.R0):
            raise ValueError("radial profile reaches -R0: angular velocity is singular")

    def _integral(self, a: float, b: float) -> float:
        if b == a or self.L == 0.0:
            return 0.0
        R0, L, x = self.R0, self.L, self._x

        def integrand(s):
            return L / (R0 + float(x(s))) ** 2
        lo, hi = min(a, b), max(a, b)
        pts = [p for p in self.breakpoints if lo < p < hi]
        val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=0.0,
                                epsrel=1e-12, limit=400)
        return val if b > a else -val

    @property
    def period_value(self) -> float:
        if self.T is None:
            raise ValueError("profile has no period")
        if self._period_value is None:
            self._period_value = self._integral(self.t_ref, self.t_ref + self.T)
        return self._period_value

    def __call__(self, t):
        if np.ndim(t) != 0:
            return np.array([self(float(s)) for s in np.asarray(t).ravel()]).reshape(np.shape(t))
        t = float(t)
        if self.T is None:
            if self.L:
                self._check(np.linspace(self.t_ref, t, 257))
            return self.theta0 + self._integral(self.t_ref, t)
        m = math.floor((t - self.t_ref) / self.T)
        rem = t - self.t_ref - m * self.T
        return self.theta0 + m * self.period_value + self._integral(self.t_ref, self.t_ref + rem)


def theta_from_radial(x, L: float, theta0: float = 0.0, *, R0: float,
                      T: Optional[float] = None, breakpoints: Sequence[float] = ()) -> ThetaProfile:
    """Angle profile generated by a radial profile ``x`` (wall-shifted).

    ``x`` is a callable ``t -> x(t)`` or a :class:`BouncingTrajectory`; if
    ``T`` is given, ``x`` is treated as ``T``-periodic and extended.
    """
    return ThetaProfile(x, L, theta0, R0, T=T, breakpoints=breakpoints)
