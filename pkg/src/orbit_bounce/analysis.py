"""Resonance bands, phase-plane diagnostics and trajectory checks.

The resonance picture is organised by the asymptotes ``mu_j = (j pi / T)**2``
of the periodic Dancer-Fucik spectrum: a growth band ``[mu_check, mu_hat]``
is nonresonant when it fits strictly between two consecutive asymptotes.
Near resonance, sign conditions on the weighted integrals

    I(tau) = int_0^T h(t) psi_j(t + tau) dt

of the asymptotic residual ``h`` replace the gap condition; ``psi_j`` is the
``T/j``-periodic train of positive sine arches.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.optimize import brentq

from .model import SCHEMA, BouncingTrajectory, CentralForceProblem

SIGN_MARGIN = 1e-8


# --------------------------------------------------------------------------
# resonance bands
# --------------------------------------------------------------------------

def mu_asymptote(j: int, T: float) -> float:
    if j < 0 or T <= 0:
        raise ValueError("need j >= 0 and T > 0")
    return (j * math.pi / T) ** 2


@dataclass(frozen=True)
class ResonanceBand:
    N: int
    T: float

    def __post_init__(self):
        if self.N < 0 or int(self.N) != self.N:
            raise ValueError("N must be a non-negative integer")

    @property
    def mu_lo(self) -> float:
        return mu_asymptote(self.N, self.T)

    @property
    def mu_hi(self) -> float:
        return mu_asymptote(self.N + 1, self.T)


@dataclass(frozen=True)
class BandClass:
    """Outcome of :func:`classify_band`.

    ``kind`` is ``"nonresonant"`` (with ``N``), ``"resonant"`` (``touching``
    lists the asymptote indices met by an endpoint; ``N`` is the band they
    bound) or ``"invalid"`` (``spans`` lists asymptotes strictly inside).
    """

    kind: str
    N: Optional[int] = None
    touching: tuple = ()
    spans: tuple = ()

    @property
    def double(self) -> bool:
        return len(self.touching) == 2

    def as_dict(self) -> dict:
        return {"kind": self.kind, "N": self.N, "touching": list(self.touching),
                "spans": list(self.spans)}


def classify_band(mu_check: float, mu_hat: float, T: float) -> BandClass:
    if not mu_check > 0:
        raise ValueError("rates must be positive")
    if mu_check > mu_hat:
        raise ValueError("need mu_check <= mu_hat")
    # bracket mu_check from below by an asymptote
    N = int(math.floor(math.sqrt(mu_check) * T / math.pi))
    while N > 0 and mu_asymptote(N, T) >= mu_check:
        N -= 1
    while mu_asymptote(N + 1, T) < mu_check:
        N += 1
    spans, touching = [], []
    j = N + 1
    while mu_asymptote(j, T) <= mu_hat:
        mu_j = mu_asymptote(j, T)
        if mu_j == mu_check or mu_j == mu_hat:
            touching.append(j)
        else:
            spans.append(j)
        j += 1
    if spans:
        return BandClass("invalid", spans=tuple(spans), touching=tuple(touching))
    if touching:
        lo = min(touching)
        band_N = lo - 1 if mu_asymptote(lo, T) == mu_hat else lo
        return BandClass("resonant", N=band_N, touching=tuple(touching))
    return BandClass("nonresonant", N=N)


@dataclass(frozen=True)
class AsymmetricBand:
    mu_check: float
    mu_hat: float
    nu_check: float
    nu_hat: float
    N: int
    T: float


@dataclass(frozen=True)
class AsymmetricClass:
    admissible: bool
    N: Optional[int] = None
    lower: float = math.nan    # 1/sqrt(mu_hat) + 1/sqrt(nu_hat)
    upper: float = math.nan    # 1/sqrt(mu_check) + 1/sqrt(nu_check)

    def as_dict(self) -> dict:
        return {"kind": "admissible" if self.admissible else "inadmissible", "N": self.N,
                "lower": self.lower, "upper": self.upper}


def classify_asymmetric(mu_check: float, mu_hat: float, nu_check: float, nu_hat: float,
                        T: float) -> AsymmetricClass:
    """Check ``T/((N+1)pi) < 1/sqrt(mu_hat)+1/sqrt(nu_hat) <= ... < T/(N pi)`` for an ``N >= 1``."""
    if min(mu_check, mu_hat, nu_check, nu_hat) <= 0:
        raise ValueError("rates must be positive")
    if mu_check > mu_hat or nu_check > nu_hat:
        raise ValueError("need mu_check <= mu_hat and nu_check <= nu_hat")
    lower = 1 / math.sqrt(mu_hat) + 1 / math.sqrt(nu_hat)
    upper = 1 / math.sqrt(mu_check) + 1 / math.sqrt(nu_check)
    guess = math.ceil(T / (math.pi * lower)) - 1
    for N in (guess - 1, guess, guess + 1):
        if N >= 1 and T / ((N + 1) * math.pi) < lower and upper < T / (N * math.pi):
            band = AsymmetricClass(True, N, lower, upper)
            return band
    return AsymmetricClass(False, None, lower, upper)


def rotation_time_bounds(mu_check: float, mu_hat: float, n: float) -> tuple:
    """Interval ``[pi/sqrt(mu_hat), pi/sqrt(mu_check) + pi/sqrt(n)]`` for one phase-plane turn."""
    if not 0 < mu_check <= mu_hat or n < 1:
        raise ValueError("need 0 < mu_check <= mu_hat and n >= 1")
    return (math.pi / math.sqrt(mu_hat), math.pi / math.sqrt(mu_check) + math.pi / math.sqrt(n))


# --------------------------------------------------------------------------
# phase-plane winding
# --------------------------------------------------------------------------

class UndefinedWinding(ValueError):
    pass


@dataclass(frozen=True)
class Rotation:
    winding: float          # clockwise turns about the origin
    crossings: np.ndarray   # times where x = 0

    @property
    def half_turns(self) -> int:
        return int(round(2 * self.winding))

    @property
    def count(self) -> float:
        return self.half_turns / 2


def _angle_path(fn, t0, t1, samples, origin_tol, max_depth=40):
    ts = list(np.linspace(t0, t1, samples + 1))
    pts = [np.asarray(fn(t), dtype=float)[:2] for t in ts]
    total = 0.0
    i = 0
    depth = {0: 0}
    while i < len(ts) - 1:
        a, b = pts[i], pts[i + 1]
        if min(np.hypot(*a), np.hypot(*b)) <= origin_tol:
            raise UndefinedWinding(f"phase path reaches the origin near t={ts[i]!r}")
        d = math.atan2(b[1], b[0]) - math.atan2(a[1], a[0])
        d = (d + math.pi) % (2 * math.pi) - math.pi
        if abs(d) > math.pi / 2 and depth.get(i, 0) < max_depth:
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            pts.insert(i + 1, np.asarray(fn(tm), dtype=float)[:2])
            lvl = depth.get(i, 0) + 1
            depth = {k if k <= i else k + 1: v for k, v in depth.items()}
            depth[i] = depth[i + 1] = lvl
            continue
        total += d
        i += 1
    xs = np.array([p[0] for p in pts])
    return total, np.asarray(ts), xs


def _crossings(ts, xs, fn):
    out = []
    for j in range(len(ts) - 1):
        if xs[j] == 0.0:
            out.append(ts[j])
        elif xs[j] * xs[j + 1] < 0:
            out.append(brentq(lambda s: float(np.asarray(fn(s))[0]), ts[j], ts[j + 1],
                              xtol=1e-13))
    return out


def rotation_number(path, t_span: Optional[tuple] = None, samples: int = 512,
                    origin_tol: float = 1e-14) -> Rotation:
    """Clockwise winding of ``(x(t), x'(t))`` around the origin.

    ``path`` is a callable returning ``(x, x')`` (extra components ignored),
    a dense arc, or a :class:`BouncingTrajectory`.  For bouncing motion a
    reflection ``(0, -c) -> (0, c)`` is counted as the clockwise half turn
    that the stiff-spring excursion would make in its place.  Contact
    intervals sit at the origin, so the winding is undefined there.
    """
    if isinstance(path, BouncingTrajectory):
        if path.contacts:
            raise UndefinedWinding("trajectory rests on the wall; phase path hits the origin")
        t0, t1 = t_span or (path.t_span[0], path.t_end)
        total, crossings = 0.0, []
        for arc in path.arcs:
            a, b = max(arc.t0, t0), min(arc.t1, t1)
            if b <= a:
                continue
            ang, ts, xs = _angle_path(arc, a, b, max(16, int(samples * (b - a) / (t1 - t0))),
                                      origin_tol)
            total += ang
            crossings.extend(_crossings(ts, xs, arc)[1:] if xs[0] == 0 else _crossings(ts, xs, arc))
        for ev in path.impacts:
            if t0 < ev.t <= t1:
                total -= math.pi
                crossings.append(ev.t)
        cr = np.unique(np.round(np.array(sorted(crossings)), 13)) if crossings else np.array([])
        return Rotation(-total / (2 * math.pi), cr)
    if t_span is None:
        t_span = (path.t0, path.t1)
    total, ts, xs = _angle_path(path, t_span[0], t_span[1], samples, origin_tol)
    return Rotation(-total / (2 * math.pi), np.array(_crossings(ts, xs, path)))


def rotation_times(path, t_span: tuple, samples: int = 4096) -> np.ndarray:
    """Durations between successive upward zero crossings of ``x``."""
    ts = np.linspace(t_span[0], t_span[1], samples + 1)
    xs = np.asarray(path(ts))[0]
    ups = []
    for j in range(samples):
        if xs[j] < 0.0 <= xs[j + 1]:
            ups.append(brentq(lambda s: float(path(s)[0]), ts[j], ts[j + 1], xtol=1e-14,
                              rtol=4 * np.finfo(float).eps))
    return np.diff(ups)


# --------------------------------------------------------------------------
# angular functional
# --------------------------------------------------------------------------

def theta_functional(L: float, x, R0: float, T: float, breakpoints: Sequence[float] = (),
                     t0: float = 0.0) -> float:
    """``int_0^T L / (R0 + x(t))**2 dt`` by adaptive Gauss-Kronrod quadrature."""
    if isinstance(x, BouncingTrajectory):
        breakpoints = list(breakpoints) + x.breakpoints
        traj = x

        def x(t):
            return traj.state(t)[0]
    grid = np.linspace(t0, t0 + T, 513)
    xs = np.array([float(x(t)) for t in grid])
    if np.any(xs <= -R0):
        raise ValueError("radial profile reaches -R0: the angular integrand is singular")
    if L == 0:
        return 0.0
    pts = sorted(p for p in set(breakpoints) if t0 < p < t0 + T)
    val, _ = integrate.quad(lambda t: 1.0 / (R0 + float(x(t))) ** 2, t0, t0 + T,
                            points=pts or None, epsabs=0.0, epsrel=1e-12, limit=400)
    return L * val


def theta_envelope(L: float, x_min: float, x_max: float, R0: float, T: float) -> tuple:
    """Monotonicity bounds ``(T L/(R0+x_max)**2, T L/(R0+x_min)**2)``."""
    return T * L / (R0 + x_max) ** 2, T * L / (R0 + x_min) ** 2


# --------------------------------------------------------------------------
# arch functions and Landesman-Lazer integrals
# --------------------------------------------------------------------------

def psi(j: int, T: float, t):
    """``sin(sqrt(mu_j) s)`` with ``s = t mod T/j``: a train of ``j`` arches per period."""
    if j < 1:
        raise ValueError("psi_j needs j >= 1")
    w = T / j
    s = np.mod(t, w)
    return np.sin(math.sqrt(mu_asymptote(j, T)) * s)


def psi_tilde(j: int, T: float, t):
    """One arch of ``psi_j`` on ``[0, T/j]`` and zero for the rest of the period."""
    if j < 1:
        raise ValueError("psi_tilde_j needs j >= 1")
    s = np.mod(t, T)
    return np.where(s <= T / j, np.sin(math.sqrt(mu_asymptote(j, T)) * s), 0.0)


def _kinks(j, T, tau):
    w = T / j
    first = (-tau) % w
    return [first + m * w for m in range(j + 1) if 0 < first + m * w < T]


def weighted_integral(h: Callable, j: int, T: float, tau: float, weight: str = "psi") -> float:
    """``int_0^T h(t) psi_j(t + tau) dt`` with arch boundaries as breakpoints."""
    fn = psi if weight == "psi" else psi_tilde
    pts = _kinks(j, T, tau)
    if weight != "psi":
        pts = sorted(set(pts + [((T / j) - tau) % T]))
    val, _ = integrate.quad(lambda t: float(h(t)) * float(fn(j, T, t + tau)), 0.0, T,
                            points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def _abs_weighted(h, j, T, tau):
    pts = _kinks(j, T, tau)
    val, _ = integrate.quad(lambda t: abs(float(h(t))) * float(psi(j, T, t + tau)), 0.0, T,
                            points=pts or None, epsabs=1e-13, epsrel=1e-10, limit=400)
    return val


@dataclass
class LLProblem:
    """Data for the Landesman-Lazer sign conditions.

    ``h_plus`` is the limsup residual of ``f(t, x+R0) - mu_{N+1} x`` and
    ``h_minus`` the liminf residual of ``f(t, x+R0) - mu_N x``, both as
    functions of ``t``.  In ``"numeric-estimate"`` mode they are estimated
    from ``problem`` on a ladder of large radii instead (a heuristic).
    """

    band: ResonanceBand
    eta_hat: float = 0.0
    h_plus: Optional[Callable] = None
    h_minus: Optional[Callable] = None
    mode: str = "user-supplied"
    problem: Optional[CentralForceProblem] = None
    eps_floor: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("user-supplied", "numeric-estimate"):
            raise ValueError(f"unknown LL mode {self.mode!r}")


@dataclass
class LLReport:
    condition: str
    tau_grid_size: int
    min_margin: float
    worst_tau: float
    verdict: str                 # "satisfied" | "violated" | "inconclusive"
    heuristic: bool = False
    note: str = ""
    values: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.verdict == "satisfied"

    def as_dict(self) -> dict:
        d = {"schema": SCHEMA, "condition": self.condition, "tau_grid_size": self.tau_grid_size,
             "min_margin": self.min_margin, "worst_tau": self.worst_tau, "verdict": self.verdict}
        if self.heuristic:
            d["heuristic"] = True
        if self.note:
            d["note"] = self.note
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


RAY_RADII = (1e2, 1e3, 1e4)


def estimate_residual(problem: CentralForceProblem, mu: float, t_grid: int = 256,
                      radii: Sequence[float] = RAY_RADII, tol: float = 1e-6):
    """Residual ``f(t, x+R0) - mu x`` at growing ``x``; ``None`` if it does not settle."""
    ts = np.linspace(0.0, problem.T, t_grid, endpoint=False)
    rows = []
    for a in radii:
        x = a * problem.R0
        rows.append(np.array([float(problem.f(t, x + problem.R0)) - mu * x for t in ts]))
    last, prev = rows[-1], rows[-2]
    if np.max(np.abs(last - prev)) > tol * (1.0 + np.max(np.abs(last))):
        return None
    x_far = radii[-1] * problem.R0

    def h(t):
        return float(problem.f(t, x_far + problem.R0)) - mu * x_far
    return h


def _sign_check(name, h, j, T, tau_grid, want, heuristic=False):
    taus = np.linspace(0.0, T, tau_grid, endpoint=False) if np.ndim(tau_grid) == 0 \
        else np.asarray(tau_grid, dtype=float)
    vals = np.array([weighted_integral(h, j, T, tau) for tau in taus])
    scale = max(_abs_weighted(h, j, T, tau) for tau in taus[:: max(1, len(taus) // 16)])
    tol = SIGN_MARGIN * scale
    signed = want * vals              # positive where the condition holds
    k = int(np.argmin(signed))
    worst = float(signed[k])
    if abs(worst) <= tol:
        verdict = "inconclusive"
    elif worst < 0:
        verdict = "violated"
    else:
        verdict = "satisfied"
    return LLReport(name, len(taus), worst, float(taus[k]), verdict, heuristic=heuristic,
                    values=vals)


def _residuals(p: LLProblem):
    if p.mode == "user-supplied":
        if p.h_plus is None or p.h_minus is None:
            raise ValueError("user-supplied mode needs both h_plus and h_minus")
        return p.h_plus, p.h_minus, False
    if p.problem is None:
        raise ValueError("numeric-estimate mode needs the problem")
    hp = estimate_residual(p.problem, p.band.mu_hi)
    hm = estimate_residual(p.problem, p.band.mu_lo)
    return hp, hm, True


def ll_check(p: LLProblem, tau_grid=512) -> dict:
    """Both double-resonance sign conditions on a ``tau`` grid over ``[0, T]``.

    Returns ``{"LLcond": report, "LLcond2": report}``: the upper condition
    needs ``int h_plus psi_{N+1}(t+tau) < 0`` and the lower one
    ``int h_minus psi_N(t+tau) > 0`` for every grid ``tau``.  Values within
    ``1e-8`` of the integral scale are ``"inconclusive"``.
    """
    N, T = p.band.N, p.band.T
    if N < 1:
        raise ValueError("the double condition needs N >= 1; use ll_check_n0 for N = 0")
    hp, hm, heur = _residuals(p)
    out = {}
    for name, h, j, want in (("LLcond", hp, N + 1, -1.0), ("LLcond2", hm, N, 1.0)):
        if h is None:
            n_tau = tau_grid if np.ndim(tau_grid) == 0 else len(tau_grid)
            out[name] = LLReport(name, n_tau, math.nan, math.nan, "inconclusive", heuristic=True,
                                 note="residual ladder did not converge")
        else:
            out[name] = _sign_check(name, h, j, T, tau_grid, want, heuristic=heur)
    return out


def growth_floor(problem: CentralForceProblem, t_grid: int = 64,
                 radii: Sequence[float] = RAY_RADII) -> float:
    """Smallest sampled ``f(t, x)/x`` on the rays ``x = a R0``; a proxy for the liminf."""
    ts = np.linspace(0.0, problem.T, t_grid, endpoint=False)
    x = radii[-1] * problem.R0
    return float(min(float(problem.f(t, x)) / x for t in ts))


def ll_check_n0(p: LLProblem, eps_floor: Optional[float] = None, tau_grid=512) -> LLReport:
    """One-sided condition for ``N = 0``: ``int h_minus psi_1(t+tau) > 0`` plus a growth floor."""
    eps_floor = p.eps_floor if eps_floor is None else eps_floor
    if eps_floor is None or not eps_floor > 0:
        raise ValueError("the N = 0 condition needs a positive growth floor eps")
    T = p.band.T
    if p.mode == "user-supplied":
        if p.h_minus is None:
            raise ValueError("user-supplied mode needs h_minus")
        h, heur = p.h_minus, False
    else:
        if p.problem is None:
            raise ValueError("numeric-estimate mode needs the problem")
        h, heur = estimate_residual(p.problem, mu_asymptote(1, T)), True
    if h is None:
        n_tau = tau_grid if np.ndim(tau_grid) == 0 else len(tau_grid)
        return LLReport("LLcond2N0", n_tau, math.nan, math.nan, "inconclusive", heuristic=True,
                        note="residual ladder did not converge")
    rep = _sign_check("LLcond2N0", h, 1, T, tau_grid, 1.0, heuristic=heur)
    if p.problem is not None:
        floor = growth_floor(p.problem)
        if floor < eps_floor:
            rep.verdict = "violated"
            rep.note = f"growth floor {floor:.6g} is below eps={eps_floor:g}"
        else:
            rep.note = f"growth floor {floor:.6g} >= eps={eps_floor:g}"
    return rep


# --------------------------------------------------------------------------
# phase regions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseRegion:
    """``kind`` in ``pi_minus``, ``pi_plus``, ``ball`` (radius ``s``),
    ``ellipse`` (interior of ``y^2 + n x^2 - 2 delta x = c^2``) or ``xi``
    (ellipse part on ``x <= 0`` joined to the ball ``B_c`` on ``x >= 0``)."""

    kind: str
    s: Optional[float] = None
    n: Optional[float] = None
    delta: Optional[float] = None
    c: Optional[float] = None


def region_membership(region: PhaseRegion, point) -> bool:
    x, y = float(point[0]), float(point[1])
    k = region.kind
    if k == "pi_minus":
        return x <= 0
    if k == "pi_plus":
        return x >= 0
    if k == "ball":
        return x * x + y * y < region.s ** 2
    if k == "ellipse":
        return y * y + region.n * x * x - 2 * region.delta * x < region.c ** 2
    if k == "xi":
        ell = PhaseRegion("ellipse", n=region.n, delta=region.delta, c=region.c)
        ball = PhaseRegion("ball", s=region.c)
        return (x <= 0 and region_membership(ell, point)) or \
            (x >= 0 and region_membership(ball, point))
    raise ValueError(f"unknown region kind {k!r}")


# --------------------------------------------------------------------------
# bouncing-solution validator
# --------------------------------------------------------------------------

@dataclass
class CaseCheck:
    value: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        value = self.value if math.isfinite(self.value) else None
        return {"value": value, "passed": self.passed, "detail": self.detail}


@dataclass
class ValidationReport:
    ode: CaseCheck
    reflection: CaseCheck
    isolation: CaseCheck
    contact: CaseCheck

    @property
    def passed(self) -> bool:
        return all(c.passed for c in (self.ode, self.reflection, self.isolation, self.contact))

    def as_dict(self) -> dict:
        return {"schema": SCHEMA, "passed": self.passed,
                "i_ode_residual": self.ode.as_dict(),
                "ii_reflection": self.reflection.as_dict(),
                "iii_isolation": self.isolation.as_dict(),
                "iv_contact": self.contact.as_dict()}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


@dataclass(frozen=True)
class ValidationTolerances:
    ode: float = 1e-7          # relative ODE residual on arcs
    reflection: float = 1e-12  # |v+ + v-| / max(1, |v-|)
    wall: float = 1e-9         # allowed penetration of r below 0
    contact: float = 1e-9      # allowed negativity of g(t, 0) on contacts
    samples: int = 64


DEFECT_RTOL = 1e-12


def _check_points(arc, n):
    samples = getattr(arc, "samples", None)
    if samples is None:
        return np.linspace(arc.t0, arc.t1, n + 1)
    if len(samples) > n + 1:
        idx = np.unique(np.linspace(0, len(samples) - 1, n + 1).round().astype(int))
        samples = samples[idx]
    return np.asarray(samples, dtype=float)


def _arc_defect(arc, field, ts) -> float:
    """Largest relative mismatch between the arc and fresh solves started on it."""
    def rhs(t, y):
        return [y[1], -float(field(t, y[0]))]

    st = arc(ts)
    worst = 0.0
    for i in range(len(ts) - 1):
        if ts[i + 1] <= ts[i]:
            continue
        sol = integrate.solve_ivp(rhs, (ts[i], ts[i + 1]), st[:2, i], method="DOP853",
                                  rtol=DEFECT_RTOL, atol=DEFECT_RTOL * 1e-2)
        end = sol.y[:, -1]
        scale = 1.0 + np.abs(st[:2, i + 1])
        worst = max(worst, float(np.max(np.abs(end - st[:2, i + 1]) / scale)))
    return worst


def validate_bouncing(traj: BouncingTrajectory, field, tol=None) -> ValidationReport:
    """Check the four defining properties of a bouncing solution.

    i.   on each arc ``x'' + g(t, x) = 0`` and ``x >= 0``; the residual is
         the relative defect after re-integrating between check points
         (sample times for imported arcs), so any source can be judged;
    ii.  at every bounce the outgoing speed is minus the incoming one;
    iii. zeros with nonzero velocity are isolated;
    iv.  on contact intervals ``g(t, 0) >= 0``.
    """
    if tol is None:
        tol = ValidationTolerances()
    elif isinstance(tol, (int, float)):
        tol = ValidationTolerances(ode=float(tol), reflection=float(tol), wall=float(tol),
                                   contact=float(tol))

    worst_ode, worst_wall = 0.0, 0.0
    for arc in traj.arcs:
        if arc.t1 <= arc.t0:
            continue
        ts = _check_points(arc, tol.samples)
        worst_ode = max(worst_ode, _arc_defect(arc, field, ts))
        worst_wall = max(worst_wall, float(-np.min(arc(ts)[0])))
    ode = CaseCheck(worst_ode, worst_ode <= tol.ode and worst_wall <= tol.wall,
                    f"max relative residual {worst_ode:.3e}; deepest penetration {worst_wall:.3e}")

    arcs = sorted(traj.arcs, key=lambda a: a.t0)
    worst_ref, bad = 0.0, []
    for ev in traj.impacts:
        near = 1e-9 * max(1, abs(ev.t))
        before = sorted((a for a in arcs if a.t0 < ev.t and abs(a.t1 - ev.t) <= near),
                        key=lambda a: abs(a.t1 - ev.t))
        after = sorted((a for a in arcs if a.t1 > ev.t and abs(a.t0 - ev.t) <= near),
                       key=lambda a: abs(a.t0 - ev.t))
        v_in = float(before[0].end_state[1]) if before else ev.speed_in
        v_out = float(after[0].start_state[1]) if after else ev.speed_out
        if before and after:
            err = abs(v_out + v_in) / max(1.0, abs(v_in))
        else:
            err = abs(ev.speed_out + ev.speed_in) / max(1.0, abs(ev.speed_in))
        if v_in >= 0:
            bad.append(ev.t)
        worst_ref = max(worst_ref, err)
    reflection = CaseCheck(worst_ref, worst_ref <= tol.reflection and not bad,
                           f"{len(traj.impacts)} bounces" + (f"; non-incoming at {bad}" if bad else ""))

    zeros = sorted([e.t for e in traj.impacts] + [c.t0 for c in traj.contacts] +
                   [c.t1 for c in traj.contacts])
    radius = math.inf
    for i, ev in enumerate(traj.impacts):
        others = [z for z in zeros if z != ev.t]
        if others:
            radius = min(radius, min(abs(z - ev.t) for z in others))
    min_r_interior = math.inf
    for arc in traj.arcs:
        if arc.t1 - arc.t0 > 0:
            ts = np.linspace(arc.t0, arc.t1, tol.samples + 2)[1:-1]
            min_r_interior = min(min_r_interior, float(np.min(arc(ts)[0])))
    iso_ok = (not traj.impacts) or (radius > 0 and min_r_interior > -tol.wall)
    isolation = CaseCheck(radius, iso_ok,
                          f"smallest gap between a bounce and another wall contact: {radius:.3e}")

    min_g = math.inf
    for c in traj.contacts:
        ts = np.linspace(c.t0, c.t1, max(tol.samples, 2))
        min_g = min(min_g, float(np.min(np.asarray(field(ts, np.zeros_like(ts)), dtype=float))))
    contact = CaseCheck(min_g, (not traj.contacts) or min_g >= -tol.contact,
                        f"{len(traj.contacts)} contact intervals")
    return ValidationReport(ode, reflection, isolation, contact)
