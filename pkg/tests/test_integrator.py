from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from orbit_bounce.integrator import (ContactHandoff, ImpactNotFound, IntegrationError,
                                     IntegratorOptions, contact_advance, integrate_bouncing,
                                     integrate_smooth, locate_impact, reflect)
from orbit_bounce.model import PhaseState, PolarState, RadialField, problem_from_force

from conftest import constant_field


def sine_field(t, x):
    return x


# ---------------------------------------------------------------- smooth arcs

def test_smooth_sine_quarter_period():
    arc = integrate_smooth(sine_field, (0.0, 1.0), 0.0, math.pi / 2)
    x, v, _ = arc(math.pi / 2)
    assert abs(x - 1.0) <= 1e-9 and abs(v) <= 1e-9


def test_smooth_free_motion():
    arc = integrate_smooth(constant_field(0.0), (1.0, 2.0), 0.0, 3.0)
    assert arc(3.0)[0] == pytest.approx(7.0, abs=1e-9)


def test_smooth_first_integral_of_linear_spring():
    # x'' + 4x - 1 = 0 keeps y^2 + 4x^2 - 2 * (1/2) * 2x ... i.e. y^2 + n x^2 - 2 delta x
    n, delta = 4.0, 0.5
    arc = integrate_smooth(lambda t, x: n * x - 2 * delta, (0.0, -1.0), 0.0, 5.0)
    ts = np.linspace(0, 5, 200)
    x, y, _ = arc(ts)
    e = y ** 2 + n * x ** 2 - 4 * delta * x
    assert np.max(np.abs(e - e[0])) <= 1e-9


def test_smooth_rejects_empty_interval():
    with pytest.raises(ValueError):
        integrate_smooth(sine_field, (0.0, 1.0), 1.0, 1.0)


def test_step_underflow_reports_last_time():
    # x'' = x**3 from (1, 1) blows up in finite time
    with pytest.raises(IntegrationError) as info:
        integrate_smooth(lambda t, x: -x ** 3, (1.0, 1.0), 0.0, 10.0)
    assert 0.0 < info.value.last_t < 10.0


def test_stop_on_crossing():
    arc = integrate_smooth(sine_field, (1.0, 0.0), 0.0, 10.0, stop_on_crossing=-1)
    assert arc.event_time == pytest.approx(math.pi / 2, abs=1e-10)


# ---------------------------------------------------------------- localisation

def test_locate_impact_examples():
    assert locate_impact(lambda t: 1 - t, 0.0, 2.0) == pytest.approx(1.0, abs=1e-12)
    assert locate_impact(math.sin, 3.0, 4.0) == pytest.approx(math.pi, abs=1e-12)


def test_locate_impact_grazing_never_crashes():
    for eps in (1e-18, 0.0, -1e-18):
        try:
            t = locate_impact(lambda s, e=eps: (s - 1) ** 2 - e, 0.0, 2.0)
        except ImpactNotFound:
            continue
        assert abs(t - 1.0) < 1e-6


def test_locate_impact_missing():
    with pytest.raises(ImpactNotFound):
        locate_impact(lambda t: 1 + t * t, -1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(root=st.floats(0.01, 0.99), slope=st.floats(0.1, 10))
def test_locate_impact_linear_property(root, slope):
    t = locate_impact(lambda s: slope * (root - s), 0.0, 1.0)
    assert abs(t - root) <= 1e-11


# ---------------------------------------------------------------- reflection

def test_reflect_examples():
    assert reflect(PhaseState(0.0, -3.0)) == PhaseState(0.0, 3.0)
    with pytest.raises(ContactHandoff):
        reflect(PhaseState(0.0, -1e-9))
    out = reflect(PolarState(2.0, -2.0, 1.3, 5.0), R0=2.0)
    assert out == PolarState(2.0, 2.0, 1.3, 5.0)


def test_reflect_preconditions():
    with pytest.raises(ValueError):
        reflect(PhaseState(0.0, 1.0))
    with pytest.raises(ValueError):
        reflect(PhaseState(0.5, -1.0))


@settings(max_examples=60, deadline=None)
@given(v=st.floats(1e-6, 1e6))
def test_reflect_is_exact_negation(v):
    assert reflect(PhaseState(0.0, -v)).v == v


# ---------------------------------------------------------------- contact mode

def test_contact_advance_examples():
    t_rel, iv = contact_advance(lambda t, r: math.cos(t), 0.0, 10.0)
    assert t_rel == pytest.approx(math.pi / 2, abs=1e-10)
    assert iv == (0.0, t_rel)
    assert contact_advance(constant_field(1.0), 0.0, 5.0)[0] == 5.0
    with pytest.raises(ValueError):
        contact_advance(constant_field(-1.0), 0.0, 5.0)


def test_contact_interval_when_pinned():
    tr = integrate_bouncing(lambda t, r: 0.5 + 0.1 * math.sin(t) + 0 * r, (0.0, 0.0), (0.0, 4.0))
    assert len(tr.contacts) == 1 and not tr.impacts
    c = tr.contacts[0]
    assert (c.t0, c.t1) == (0.0, 4.0)
    assert np.all(tr.uniform(50)[1][0] == 0.0)


def test_release_from_wall():
    # g(t, 0) = cos t: pinned until pi/2, then pulled away
    tr = integrate_bouncing(lambda t, r: math.cos(t) + 0 * r, (0.0, 0.0), (0.0, 2.0))
    assert tr.contacts[0].t1 == pytest.approx(math.pi / 2, abs=1e-10)
    assert tr.state(2.0)[0] > 0


# ---------------------------------------------------------------- bouncing motion

def test_abs_sine_oracle():
    tr = integrate_bouncing(sine_field, (0.0, 1.0), (0.0, 3 * math.pi))
    np.testing.assert_allclose(tr.impact_times, [math.pi, 2 * math.pi, 3 * math.pi], atol=1e-8)
    ts = np.linspace(0, 3 * math.pi, 2001)
    r = tr.uniform(2001)[1][0]
    assert np.max(np.abs(r - np.abs(np.sin(ts)))) <= 1e-8


def test_free_fall_quadratic_oracle():
    # x'' = 1 from (1, -2): x = 1 - 2t + t^2/2 hits 0 at t = 2 - sqrt(2)
    tr = integrate_bouncing(constant_field(-1.0), (1.0, -2.0), (0.0, 10.0))
    assert len(tr.impacts) == 1
    ev = tr.impacts[0]
    assert ev.t == pytest.approx(2 - math.sqrt(2), abs=1e-10)
    assert ev.speed_in == pytest.approx(-math.sqrt(2), abs=1e-9)
    assert tr.state(10.0)[0] > 0


def test_free_fall_that_turns_before_the_wall():
    # from (1, -1) the parabola 1 - t + t^2/2 has no real root
    tr = integrate_bouncing(constant_field(-1.0), (1.0, -1.0), (0.0, 10.0))
    assert not tr.impacts


def test_start_state_preconditions():
    with pytest.raises(ValueError):
        integrate_bouncing(sine_field, (-0.1, 1.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        integrate_bouncing(sine_field, (0.0, -1.0), (0.0, 1.0))


def test_empty_span():
    tr = integrate_bouncing(sine_field, (0.0, 1.0), (1.0, 1.0))
    assert not tr.arcs and not tr.impacts and not tr.contacts


def test_event_budget_returns_partial():
    tr = integrate_bouncing(sine_field, (0.0, 1.0), (0.0, 100.0), IntegratorOptions(max_events=3))
    assert tr.status == "event_budget"
    assert tr.diagnostics and "budget" in tr.diagnostics[0]
    assert tr.t_end < 100.0


def test_zeno_cascade_enters_contact():
    # hops of duration 2 v / g = 1e-5 pinned by g = 1: fifty of them fit in the
    # Zeno window 1e3 * impact_tol, so the guard switches to contact mode
    opts = IntegratorOptions(impact_tol=1e-6)
    tr = integrate_bouncing(constant_field(1.0), (0.0, 5e-6), (0.0, 1.0), opts)
    assert len(tr.impacts) == opts.zeno_count
    assert len(tr.contacts) == 1 and tr.contacts[0].t1 == 1.0
    assert any("Zeno" in d for d in tr.diagnostics)


def test_hop_shorter_than_time_tolerance():
    opts = IntegratorOptions(zeno_count=5, impact_tol=1e-6)
    tr = integrate_bouncing(constant_field(1e9), (0.0, 1e-3), (0.0, 1.0), opts)
    assert tr.contacts and tr.contacts[-1].t1 == 1.0


def test_determinism(catalog):
    g = RadialField(catalog, 0.4)
    a = integrate_bouncing(g, (0.2, -0.3), (0.0, 3.0))
    b = integrate_bouncing(g, (0.2, -0.3), (0.0, 3.0))
    assert [e.t for e in a.impacts] == [e.t for e in b.impacts]
    np.testing.assert_array_equal(a.uniform(300)[1], b.uniform(300)[1])


# ---------------------------------------------------------------- invariants

FIELDS = [(0.0, 1.0), (0.4, -0.3), (1.5, 0.0), (0.05, 2.0), (3.0, 0.0), (0.0, 5.0)]


@pytest.mark.parametrize("L", [0.8, 3.0])
@pytest.mark.parametrize("r0,v0", FIELDS)
def test_trajectory_invariants(catalog, r0, v0, L):
    from scipy.integrate import quad
    opts = IntegratorOptions()
    g = RadialField(catalog, L)
    tr = integrate_bouncing(g, (r0, v0), (0.0, 4 * math.pi), opts)
    for ev in tr.impacts:
        assert ev.speed_out == -ev.speed_in
    assert np.all(np.diff(tr.impact_times) > 0)
    for arc in tr.arcs:
        ts = np.linspace(arc.t0, arc.t1, 400)[1:-1]
        st = arc(ts)
        d = arc.derivative(ts)
        gv = g(ts, st[0])
        assert np.max(np.abs(d[1] + gv) / (1 + np.abs(gv))) <= 1e3 * opts.rel_tol
        assert np.all(st[0] > 0)
        # angular momentum: exact relation at the step nodes, where the
        # interpolant derivative is the right-hand side ...
        nodes = arc.nodes[(arc.nodes >= arc.t0) & (arc.nodes <= arc.t1)]
        sn, dn = arc(nodes), arc.derivative(nodes)
        assert np.max(np.abs((sn[0] + 1.0) ** 2 * dn[2] - L)) <= 10 * opts.rel_tol * L
        # ... and between nodes theta is the quadrature of L / rho^2
        th0 = arc(arc.t0)[2]
        for t in ts[::60]:
            ref = quad(lambda s: L / (1.0 + arc(s)[0]) ** 2, arc.t0, t, epsabs=0,
                       epsrel=1e-13, limit=200)[0]
            assert abs(arc(t)[2] - th0 - ref) <= 10 * opts.rel_tol * (th0 + ref)
    # adjacent arcs share impact times and reflected velocities
    arcs = sorted(tr.arcs, key=lambda a: a.t0)
    for a, b in zip(arcs, arcs[1:]):
        assert a.t1 == b.t0
        va, vb = a.end_state[1], b.start_state[1]
        assert vb == -va


def test_rk45_stepper_matches_default(catalog):
    g = RadialField(catalog, 0.8)
    a = integrate_bouncing(g, (0.4, -0.3), (0.0, 2 * math.pi))
    b = integrate_bouncing(g, (0.4, -0.3), (0.0, 2 * math.pi), IntegratorOptions(method="RK45"))
    np.testing.assert_allclose(a.impact_times, b.impact_times, atol=1e-9)
    assert np.max(np.abs(a.uniform(500)[1] - b.uniform(500)[1])) <= 1e-8
    with pytest.raises(ValueError):
        IntegratorOptions(method="Euler")


def test_oscillator_through_radial_field(oscillator):
    g = RadialField(oscillator, 0.0)
    tr = integrate_bouncing(g, (0.0, 1.0), (0.0, 10 * math.pi))
    assert len(tr.impacts) == 10


def test_matches_independent_solver_between_impacts(catalog):
    g = RadialField(catalog, 0.3)
    tr = integrate_bouncing(g, (0.5, 0.0), (0.0, 0.9))
    assert not tr.impacts
    ref = solve_ivp(lambda t, y: [y[1], -g(t, y[0])], (0, 0.9), [0.5, 0.0], method="DOP853",
                    rtol=1e-12, atol=1e-14)
    assert abs(tr.state(0.9)[0] - ref.y[0, -1]) <= 1e-8
