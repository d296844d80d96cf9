from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import bisect

from orbit_bounce.integrator import integrate_smooth
from orbit_bounce.model import RadialField
from orbit_bounce.penalty import (PenaltyField, PenaltyParams, ResonantPenaltyParams,
                                  convergence_ladder, ellipse_energy, kappa_for, make_penalty,
                                  make_resonant_penalty, negative_transit_time,
                                  penetration_depth_bound)


# ---------------------------------------------------------------- parameters

@pytest.mark.parametrize("n, delta", [(0.5, 1e-3), (100, 0.0), (100, -1.0)])
def test_params_reject_bad_values(n, delta):
    with pytest.raises(ValueError):
        PenaltyParams(n, delta)


# ---------------------------------------------------------------- g_n branches

def test_branch_values(catalog):
    g = RadialField(catalog, 0.7)
    p = PenaltyParams(100, 0.01)
    gn = make_penalty(g, p)
    assert gn(0.3, -1.0) == pytest.approx(-100.01, abs=1e-12)
    assert gn(0.3, 0.0) == -0.01
    assert gn(0.3, 1 / 100) == pytest.approx(g(0.3, 1 / 100), rel=1e-14)
    for x in (0.02, 0.5, 3.0):
        assert gn(0.3, x) == g(0.3, x)


@settings(max_examples=60, deadline=None)
@given(n=st.floats(1, 1e6), delta=st.floats(1e-6, 1.0), t=st.floats(0, 10),
       L=st.floats(0, 3))
def test_branch_continuity(catalog, n, delta, t, L):
    g = RadialField(catalog, L)
    gn = PenaltyField(g, n, delta)
    # middle branch evaluated at the breakpoints
    mid_at_edge = n * (1 / n) * (g(t, 1 / n) + delta) - delta
    assert mid_at_edge == pytest.approx(gn(t, 1 / n), rel=1e-12, abs=1e-12)
    assert n * 0.0 * (g(t, 0.0) + delta) - delta == gn(t, 0.0)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-50, 0), t1=st.floats(0, 20), t2=st.floats(0, 20))
def test_time_independent_inside_wall(catalog, x, t1, t2):
    gn = PenaltyField(RadialField(catalog, 0.4), 1000, 1e-3)
    assert gn(t1, x) == gn(t2, x)


def test_vectorised_call_matches_scalar(catalog):
    gn = PenaltyField(RadialField(catalog, 0.4), 50, 0.1)
    xs = np.array([-1.0, 0.0, 0.005, 0.01, 0.5])
    ts = np.linspace(0, 1, 5)
    assert np.array_equal(gn(ts, xs), [gn(t, x) for t, x in zip(ts, xs)])


def test_angular_data_forwarded(catalog):
    gn = PenaltyField(RadialField(catalog, 0.4), 50, 0.1)
    assert (gn.L, gn.R0, gn.T) == (0.4, catalog.R0, catalog.T)


# ---------------------------------------------------------------- kappa

def _kappa_by_bisection(n, lo, hi):
    target = 0.5 * (lo + hi)
    return bisect(lambda k: n * (math.sqrt(k) - 1) ** 2 / k - target, 1.0 + 1e-15, 1e12,
                  xtol=1e-15, rtol=1e-15, maxiter=500)


@pytest.mark.parametrize("n", [10, 100, 1e3, 1e4, 1e5, 1e6])
def test_kappa_matches_bisection(n):
    k = kappa_for(n, 1.0, 4.0)
    assert k == pytest.approx(_kappa_by_bisection(n, 1.0, 4.0), rel=1e-10)
    assert 1.0 < n * (math.sqrt(k) - 1) ** 2 / k < 4.0


def test_kappa_example_value():
    k = kappa_for(10_000, 1.0, 4.0)
    assert k == pytest.approx(1.0324, abs=5e-5)
    assert (math.sqrt(k) - 1) ** 2 == pytest.approx(0.00025 * k, rel=1e-12)


def test_kappa_decreases_to_one():
    ks = [kappa_for(n, 1.0, 4.0) for n in (1e3, 1e4, 1e5, 1e6)]
    assert all(a > b > 1.0 for a, b in zip(ks, ks[1:]))


def test_kappa_needs_large_enough_n():
    with pytest.raises(ValueError, match="n >= 3"):
        kappa_for(1, 1.0, 4.0)
    # the supremum over kappa of n (sqrt(k)-1)^2/k is n itself
    ks = np.logspace(0.001, 12, 2000)
    assert np.max((np.sqrt(ks) - 1) ** 2 / ks) < 1.0


def test_resonant_params_validate_band():
    p = ResonantPenaltyParams.for_band(1e4, (1.0, 4.0))
    assert p.kappa == kappa_for(1e4, 1.0, 4.0)
    with pytest.raises(ValueError):
        ResonantPenaltyParams(PenaltyParams(1e4), 1.5, (1.0, 4.0))
    with pytest.raises(ValueError):
        ResonantPenaltyParams(PenaltyParams(1e4), 1.0, (1.0, 4.0))


def test_resonant_field_scales_force(catalog):
    lin = catalog.with_force(lambda t, rho: 2.0 * (rho - catalog.R0))
    p = ResonantPenaltyParams.for_band(1e4, (1.0, 4.0))
    fld = make_resonant_penalty(lin, 0.0, p)
    for x in (0.01, 0.3, 2.0):
        assert fld(0.2, x) == pytest.approx(p.kappa * 2.0 * x, rel=1e-14)


def test_resonant_field_reduces_without_scaling(catalog):
    base = PenaltyParams(1e4, 1e-3)
    plain = make_penalty(RadialField(catalog, 0.5), base)
    # bypass the kappa > 1 invariant to check the formula reduction
    res = PenaltyField(RadialField(catalog, 0.5, force_scale=1.0), base.n, base.delta)
    for x in (-0.5, 0.0, 5e-5, 0.2, 1.0):
        assert res(0.7, x) == plain(0.7, x)


def test_resonant_growth_bound(catalog):
    # f = 2.5(rho-1) + 0.1 sin 2t grows like 2.5 < mu_2 = 4; eta_hat = 0.1 covers the forcing
    p = ResonantPenaltyParams.for_band(1e4, (1.0, 4.0))
    fld = make_resonant_penalty(catalog, 0.0, p)
    for t in np.linspace(0, catalog.T, 7):
        for x in np.linspace(1e-3, 20, 40):
            assert fld(t, x) <= p.kappa * 4.0 * x + 0.1 + 1e-12


# ---------------------------------------------------------------- the ellipse

def _excursion(n, delta, c):
    def fld(t, x):
        return n * x - delta
    span = 4 * math.pi / math.sqrt(n)
    return integrate_smooth(fld, (0.0, -c), 0.0, span, stop_on_crossing=+1)


def test_transit_time_example():
    expect = 0.5 * (math.pi - 2 * math.asin(1 / math.sqrt(5)))
    assert negative_transit_time(PenaltyParams(4, 1.0), 1.0) == pytest.approx(expect, rel=1e-14)
    assert expect == pytest.approx(1.10715, abs=1e-5)
    arc = _excursion(4, 1.0, 1.0)
    assert arc.event_time == pytest.approx(expect, rel=1e-8)


def test_transit_time_small_delta():
    assert negative_transit_time(PenaltyParams(100, 1e-12), 1.0) == pytest.approx(
        math.pi / 10, abs=1e-6)


def test_transit_time_decreases_with_n():
    vals = [negative_transit_time(PenaltyParams(n, 0.1), 1.0) for n in (10, 100, 1000)]
    assert vals[0] > vals[1] > vals[2]


@settings(max_examples=80, deadline=None)
@given(n=st.floats(1, 1e8), delta=st.floats(1e-9, 10), c=st.floats(1e-3, 100))
def test_transit_time_below_half_period(n, delta, c):
    p = PenaltyParams(n, delta)
    assert negative_transit_time(p, c) < math.pi / math.sqrt(n)
    assert penetration_depth_bound(p, c) > -c / math.sqrt(n)


def test_penetration_examples():
    assert penetration_depth_bound(PenaltyParams(4, 1.0), 1.0) == pytest.approx(
        (1 - math.sqrt(5)) / 4, rel=1e-14)
    assert penetration_depth_bound(PenaltyParams(100, 1e-15), 1.0) == pytest.approx(-0.1, rel=1e-9)
    arc = _excursion(4, 1.0, 1.0)
    ts = np.linspace(0, arc.event_time, 4001)
    xs = arc(ts)[0]
    assert xs.min() == pytest.approx(-0.309017, abs=1e-6)


@pytest.mark.parametrize("c", [0.0, -1.0])
def test_ellipse_helpers_need_positive_speed(c):
    with pytest.raises(ValueError):
        negative_transit_time(PenaltyParams(4), c)
    with pytest.raises(ValueError):
        penetration_depth_bound(PenaltyParams(4), c)


@pytest.mark.parametrize("n, delta, c", [(4, 1.0, 1.0), (100, 1e-3, 2.0), (1e4, 0.1, 0.5)])
def test_excursion_conserves_ellipse(n, delta, c):
    p = PenaltyParams(n, delta)
    arc = _excursion(n, delta, c)
    ts = np.linspace(0, arc.event_time, 500)
    x, y, _ = arc(ts)
    e = ellipse_energy(p, x, y)
    assert np.max(np.abs(e - c * c)) <= 1e-9 * c * c


# ---------------------------------------------------------------- ladder

def test_ladder_impact_oscillator_arcs(oscillator):
    """Penalty flows from (0, 1) approach the |sin t| bouncing motion as n grows."""
    ts = np.linspace(0, 3 * math.pi, 3001)
    errs = []
    for n in (1e2, 1e3, 1e4):
        fld = PenaltyField(RadialField(oscillator, 0.0), n, 1e-3)
        arc = integrate_smooth(fld, (0.0, 1.0), 0.0, 3 * math.pi)
        errs.append(float(np.max(np.abs(arc(ts)[0] - np.abs(np.sin(ts))))))
    assert errs[0] > errs[1] > errs[2]


@pytest.fixture(scope="module")
def catalog_ladder(catalog):
    return convergence_ladder(catalog, 0.0326, n_ladder=(1e2, 1e3, 1e4), exact="auto")


def test_ladder_goodderivative_and_convergence(catalog_ladder):
    res = catalog_ladder
    assert res.complete and len(res.rungs) == 3
    for r in res.rungs:
        assert r.min_x >= -r.max_xprime / math.sqrt(r.n)
        assert r.derivative_bound_ok
        assert r.max_x / r.C_fit <= r.max_xprime <= r.C_fit * r.max_x
    d = [r.sup_dist_to_exact for r in res.rungs]
    assert d[0] > d[1] > d[2] and d[2] <= 1e-2
    assert res.rungs[0].sup_dist_to_prev is None
    assert all(r.sup_dist_to_prev > 0 for r in res.rungs[1:])


def test_ladder_report_is_json(catalog_ladder):
    import json
    data = json.loads(catalog_ladder.to_json())
    assert [r["n"] for r in data["rungs"]] == [1e2, 1e3, 1e4]
    assert data["failure"] is None


def test_ladder_refuses_stiff_without_opt_in(catalog):
    with pytest.raises(ValueError, match="allow_stiff"):
        convergence_ladder(catalog, 0.1, n_ladder=(1e7,))


def test_ladder_needs_L_or_spec(catalog):
    with pytest.raises(ValueError):
        convergence_ladder(catalog, None, n_ladder=(1e2,))


def test_ladder_failure_is_partial(catalog):
    # kappa cannot be chosen for n=2 on the (1, 4) band: the ladder stops there
    res = convergence_ladder(catalog, 0.0326, n_ladder=(1e2, 2), band=(1.0, 4.0))
    assert not res.complete
    assert res.failure["n"] == 2.0
    assert len(res.rungs) == 1
