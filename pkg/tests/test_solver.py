from __future__ import annotations

import math

import numpy as np
import pytest

from orbit_bounce import analysis
from orbit_bounce.analysis import AsymmetricBand, LLProblem, ResonanceBand
from orbit_bounce.integrator import integrate_bouncing, integrate_smooth
from orbit_bounce.model import RadialField, WindingSpec, problem_from_force
from orbit_bounce.penalty import PenaltyField
from orbit_bounce.solver import (CylinderFailure, CylinderProblem, InfeasibleSpec, LLRefusal,
                                 ShootingConfig, ShootingFailure, TransverseComponent,
                                 continue_in_L, k_min, shoot_periodic, solve_cylinder,
                                 solve_resonant)

from conftest import constant_field


# ---------------------------------------------------------------- shooting

def test_forced_linear_oscillator_oracle(catalog):
    # x'' + 2.5 x + 0.1 sin 2t = 0 has the periodic solution A sin(wt) / (w^2 - mu)
    A, w, mu = 0.1, 2.0, 2.5
    sol = shoot_periodic(RadialField(catalog, 0.0), math.pi, mode="smooth")
    ts = np.linspace(0, math.pi, 400)
    _, st = sol.trajectory.uniform(400, 0.0, math.pi)
    assert np.max(np.abs(st[0] - A * np.sin(w * ts) / (w * w - mu))) <= 1e-8
    assert np.max(np.abs(st[1] - A * w * np.cos(w * ts) / (w * w - mu))) <= 1e-8
    assert sol.residual <= 1e-8
    assert sol.min_singular_value > 1e-3 and sol.jacobian.shape == (2, 2)


def test_penalty_mode_same_answer_away_from_wall(catalog):
    # the forced solution dips below zero, so only check the penalty shot converges
    fld = PenaltyField(RadialField(catalog, 0.0), 1e4, 1e-3)
    sol = shoot_periodic(fld, math.pi, mode="penalty")
    assert sol.residual <= 1e-8 and sol.mode == "penalty"


def test_bouncing_sine_family(oscillator):
    sol = shoot_periodic(RadialField(oscillator, 0.0), math.pi, mode="bouncing", guess=(0.0, 0.7))
    assert sol.impacts_per_period == 1
    tr = sol.trajectory
    t_imp = tr.impacts[0].t
    a = abs(tr.impacts[0].speed_in)
    ts = np.linspace(0, math.pi, 301)
    x = np.array([tr.state(t)[0] for t in ts])
    assert np.max(np.abs(x - a * np.abs(np.sin(ts - t_imp)))) <= 1e-8


def test_free_motion_has_no_periodic_orbit():
    with pytest.raises(ShootingFailure) as err:
        shoot_periodic(constant_field(0.0), 1.0, mode="bouncing")
    attempts = err.value.attempts
    assert len(attempts) == 8
    assert all(len(a) == 3 and a[1] > 0 for a in attempts)


def test_shooting_rejects_unknown_mode(catalog):
    with pytest.raises(ValueError):
        shoot_periodic(RadialField(catalog, 0.0), math.pi, mode="sliding")


@pytest.mark.parametrize("kw", [dict(residual_tol=0), dict(fd_step=-1), dict(max_newton_iters=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ShootingConfig(**kw)


def test_parallel_multistart_matches_serial(catalog):
    fld = RadialField(catalog, 0.5)
    a = shoot_periodic(fld, math.pi, ShootingConfig(), mode="bouncing")
    b = shoot_periodic(fld, math.pi, ShootingConfig(jobs=4), mode="bouncing")
    assert np.allclose(a.state0, b.state0, atol=1e-8)


# ---------------------------------------------------------------- k_min

def test_k_min_example():
    assert k_min(1, 10.0, 1.0, math.pi, 3.0) == 4
    assert 2 * math.pi / 4 < math.pi * 10 / 16 <= 2 * math.pi / 3


def test_k_min_scaling():
    for R in (0.5, 1.0, 3.0, 7.0):
        k1 = k_min(1, 10.0, 1.0, math.pi, R)
        assert k_min(2, 10.0, 1.0, math.pi, R) in (2 * k1 - 1, 2 * k1)
    ks = [k_min(1, 10.0, 1.0, math.pi, R) for R in np.linspace(0.1, 100, 50)]
    assert all(a <= b for a, b in zip(ks, ks[1:])) and ks[-1] > 100
    with pytest.raises(ValueError):
        k_min(1, 0.0, 1.0, 1.0, 1.0)


# ---------------------------------------------------------------- winding equation

@pytest.fixture(scope="module")
def catalog_orbit(catalog):
    return continue_in_L(catalog, WindingSpec(64, 1))


def test_catalog_orbit_residuals(catalog_orbit):
    orb = catalog_orbit
    target = 2 * math.pi / 64
    assert orb.max_residual <= 1e-6
    assert abs(orb.theta_value - target) <= 1e-6 * target
    assert orb.rotation_count in (1.0, 2.0)
    assert orb.diagnostics["monotone"]
    assert orb.diagnostics["scan_theta"][0] == 0.0


def test_catalog_orbit_reintegration(catalog, catalog_orbit):
    orb = catalog_orbit
    T = catalog.T
    tr = integrate_bouncing(RadialField(catalog, orb.L), orb.state0, (0.0, T))
    _, a = tr.uniform(1000, 0.0, T)
    _, b = orb.trajectory.uniform(1000, 0.0, T)
    assert np.max(np.abs(a[:2] - b[:2])) <= 10 * ShootingConfig().residual_tol


def test_catalog_orbit_theta_bounds(catalog, catalog_orbit):
    orb = catalog_orbit
    _, st = orb.trajectory.uniform(4000, 0.0, catalog.T)
    R = float(np.max(st[0]))
    assert np.min(st[0]) >= -1e-12
    T, R0, L = catalog.T, catalog.R0, orb.L
    assert T * L / (R0 + R) ** 2 < orb.theta_value < 4 * T * L / R0 ** 2


def test_catalog_orbit_theta_profile(catalog, catalog_orbit):
    orb = catalog_orbit
    prof = orb.theta_profile
    assert prof.period_value == pytest.approx(orb.theta_value, rel=1e-9)
    # k periods make one revolution
    assert 64 * orb.theta_value == pytest.approx(2 * math.pi, rel=1e-6)


def test_orbit_json(catalog_orbit):
    import json
    d = json.loads(catalog_orbit.to_json())
    assert set(d) >= {"L", "k", "nu", "residuals", "rotation_count", "impacts_per_period",
                      "theta_value"}
    assert d["k"] == 64 and d["nu"] == 1


def test_warm_start_from_previous_orbit(catalog, catalog_orbit):
    again = continue_in_L(catalog, WindingSpec(64, 1), guess=catalog_orbit)
    assert again.L == pytest.approx(catalog_orbit.L, rel=1e-6)
    assert again.diagnostics["refined_from"] == catalog_orbit.L


def test_infeasible_spec_reports_range(catalog):
    with pytest.raises(InfeasibleSpec) as err:
        continue_in_L(catalog, WindingSpec(2, 1))
    e = err.value
    assert e.theta_range[0] == 0.0 and e.theta_range[1] < math.pi
    assert "rotation counts" in str(e)


def test_infeasible_by_amplitude_bound(catalog):
    with pytest.raises(InfeasibleSpec, match="k_min=4"):
        continue_in_L(catalog, WindingSpec(2, 1), R=3.0)


def test_continue_rejects_bad_mode(catalog):
    with pytest.raises(ValueError):
        continue_in_L(catalog, WindingSpec(64, 1), mode="sliding")


# ---------------------------------------------------------------- resonant

def _resonant_problem():
    return problem_from_force("expression", {"expr": "x + 1 - cos(2*pi*t/T)", "rates": [1, 1]},
                              T=math.pi, R0=1.0)


def test_resonant_refuses_violated_conditions():
    p = _resonant_problem()
    ll = LLProblem(ResonanceBand(1, math.pi), h_plus=lambda t: 1.0, h_minus=lambda t: 1.0)
    with pytest.raises(LLRefusal) as err:
        solve_resonant(p, WindingSpec(64, 1), ll, tau_grid=16)
    assert err.value.reports["LLcond"].verdict == "violated"


@pytest.mark.slow
def test_resonant_ladder_orbit():
    p = _resonant_problem()
    ll = LLProblem(ResonanceBand(1, math.pi), h_plus=lambda t: -1.0,
                   h_minus=lambda t: 1 - math.cos(2 * t))
    orb = solve_resonant(p, WindingSpec(64, 1), ll, tau_grid=64)
    assert orb.max_residual <= 1e-5
    assert orb.mode == "penalty"
    assert orb.diagnostics["theta_rel_change"] <= 1e-2
    rungs = orb.diagnostics["rungs"]
    assert [r["n"] for r in rungs] == [1e3, 1e4]
    assert rungs[0]["kappa"] > rungs[1]["kappa"] > 1.0
    fld = PenaltyField(RadialField(p, orb.L, force_scale=rungs[1]["kappa"]), 1e4, 1e-3)
    arc = integrate_smooth(fld, orb.state0, 0.0, p.T)
    ts, b = orb.trajectory.uniform(500, 0.0, p.T)
    assert np.max(np.abs(arc(ts)[:2] - b[:2])) <= 1e-5


# ---------------------------------------------------------------- cylinder

BAND9 = AsymmetricBand(9.0, 9.0, 9.0, 9.0, 1, math.pi)


def _f2(t, y):
    # 9 y+ - 9 y- plus a small forcing
    return 9.0 * y + 0.1 * np.cos(2 * t)


@pytest.fixture(scope="module")
def decoupled(catalog):
    cp = CylinderProblem(catalog, [TransverseComponent(_f2, BAND9)])
    return solve_cylinder(cp, WindingSpec(64, 1))


def test_cylinder_decoupled_equals_componentwise(catalog, catalog_orbit, decoupled):
    sol = decoupled
    assert sol.sweeps == 1 and not sol.warnings
    assert abs(sol.orbit.L - catalog_orbit.L) <= 1e-10
    assert np.max(np.abs(sol.orbit.state0 - catalog_orbit.state0)) <= 1e-10
    alone = shoot_periodic(lambda t, y: _f2(t, y), math.pi, mode="smooth")
    assert np.max(np.abs(sol.transverse[0].state0 - alone.state0)) <= 1e-10


def test_cylinder_weak_coupling_converges(catalog):
    comp = TransverseComponent(_f2, BAND9, b2=lambda t, x, ys: 0.01 * x / (1 + x * x))
    sol = solve_cylinder(CylinderProblem(catalog, [comp]), WindingSpec(64, 1))
    assert sol.sweeps <= 20
    assert sol.history[-1] <= 1e-8
    assert sol.residuals["y1"] <= 1e-8
    assert analysis.classify_asymmetric(9, 9, 9, 9, math.pi).admissible


def test_cylinder_rejects_inadmissible_band(catalog):
    band = AsymmetricBand(4.0, 4.0, 4.0, 4.0, 1, math.pi)
    with pytest.raises(ValueError, match="inadmissible"):
        solve_cylinder(CylinderProblem(catalog, [TransverseComponent(_f2, band)]),
                       WindingSpec(64, 1))


def test_cylinder_sweep_budget_and_certificates(catalog):
    comp = TransverseComponent(_f2, BAND9, b2=lambda t, x, ys: 0.5 * ys[0])
    cp = CylinderProblem(catalog, [comp], b1=lambda t, x, ys: 1e-3 * ys[0] / (1 + ys[0] ** 2))
    with pytest.raises(CylinderFailure) as err:
        solve_cylinder(cp, WindingSpec(64, 1), max_sweeps=1)
    assert err.value.history == []


def test_cylinder_zero_coupling_raises_no_warning(catalog):
    comp = TransverseComponent(_f2, BAND9, b2=lambda t, x, ys: 0.0 * x)
    sol = solve_cylinder(CylinderProblem(catalog, [comp]), WindingSpec(64, 1))
    assert not sol.warnings
