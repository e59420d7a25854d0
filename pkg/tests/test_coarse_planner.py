from __future__ import annotations

import math

import numpy as np
import pytest

from _cache import scenario, seed
from embodied_planner.coarse_planner import (
    DENSE_DT,
    CoarseTrajectory,
    attach_velocity,
    equidistant_guess,
    form_initial_guess,
    plan_coarse_path,
    resample_equidistant,
    straight_path,
)
from embodied_planner.embodied_box import prerequisites
from embodied_planner.errors import GuessDegenerate, InfeasibleProfile, NoPathFound
from embodied_planner.geometry import TABLE_I
from embodied_planner.kinematics import State, TimedState, arc_step, propagate_arc
from embodied_planner.scenario import scenario_from_dict
from embodied_planner.swept_oracle import trajectory_safety_check


def constant_motion(v, kappa, T, dt):
    """Dense trajectory at constant speed and curvature from the origin heading up."""
    n = int(round(T / dt))
    t = dt * np.arange(n + 1)
    x, y, th = arc_step(0.0, 0.0, math.pi / 2, kappa, v * t)
    phi = math.atan(kappa * TABLE_I.lw)
    full = np.full_like(t, 1.0)
    return CoarseTrajectory(t, x, y, th, v * full, phi * full, kappa * full)


# --- speed profile ---------------------------------------------------------------

def test_triangular_profile_10m():
    tr = attach_velocity(straight_path(10.0), TABLE_I, 0.0, 0.0)
    assert tr.duration == pytest.approx(7.3030, abs=5e-4)
    assert tr.v.max() == pytest.approx(math.sqrt(0.75 * 10), abs=1e-9)
    assert tr.v.max() == pytest.approx(2.7386, abs=1e-4)


def test_trapezoidal_profile_100m():
    tr = attach_velocity(straight_path(100.0), TABLE_I, 0.0, 0.0)
    accel = 5.0 / 0.75
    cruise = (100 - 2 * 16.6667) / 5.0
    assert accel == pytest.approx(6.667, abs=1e-3)
    assert tr.duration == pytest.approx(2 * accel + cruise, abs=1e-3)
    assert tr.v.max() == pytest.approx(5.0)


def test_zero_length_profile():
    tr = attach_velocity(straight_path(0.0), TABLE_I, 0.0, 0.0)
    assert tr.duration == 0.0
    with pytest.raises(InfeasibleProfile):
        attach_velocity(straight_path(0.0), TABLE_I, 1.0, 0.0)


def test_profile_infeasible_stop():
    with pytest.raises(InfeasibleProfile):
        attach_velocity(straight_path(1.0), TABLE_I, 5.0, 0.0)


def test_profile_limits_on_planned_path():
    tr = seed("offset_block").coarse
    assert tr.v.max() <= TABLE_I.v_max + 1e-12
    acc = np.diff(tr.v) / np.diff(tr.t)
    assert acc.max() <= TABLE_I.a_max + 1e-9
    assert acc.min() >= TABLE_I.a_min - 1e-9
    rate = np.abs(np.diff(tr.phi)) / np.diff(tr.t)
    assert rate.max() <= TABLE_I.omega_max + 1e-9
    assert np.all(np.abs(tr.phi) <= TABLE_I.phi_max + 1e-12)


# --- resampling ----------------------------------------------------------------------

def test_resample_counts():
    tr = constant_motion(1.0, 0.0, 1.0, 0.05)
    assert len(resample_equidistant(tr, 0.25)) == 5
    assert len(resample_equidistant(tr, 2.0)) == 2


def test_resample_matches_propagation():
    tr = constant_motion(2.0, 0.1, 2.0, 0.1)
    fine = resample_equidistant(tr, 0.013)
    start = State(0.0, 0.0, math.pi / 2, 2.0, math.atan(0.1 * TABLE_I.lw))
    for k in range(len(fine)):
        end = propagate_arc(start, float(fine.t[k]), TABLE_I.lw)
        assert (fine.x[k], fine.y[k], fine.theta[k]) == pytest.approx((end.x, end.y, end.theta), abs=1e-9)


def test_resample_rejects_bad_step():
    with pytest.raises(ValueError):
        resample_equidistant(constant_motion(1.0, 0.0, 1.0, 0.1), 0.0)


# --- initial guess ------------------------------------------------------------------

def test_guess_straight_spacing_is_dT_max():
    tr = constant_motion(2.0, 0.0, 5.0, DENSE_DT)
    g = form_initial_guess(tr, 0.75, 1.0, TABLE_I)
    np.testing.assert_allclose(np.diff([w.t for w in g.waypoints]), 1.0, atol=1e-9)
    assert g.n_fe == 5


def c31_bound(kappa, lam, p=TABLE_I):
    return math.atan(lam * p.lr * kappa / (1 + 0.5 * p.lb * kappa)) / kappa


def test_guess_curved_spacing():
    smax = c31_bound(0.1, 0.75)
    assert smax == pytest.approx(0.634231, abs=1e-6)
    tr = constant_motion(2.0, 0.1, 3.0, DENSE_DT)
    g = form_initial_guess(tr, 0.75, 1.0, TABLE_I)
    gaps = np.diff([w.t for w in g.waypoints])
    assert gaps[:-1] == pytest.approx(0.31, abs=1e-9)  # floor of 0.3171 on the 0.01 s grid
    fine = form_initial_guess(constant_motion(2.0, 0.1, 3.0, 0.001), 0.75, 1.0, TABLE_I)
    gaps = np.diff([w.t for w in fine.waypoints])
    assert gaps[:-1] == pytest.approx(0.317, abs=1e-9)


def test_guess_pairs_valid_and_maximal():
    dense = seed("offset_block").dense
    lam, dT_max = 0.75, 1.0
    g = form_initial_guess(dense, lam, dT_max, TABLE_I)
    idx = [int(np.argmin(np.abs(dense.t - w.t))) for w in g.waypoints]
    for a, b in zip(idx[:-1], idx[1:]):
        elapsed = dense.t[b] - dense.t[a]
        s = dense.v[a] * elapsed
        assert prerequisites(dense.kappa[a], s, TABLE_I, lam).ok
        assert elapsed <= dT_max + 1e-12
        if b + 1 < len(dense) and b != idx[-1]:
            nxt = dense.t[b + 1] - dense.t[a]
            longer = prerequisites(dense.kappa[a], dense.v[a] * nxt, TABLE_I, lam).ok
            assert not longer or nxt > dT_max + 1e-12


def test_guess_lambda_monotone():
    dense = seed("cluttered_20m").dense
    n75 = form_initial_guess(dense, 0.75, 1.0, TABLE_I).n_fe
    n99 = form_initial_guess(dense, 0.99, 1.0, TABLE_I).n_fe
    n50 = form_initial_guess(dense, 0.5, 1.0, TABLE_I).n_fe
    assert n99 <= n75 <= n50


def test_guess_conservative_not_shorter():
    dense = seed("cluttered_20m").dense
    assert form_initial_guess(dense, 0.75, 1.0, TABLE_I, conservative=True).n_fe >= \
        form_initial_guess(dense, 0.75, 1.0, TABLE_I).n_fe


def test_guess_degenerate():
    with pytest.raises(GuessDegenerate):
        form_initial_guess(constant_motion(1.0, 0.0, 0.5, DENSE_DT), 0.75, 1.0, TABLE_I)


def test_guess_deterministic():
    a = form_initial_guess(seed("corridor_30m").dense, 0.75, 1.0, TABLE_I)
    b = form_initial_guess(seed("corridor_30m").dense, 0.75, 1.0, TABLE_I)
    assert a == b


def test_equidistant_guess():
    tr = seed("straight_10m").coarse
    g = equidistant_guess(tr, 12)
    assert g.n_fe == 12
    np.testing.assert_allclose(np.diff([w.t for w in g.waypoints]), tr.duration / 12, atol=1e-9)


# --- search -----------------------------------------------------------------------

def test_search_straight_length():
    sc = scenario("straight_10m")
    path = plan_coarse_path(sc)
    assert path.length == pytest.approx(10.0, rel=0.05)
    end = path.poses[-1]
    assert math.hypot(end[0] - sc.goal.x, end[1] - sc.goal.y) <= 0.2
    assert abs(end[2] - sc.goal.theta) <= 0.1


def test_search_start_equals_goal():
    sc = scenario("straight_10m")
    same = sc.with_poses(sc.start, sc.start)
    path = plan_coarse_path(same)
    assert len(path) == 1


def test_search_offset_block_clear():
    sc = scenario("offset_block")
    path = seed("offset_block").path
    end = path.poses[-1]
    assert math.hypot(end[0] - sc.goal.x, end[1] - sc.goal.y) <= 0.2
    kmax = TABLE_I.kappa_max
    assert np.all(np.abs(path.kappa) <= kmax + 1e-12)
    # replay the path at a slow nominal speed: 0.5 m/s, one interval per sub-sample
    traj = []
    t = 0.0
    for i, (x, y, th) in enumerate(path.poses):
        if i:
            t += (path.s[i] - path.s[i - 1]) / 0.5
        phi = math.atan(path.kappa[i] * TABLE_I.lw)
        traj.append(TimedState(t, State(x, y, th, 0.5, phi)))
    rep = trajectory_safety_check(traj, sc.obstacles, TABLE_I, 50)
    assert rep.safe and rep.min_clearance > 0


def test_search_reports_no_path():
    doc = {
        "name": "walled_off",
        "workspace": {"x_min": 0, "x_max": 20, "y_min": 0, "y_max": 8},
        "obstacles": [{"vertices": [[9, 0], [11, 0], [11, 8], [9, 8]]}],
        "start": {"x": 3, "y": 4, "theta": 0},
        "goal": {"x": 17, "y": 4, "theta": 0},
    }
    with pytest.raises(NoPathFound):
        plan_coarse_path(scenario_from_dict(doc), max_expansions=2000)
