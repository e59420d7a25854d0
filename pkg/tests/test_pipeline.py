from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from _cache import FIXTURES, run, scenario, seed
from embodied_planner.errors import NotSafeWithinBudget, ParseError, StageError, ValidationError
from embodied_planner.geometry import TABLE_I
from embodied_planner.kinematics import State
from embodied_planner.pipeline import (
    CSV_HEADER,
    GrowthRateResult,
    certify,
    export,
    growth_rate,
    naive_escalation,
    plan,
    probe_report,
    random_pose,
    random_tasks,
    read_trajectory_csv,
    render_svg,
    write_trajectory_csv,
)
from embodied_planner.scenario import (
    DEFAULT_LAMBDA,
    fixture_dir,
    fixture_paths,
    load_scenario,
    pose_clearance,
    scenario_from_dict,
)
from embodied_planner.trajectory_nlp import EMBODIED, NAIVE

OPEN = {
    "name": "open",
    "workspace": {"x_min": 0, "x_max": 30, "y_min": 0, "y_max": 10},
    "start": {"x": 3, "y": 5, "theta": 0},
    "goal": {"x": 25, "y": 5, "theta": 0},
}


def write_json(tmp_path, doc, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# --- scenario loading --------------------------------------------------------------

def test_fixture_corpus():
    names = {p.stem for p in fixture_paths()}
    assert set(FIXTURES) <= names and len(names) >= 5
    assert load_scenario(fixture_dir() / "corridor_30m.json").workspace.x_max - 0 >= 30


def test_lambda_default_recorded(tmp_path):
    sc = load_scenario(write_json(tmp_path, OPEN))
    assert sc.lam == DEFAULT_LAMBDA == 0.75
    assert sc.lambda_defaulted
    assert sc.vehicle == TABLE_I
    assert not load_scenario(write_json(tmp_path, dict(OPEN, **{"lambda": 0.5}))).lambda_defaulted


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_scenario(bad)
    with pytest.raises(ParseError):
        scenario_from_dict([1, 2])


def test_inadmissible_vehicle_names_invariant():
    doc = dict(OPEN, vehicle={"L_W": 0.5, "L_B": 2.0, "phi_max": 1.0})
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(doc)
    assert "admissibility" in str(info.value)


@pytest.mark.parametrize(
    "patch, needle",
    [
        ({"lambda": 1.0}, "lambda"),
        ({"lambda": 0.0}, "lambda"),
        ({"dT_max": -1}, "dT_max"),
        ({"format_version": 2}, "format_version"),
        ({"seed": -3}, "seed"),
        ({"workspace": {"x_min": 1, "x_max": 0, "y_min": 0, "y_max": 1}}, "workspace"),
        ({"start": {"x": 0.2, "y": 5, "theta": 0}}, "start"),
        ({"goal": {"x": 25, "y": 5, "theta": 0, "v": 9}}, "goal.v"),
        ({"goal": {"x": 25, "y": 5}}, "theta"),
        ({"obstacles": [{"vertices": [[0, 0], [1, 1], [2, 2]]}]}, "obstacles[0]"),
        ({"obstacles": [{"vertices": [[2, 4], [5, 4], [5, 6], [2, 6]]}]}, "collision-free"),
        ({"vehicle": "table_iii"}, "preset"),
        ({"solver": {"feas_tol": -1}}, "solver"),
    ],
)
def test_validation_errors_name_the_invariant(patch, needle):
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(dict(OPEN, **patch))
    assert needle in str(info.value)


def test_obstacle_margin_inflates():
    doc = dict(OPEN, obstacles=[{"vertices": [[10, 8], [12, 8], [12, 9], [10, 9]], "margin": 0.5}])
    ob = scenario_from_dict(doc).obstacles[0]
    assert ob.vertices[:, 0].min() == pytest.approx(9.5)
    assert ob.vertices[:, 1].max() == pytest.approx(9.5)


def test_pose_clearance():
    sc = scenario("straight_10m")
    assert math.isinf(pose_clearance(sc, (0.0, 0.0, 0.0)))
    blocked = scenario("offset_block")
    assert pose_clearance(blocked, (2.0, 2.0, 0.0)) > 0


# --- plan ---------------------------------------------------------------------------

def test_metrics_fields_and_oracle_verdict():
    traj, m = run("straight_10m")
    assert m.mode == EMBODIED and m.n_fe == len(traj) - 1
    assert m.safe == certify(traj, scenario("straight_10m")).safe
    d = m.to_dict()
    assert "stage_times" not in d and "stage_times" in m.to_dict(with_times=True)
    assert {"guess", "build", "solve", "certify", "coarse_path"} <= set(m.stage_times)
    assert m.lam == 0.75


def test_zero_obstacles_both_modes_safe():
    _, emb = run("straight_10m")
    _, naive = run("straight_10m", NAIVE, emb.n_fe)
    assert emb.ok and naive.ok
    assert naive.n_fe == emb.n_fe


@pytest.mark.parametrize("name", FIXTURES)
def test_cost_at_least_straight_line_bound(name):
    sc = scenario(name)
    _, m = run(name)
    d = math.hypot(sc.goal.x - sc.start.x, sc.goal.y - sc.start.y)
    assert m.cost >= d / sc.vehicle.v_max


def test_straight_cost_near_bang_bang():
    # held-state speeds switch at nodes, so the discrete optimum may undercut
    # the continuous profile slightly
    _, m = run("straight_10m")
    assert m.cost == pytest.approx(2 * math.sqrt(10 / 0.75), rel=0.05)


def test_plan_rejects_bad_arguments():
    sc = scenario("straight_10m")
    with pytest.raises(ValueError):
        plan(sc, "magic", None, seed("straight_10m"))
    with pytest.raises(ValueError):
        plan(sc, NAIVE, 0, seed("straight_10m"))


def test_stage_error_carries_stage_name():
    doc = {
        "name": "walled_off",
        "workspace": {"x_min": 0, "x_max": 20, "y_min": 0, "y_max": 8},
        "obstacles": [{"vertices": [[9, 0], [11, 0], [11, 8], [9, 8]]}],
        "start": {"x": 3, "y": 4, "theta": 0},
        "goal": {"x": 17, "y": 4, "theta": 0},
    }
    with pytest.raises(StageError) as info:
        plan(scenario_from_dict(doc))
    assert info.value.stage == "coarse_path"


# --- escalation and growth --------------------------------------------------------------

def test_escalation_obstacle_free_first_n_is_safe():
    n, trail = naive_escalation(scenario("straight_10m"), 4, 10, seed("straight_10m"))
    assert n == 4 and len(trail) == 1 and trail[0].ok


def test_escalation_budget_exhausted():
    with pytest.raises(NotSafeWithinBudget) as info:
        naive_escalation(scenario("offset_block"), 3, 4, seed("offset_block"))
    assert [m.n_fe for m in info.value.trail] == [3, 4]


def test_escalation_rejects_small_start():
    with pytest.raises(ValueError):
        naive_escalation(scenario("straight_10m"), 1, 5)


def test_growth_rate_arithmetic():
    assert growth_rate(90, 137) == (137 - 90) / 90
    r = GrowthRateResult(0.75, 3, [{"rate": growth_rate(10, 15)}, {"rate": growth_rate(20, 20)}], [{"task": 2}])
    assert r.rates == [0.5, 0.0]
    assert r.average_rate == 0.25
    d = r.to_dict()
    assert d["n_failed"] == 1 and d["lambda"] == 0.75 and d["seed"] == 3
    assert GrowthRateResult(0.5, 0, [], []).average_rate is None


def test_random_tasks_seeded_and_clear():
    sc = scenario("cluttered_20m")
    a = random_tasks(sc, 4, 11)
    assert a == random_tasks(sc, 4, 11)
    assert a != random_tasks(sc, 4, 12)
    for s, g in a:
        assert math.hypot(g[0] - s[0], g[1] - s[1]) >= 8.0
        assert pose_clearance(sc, s) >= 0.5 and pose_clearance(sc, g) >= 0.5


def test_random_pose_inside_workspace():
    sc = scenario("offset_block")
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y, th = random_pose(sc, rng)
        replace(sc, start=State(x, y, th, 0.0, 0.0))  # constructible
        assert sc.workspace.x_min <= x <= sc.workspace.x_max


# --- probe ------------------------------------------------------------------------------

def test_probe_report_thin_wall():
    rep = probe_report(scenario("fig1_thin_wall"))
    assert rep["start_footprint_free"] and rep["end_footprint_free"]
    assert not rep["oracle_safe"]
    assert rep["box_constraint_max"] > 0
    assert rep["box_overlaps"]


def test_probe_requires_probe_section():
    with pytest.raises(ValueError):
        probe_report(scenario("straight_10m"))


# --- export -----------------------------------------------------------------------------

def test_export_files(tmp_path):
    traj, m = run("offset_block")
    sc = scenario("offset_block")
    files = export(traj, m, tmp_path, sc)
    lines = files["trajectory"].read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == m.n_fe + 2
    meta = json.loads(files["metrics"].read_text())
    assert set(meta) == set(m.to_dict())
    assert meta["safe"] is True
    assert set(json.loads(files["timings"].read_text())) == set(m.stage_times)


def test_csv_round_trip_recertifies(tmp_path):
    traj, _ = run("offset_block")
    sc = scenario("offset_block")
    path = tmp_path / "t.csv"
    write_trajectory_csv(traj, path)
    back = read_trajectory_csv(path)
    assert len(back) == len(traj)
    assert certify(back, sc) == certify(read_trajectory_csv(path), sc)
    a, b = certify(traj, sc), certify(back, sc)
    assert a.safe == b.safe
    assert b.min_clearance == pytest.approx(a.min_clearance, abs=1e-6)


def test_csv_nine_significant_digits(tmp_path):
    traj, _ = run("straight_10m")
    path = tmp_path / "t.csv"
    write_trajectory_csv(traj, path)
    for row in path.read_text().splitlines()[1:]:
        for field_ in row.split(","):
            digits = field_.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(digits) <= 9


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(path)


def test_csv_n10_has_11_rows(tmp_path):
    traj, m = run("straight_10m", NAIVE, 10)
    path = tmp_path / "t.csv"
    write_trajectory_csv(traj, path)
    assert len(path.read_text().splitlines()) == 1 + 11


@pytest.mark.parametrize("mode", [EMBODIED, NAIVE])
def test_svg_is_valid_xml(mode):
    traj, _ = run("offset_block")
    sc = scenario("offset_block")
    root = ET.fromstring(render_svg(traj, sc, mode).encode())
    ns = "{http://www.w3.org/2000/svg}"
    assert root.tag == ns + "svg"
    paths = {p.get("class"): p for p in root.iter(ns + "path")}
    obstacles = [p for p in root.iter(ns + "path") if p.get("class") == "obstacle"]
    assert len(obstacles) == len(sc.obstacles)
    assert all(p.get("d").endswith("Z") for p in obstacles)
    assert ("box" in paths) == (mode == EMBODIED)
    assert "sweep" in paths and "footprint" in paths
    assert len(list(root.iter(ns + "polyline"))) == 1


def test_export_byte_identical_reruns(tmp_path):
    sc = scenario("offset_block")
    outs = []
    for k in range(2):
        traj, m = plan(sc, EMBODIED, None, seed("offset_block"))
        outs.append(export(traj, m, tmp_path / str(k), sc))
    for key in ("trajectory", "metrics", "plot"):
        assert outs[0][key].read_bytes() == outs[1][key].read_bytes()
