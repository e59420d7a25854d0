"""End-to-end planning, the naive baseline loop, the growth-rate experiment and export."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .al_solver import solve
from .coarse_planner import (
    DENSE_DT,
    CoarsePath,
    CoarseTrajectory,
    attach_velocity,
    equidistant_guess,
    form_initial_guess,
    plan_coarse_path,
    resample_equidistant,
)
from .embodied_box import extents_arrays
from .errors import NotSafeWithinBudget, PlannerError, StageError
from .geometry import CCW_ORDER, embodied_corners, footprint_corners, sat_overlap_batch
from .kinematics import State, TimedState, curvature, propagate_arc
from .scenario import Scenario, pose_clearance
from .swept_oracle import SafetyReport, sample_trajectory, trajectory_safety_check
from .trajectory_nlp import (
    EMBODIED,
    MODES,
    NAIVE,
    NlpOptions,
    outside_rows,
    build_nlp,
    decode_solution,
    encode,
)

SAFETY_SAMPLES = 200
POSE_CLEARANCE = 0.5
TASK_RUN_UP = 3.0


@dataclass(frozen=True)
class CoarseSeed:
    """Output of the search and profile stages, shared by both transcriptions."""

    path: CoarsePath
    coarse: CoarseTrajectory
    dense: CoarseTrajectory
    times: dict


@dataclass
class RunMetrics:
    scenario: str
    mode: str
    n_fe: int
    cost: float
    safe: bool
    min_clearance: float | None
    first_violation_time: float | None
    solver_status: str
    max_violation: float
    outer_iterations: int
    inner_iterations: int
    lam: float
    nlp: dict
    stage_times: dict = field(default_factory=dict)

    @property
    def solver_success(self) -> bool:
        return self.solver_status in ("feasible-optimal-ish", "feasible")

    @property
    def ok(self) -> bool:
        return self.solver_success and self.safe

    def to_dict(self, with_times: bool = False) -> dict:
        d = asdict(self)
        if not with_times:
            d.pop("stage_times")
        return d


@dataclass
class GrowthRateResult:
    lam: float
    seed: int
    tasks: list
    failures: list

    @property
    def rates(self) -> list[float]:
        return [t["rate"] for t in self.tasks]

    @property
    def average_rate(self) -> float | None:
        r = self.rates
        return sum(r) / len(r) if r else None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "seed": self.seed,
            "tasks": self.tasks,
            "failures": self.failures,
            "n_failed": len(self.failures),
            "average_rate": self.average_rate,
        }


def growth_rate(n_proposed: int, n_naive: int) -> float:
    return (n_naive - n_proposed) / n_proposed


# --- pipeline ---------------------------------------------------------------------

def _stage(name, times, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except PlannerError as exc:
        raise StageError(name, exc) from exc
    finally:
        times[name] = time.perf_counter() - t0


def coarse_seed(scenario: Scenario) -> CoarseSeed:
    """Search a path and attach the speed profile; stage errors carry their stage name."""
    times: dict = {}
    path = _stage("coarse_path", times, plan_coarse_path, scenario)
    st, gl = scenario.start, scenario.goal
    coarse = _stage("velocity", times, attach_velocity, path, scenario.vehicle, st.v, gl.v, st.phi, gl.phi)
    dense = _stage("resample", times, resample_equidistant, coarse, DENSE_DT)
    return CoarseSeed(path, coarse, dense, times)


def certify(traj, scenario: Scenario, samples: int = SAFETY_SAMPLES) -> SafetyReport:
    return trajectory_safety_check(traj, scenario.obstacles, scenario.vehicle, samples)


def plan(
    scenario: Scenario,
    mode: str = EMBODIED,
    n_fe: int | None = None,
    seed: CoarseSeed | None = None,
    nlp_opts: NlpOptions | None = None,
):
    """Plan a trajectory and certify it with the dense oracle.

    Embodied mode keeps the non-equidistant guess from the greedy scan;
    naive mode uses equidistant collocation with ``n_fe`` intervals, or the
    embodied guess's count when ``n_fe`` is omitted. A given ``n_fe`` in
    embodied mode replaces the scan with an equidistant guess.

    Returns ``(trajectory, RunMetrics)``. Solver non-convergence is data in
    the metrics; search and guess failures raise ``StageError``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n_fe is not None and n_fe < 1:
        raise ValueError("n_fe must be at least 1")
    seed = seed or coarse_seed(scenario)
    times = dict(seed.times)
    p = scenario.vehicle
    if mode == EMBODIED and n_fe is None:
        guess = _stage("guess", times, form_initial_guess, seed.dense, scenario.lam, scenario.dT_max, p)
    else:
        if n_fe is None:
            n_fe = _stage("guess", times, form_initial_guess, seed.dense, scenario.lam, scenario.dT_max, p).n_fe
        guess = _stage("equidistant_guess", times, equidistant_guess, seed.coarse, n_fe)
    problem = _stage("build", times, build_nlp, scenario, guess, mode, nlp_opts)
    x0 = encode(problem, guess)
    x, report = _stage("solve", times, solve, problem, x0, scenario.solver)
    traj = decode_solution(problem, x)
    safety = _stage("certify", times, certify, traj, scenario)
    metrics = RunMetrics(
        scenario=scenario.name,
        mode=mode,
        n_fe=problem.n_fe,
        cost=report.cost,
        safe=safety.safe,
        min_clearance=None if math.isinf(safety.min_clearance) else safety.min_clearance,
        first_violation_time=safety.first_violation_time,
        solver_status=report.status,
        max_violation=report.max_violation,
        outer_iterations=report.outer_iterations,
        inner_iterations=report.inner_iterations,
        lam=scenario.lam,
        nlp=problem.stats(),
        stage_times=times,
    )
    return traj, metrics


def naive_escalation(scenario: Scenario, n_start: int, n_max: int, seed: CoarseSeed | None = None):
    """Raise the naive collocation count one at a time until a run is feasible and certified safe.

    Returns ``(first safe N, list of RunMetrics)``; raises
    ``NotSafeWithinBudget`` when ``n_max`` is passed first.
    """
    if n_start < 2:
        raise ValueError("n_start must be at least 2")
    seed = seed or coarse_seed(scenario)
    trail = []
    for n in range(n_start, n_max + 1):
        _, m = plan(scenario, NAIVE, n, seed)
        trail.append(m)
        if m.ok:
            return n, trail
    raise NotSafeWithinBudget(n_max, trail)


# --- growth-rate experiment -------------------------------------------------------------

def random_pose(scenario: Scenario, rng: np.random.Generator, clearance: float = POSE_CLEARANCE,
                run_up: float = 0.0, max_tries: int = 10000) -> tuple[float, float, float]:
    """Rejection-sample a pose whose footprint lies in the workspace with the given clearance.

    A nonzero ``run_up`` also requires the footprint to stay clear while
    sliding that far along the heading (backwards when negative). The
    vehicle only drives forward, so a start facing a nearby wall or a goal
    backed against one would be unreachable.
    """
    ws = scenario.workspace
    offsets = np.linspace(0.0, run_up, max(2, int(math.ceil(abs(run_up) / 0.5)) + 1))
    for _ in range(max_tries):
        x = rng.uniform(ws.x_min, ws.x_max)
        y = rng.uniform(ws.y_min, ws.y_max)
        th = rng.uniform(-math.pi, math.pi)
        ok = True
        for d in offsets:
            px, py = x + d * math.cos(th), y + d * math.sin(th)
            fp = footprint_corners(px, py, th, scenario.vehicle, clearance)
            if not ws.contains(fp) or pose_clearance(scenario, (px, py, th)) < clearance:
                ok = False
                break
        if ok:
            return float(x), float(y), float(th)
    raise PlannerError("could not sample a collision-free pose")


def random_tasks(scenario: Scenario, n_tasks: int, seed: int, min_distance: float = 8.0,
                 run_up: float = TASK_RUN_UP):
    """Seeded start/goal pairs at least ``min_distance`` apart (numpy PCG64 generator).

    Starts have ``run_up`` metres of clear road ahead and goals as much behind.
    """
    rng = np.random.default_rng(seed)
    tasks = []
    while len(tasks) < n_tasks:
        a = random_pose(scenario, rng, run_up=run_up)
        b = random_pose(scenario, rng, run_up=-run_up)
        if math.hypot(b[0] - a[0], b[1] - a[1]) >= min_distance:
            tasks.append((a, b))
    return tasks


def growth_rate_experiment(
    scenario: Scenario,
    n_tasks: int,
    lambdas,
    seed: int,
    budget_factor: float = 3.0,
    min_distance: float = 8.0,
) -> list[GrowthRateResult]:
    """Growth of the naive collocation count over the embodied one, per lambda.

    The same seeded tasks are used for every lambda. A task that fails in
    any stage is recorded under ``failures`` and left out of the average.
    """
    if n_tasks < 1:
        raise ValueError("n_tasks must be at least 1")
    for lam in lambdas:
        if not 0 < lam < 1:
            raise ValueError("every lambda must lie in (0, 1)")
    tasks = random_tasks(scenario, n_tasks, seed, min_distance)
    seeds = {}
    results = []
    for lam in lambdas:
        rows, failures = [], []
        for k, (a, b) in enumerate(tasks):
            sc = scenario.with_poses(State(*a, 0.0, 0.0), State(*b, 0.0, 0.0)).with_lambda(lam)
            rec = {"task": k, "start": list(a), "goal": list(b)}
            try:
                if k not in seeds:
                    seeds[k] = coarse_seed(sc)
                _, m = plan(sc, EMBODIED, None, seeds[k])
                if not m.ok:
                    failures.append({**rec, "stage": "embodied", "reason": m.solver_status if not m.solver_success else "unsafe"})
                    continue
                n_prop = m.n_fe
                n_max = max(n_prop + 1, int(math.ceil(budget_factor * n_prop)))
                n_naive, _ = naive_escalation(sc, n_prop, n_max, seeds[k])
            except (StageError, NotSafeWithinBudget) as exc:
                failures.append({**rec, "stage": getattr(exc, "stage", "naive_escalation"), "reason": str(exc)})
                continue
            rows.append({**rec, "n_proposed": n_prop, "n_naive": n_naive, "rate": growth_rate(n_prop, n_naive)})
        results.append(GrowthRateResult(lam, seed, rows, failures))
    return results


# --- thin-wall probe ------------------------------------------------------------------

def probe_report(scenario: Scenario, nlp_opts: NlpOptions | None = None) -> dict:
    """Check one held-state interval against the scenario obstacles three ways.

    ``scenario.probe`` holds ``{"state": {...}, "dT": ...}``. Reports whether
    the footprints at both ends are collision-free, whether the dense oracle
    finds an overlap in between, and the largest embodied-box constraint row
    at the first point, as the NLP would evaluate it (positive means violated).
    """
    opts = nlp_opts or NlpOptions()
    if not scenario.probe:
        raise ValueError("scenario has no probe block")
    p = scenario.vehicle
    s0 = scenario.probe["state"]
    st = State(s0["x"], s0["y"], s0["theta"], s0.get("v", 0.0), s0.get("phi", 0.0))
    dT = float(scenario.probe["dT"])
    end = propagate_arc(st, dT, p.lw)
    obstacles = [o.vertices for o in scenario.obstacles]

    def hits(pose):
        fp = footprint_corners(*pose, p)[None]
        return any(bool(sat_overlap_batch(fp, o)[0]) for o in obstacles)

    kappa = curvature(st.phi, p.lw)
    el, er, eu = (float(a) for a in extents_arrays(kappa, st.v * dT, p))
    box = embodied_corners(st.x, st.y, st.theta, p, el, er, eu)[list(CCW_ORDER)]
    eps, w = opts.collision_margin, opts.depth_weight
    worst = -math.inf
    for o in obstacles:
        worst = max(worst, float(np.max(outside_rows(eps, w, box, o))),
                    float(np.max(outside_rows(eps, w, o, box))))
    safety = certify([TimedState(0.0, st), TimedState(dT, end)], scenario)
    return {
        "start_footprint_free": not hits(st.pose),
        "end_footprint_free": not hits(end.pose),
        "oracle_safe": safety.safe,
        "first_violation_time": safety.first_violation_time,
        "box_constraint_max": worst,
        "box_overlaps": any(bool(sat_overlap_batch(box[None], o)[0]) for o in obstacles),
    }


# --- export ----------------------------------------------------------------------------

CSV_HEADER = ("t", "x", "y", "theta", "v", "phi")


def write_trajectory_csv(traj, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for ts in traj:
            s = ts.state
            w.writerow([f"{v:.9g}" for v in (ts.t, s.x, s.y, s.theta, s.v, s.phi)])


def read_trajectory_csv(path) -> list[TimedState]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"expected header {','.join(CSV_HEADER)}")
    return [TimedState(float(r[0]), State(*(float(v) for v in r[1:]))) for r in rows[1:]]


def _svg_path(pts) -> str:
    return "M " + " L ".join(f"{x:.4f},{y:.4f}" for x, y in pts) + " Z"


def render_svg(traj, scenario: Scenario, mode: str = EMBODIED, sweep_per_interval: int = 10) -> str:
    """Workspace, obstacles, swept footprints, boxes at collocation points and the rear-axle path."""
    ws = scenario.workspace
    p = scenario.vehicle
    w, h = ws.x_max - ws.x_min, ws.y_max - ws.y_min
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{ws.x_min} {-ws.y_max} {w} {h}" '
        f'width="{800}" height="{800 * h / w:.0f}">',
        f"<title>{escape(scenario.name)}</title>",
        '<g transform="scale(1,-1)" stroke-linejoin="round">',
        f'<rect x="{ws.x_min}" y="{ws.y_min}" width="{w}" height="{h}" fill="white" stroke="black" stroke-width="0.05"/>',
    ]
    for ob in scenario.obstacles:
        out.append(f'<path class="obstacle" d="{_svg_path(ob.vertices)}" fill="#888" stroke="black" stroke-width="0.03"/>')
    if len(traj) > 1:
        _, xs, ys, ths = sample_trajectory(traj, p, sweep_per_interval)
        for c in footprint_corners(xs, ys, ths, p):
            out.append(f'<path class="sweep" d="{_svg_path(c[list(CCW_ORDER)])}" fill="none" stroke="#9cf" stroke-width="0.01"/>')
        if mode == EMBODIED:
            for a, b in zip(traj[:-1], traj[1:]):
                s = a.state
                el, er, eu = extents_arrays(curvature(s.phi, p.lw), s.v * (b.t - a.t), p)
                c = embodied_corners(s.x, s.y, s.theta, p, el, er, eu)[list(CCW_ORDER)]
                out.append(f'<path class="box" d="{_svg_path(c)}" fill="none" stroke="#e60" stroke-width="0.03"/>')
    for ts in traj:
        c = footprint_corners(ts.state.x, ts.state.y, ts.state.theta, p)[list(CCW_ORDER)]
        out.append(f'<path class="footprint" d="{_svg_path(c)}" fill="none" stroke="#036" stroke-width="0.03"/>')
    pts = " ".join(f"{ts.state.x:.4f},{ts.state.y:.4f}" for ts in traj)
    out.append(f'<polyline class="path" points="{pts}" fill="none" stroke="red" stroke-width="0.05"/>')
    out += ["</g>", "</svg>", ""]
    return "\n".join(out)


def export(traj, metrics: RunMetrics, out_dir, scenario: Scenario) -> dict:
    """Write ``trajectory.csv``, ``metrics.json``, ``timings.json`` and ``plot.svg``.

    ``metrics.json`` leaves out wall-clock times so seeded reruns are
    byte-identical; those go to ``timings.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "trajectory": out / "trajectory.csv",
        "metrics": out / "metrics.json",
        "timings": out / "timings.json",
        "plot": out / "plot.svg",
    }
    write_trajectory_csv(traj, files["trajectory"])
    files["metrics"].write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
    files["timings"].write_text(json.dumps(metrics.stage_times, indent=2, sort_keys=True) + "\n")
    files["plot"].write_text(render_svg(traj, scenario, metrics.mode))
    return files
