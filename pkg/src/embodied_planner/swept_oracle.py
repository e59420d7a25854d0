"""Dense-sampling ground truth for swept regions and whole-trajectory safety."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embodied_box import sweep_bounds_unchecked
from .errors import MalformedTrajectory
from .geometry import (
    ConvexPolygon,
    VehicleParams,
    clearance_batch,
    footprint_corners,
    sat_overlap_batch,
)
from .kinematics import TimedState, arc_step, vertex_trajectory

COVERAGE_TOL = 1e-9
STATE_TOL = 1e-9


@dataclass(frozen=True)
class CoverageReport:
    covered: bool
    worst_violation: float
    sample_count: int
    argmax_time: float
    tolerance: float = COVERAGE_TOL


@dataclass(frozen=True)
class SafetyReport:
    safe: bool
    first_violation_time: float | None
    min_clearance: float
    samples_per_interval: int

    def to_dict(self) -> dict:
        return {
            "safe": self.safe,
            "first_violation_time": self.first_violation_time,
            "min_clearance": None if math.isinf(self.min_clearance) else self.min_clearance,
            "samples_per_interval": self.samples_per_interval,
        }


def coverage_check(
    v: float,
    kappa: float,
    dT: float,
    params: VehicleParams,
    n_samples: int = 2000,
    tol: float = COVERAGE_TOL,
    sample_edges: bool = False,
) -> CoverageReport:
    """Largest excursion of the moving footprint beyond the closed-form swept bounds.

    The pair ``(v * dT, kappa)`` may lie outside the validity envelope; the
    bounds are then evaluated unchecked so the report shows where coverage
    breaks. ``sample_edges`` adds five interior points per footprint edge.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    t = np.linspace(0.0, dT, n_samples)
    pts = vertex_trajectory(v, kappa, t, params)  # (n, 4, 2)
    if sample_edges:
        w = np.linspace(0.0, 1.0, 7)[1:-1]
        nxt = np.roll(pts, -1, axis=1)
        mids = pts[:, :, None, :] + w[None, None, :, None] * (nxt - pts)[:, :, None, :]
        pts = np.concatenate([pts, mids.reshape(len(t), -1, 2)], axis=1)
    b = sweep_bounds_unchecked(kappa, v * dT, params)
    x, y = pts[..., 0], pts[..., 1]
    exc = np.max(
        np.stack([b.x_min - x, x - b.x_max, b.y_min - y, y - b.y_max]), axis=(0, 2)
    )  # per time sample
    i = int(np.argmax(exc))
    worst = float(exc[i])
    return CoverageReport(
        covered=worst <= tol,
        worst_violation=worst,
        sample_count=int(pts.shape[0] * pts.shape[1]),
        argmax_time=float(t[i]),
        tolerance=tol,
    )


def _validate(traj: Sequence[TimedState], params: VehicleParams) -> None:
    if len(traj) < 1:
        raise MalformedTrajectory("empty trajectory")
    times = np.array([ts.t for ts in traj])
    if np.any(np.diff(times) <= 0):
        raise MalformedTrajectory("time stamps must be strictly increasing")
    for k, ts in enumerate(traj):
        s = ts.state
        vals = s.as_array()
        if not np.all(np.isfinite(vals)):
            raise MalformedTrajectory(f"non-finite state at index {k}")
        if s.v < -STATE_TOL or s.v > params.v_max + STATE_TOL:
            raise MalformedTrajectory(f"speed {s.v} out of [0, {params.v_max}] at index {k}")
        if abs(s.phi) > params.phi_max + STATE_TOL:
            raise MalformedTrajectory(f"steering {s.phi} exceeds {params.phi_max} at index {k}")


def sample_trajectory(traj: Sequence[TimedState], params: VehicleParams, samples_per_interval: int):
    """Sub-sample each interval by arc propagation with the interval's held speed and steering.

    Returns ``(times, x, y, theta)`` flattened over intervals in time order;
    both interval endpoints are included.
    """
    if len(traj) == 1:
        s = traj[0].state
        return (np.array([traj[0].t]), np.array([s.x]), np.array([s.y]), np.array([s.theta]))
    arr = np.array([ts.state.as_array() for ts in traj[:-1]])
    t0 = np.array([ts.t for ts in traj[:-1]])
    dt = np.diff([ts.t for ts in traj])
    frac = np.linspace(0.0, 1.0, samples_per_interval + 1)
    tau = dt[:, None] * frac[None, :]
    kappa = np.tan(arr[:, 4]) / params.lw
    x, y, th = arc_step(
        arr[:, 0, None], arr[:, 1, None], arr[:, 2, None], kappa[:, None], arr[:, 3, None] * tau
    )
    return (t0[:, None] + tau).ravel(), x.ravel(), y.ravel(), th.ravel()


def trajectory_safety_check(
    traj: Sequence[TimedState],
    obstacles: Sequence[ConvexPolygon],
    params: VehicleParams,
    samples_per_interval: int = 200,
    prefilter: bool = True,
) -> SafetyReport:
    """Certify a piecewise-constant trajectory against static convex obstacles.

    Every interval is replayed with its start speed and steering held, the
    footprint is sampled ``samples_per_interval + 1`` times (endpoints
    inclusive) and each sample is tested with the separating-axis check.
    ``prefilter`` skips obstacles whose bounding box cannot beat the running
    minimum clearance; results are identical either way.
    """
    if samples_per_interval < 50:
        raise ValueError("samples_per_interval must be at least 50")
    _validate(traj, params)
    t, x, y, th = sample_trajectory(traj, params, samples_per_interval)
    fp = footprint_corners(x, y, th, params)  # (S, 4, 2)
    first_bad = math.inf
    best = math.inf
    if not obstacles:
        return SafetyReport(True, None, math.inf, samples_per_interval)

    lo = fp.min(axis=(0, 1))
    hi = fp.max(axis=(0, 1))
    order = []
    for j, ob in enumerate(obstacles):
        olo, ohi = ob.vertices.min(axis=0), ob.vertices.max(axis=0)
        gap = np.maximum(0.0, np.maximum(olo - hi, lo - ohi))
        order.append((float(np.hypot(*gap)), j))
    order.sort()
    for gap, j in order:
        if prefilter and gap > 0 and gap >= best:
            continue
        ov = obstacles[j].vertices
        hit = sat_overlap_batch(fp, ov)
        if hit.any():
            first_bad = min(first_bad, float(t[np.argmax(hit)]))
            best = 0.0
        else:
            best = min(best, float(clearance_batch(fp, ov).min()))
    safe = math.isinf(first_bad)
    return SafetyReport(safe, None if safe else first_bad, best, samples_per_interval)
