"""Coarse seed for the optimizer: grid search, velocity profile, and initial guess.

The stages run in order:

1. ``plan_coarse_path``: forward-only Hybrid A* over arc primitives with a
   Dubins analytic expansion toward the goal.
2. ``attach_velocity``: smooth the steering along arc length and attach a
   bang-bang speed profile under acceleration, speed and steering-rate limits.
3. ``resample_equidistant``: dense uniform-in-time resampling.
4. ``form_initial_guess``: greedy scan that keeps the longest segments whose
   held curvature and arc length satisfy the tightened validity conditions.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import dubins
from .embodied_box import prerequisite_slacks
from .errors import GuessDegenerate, InfeasibleProfile, NoPathFound
from .geometry import VehicleParams, footprint_corners, sat_overlap_batch
from .kinematics import State, TimedState, arc_step

GRID_XY = 0.2
GRID_THETA = math.pi / 18
PRIMITIVE_LENGTH = 0.5
SUBSAMPLE = 0.05
GOAL_TOL_XY = 0.2
GOAL_TOL_THETA = 0.1
DENSE_DT = 0.01
STEER_WINDOW = 1.0
TIME_TOL = 1e-12


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class CoarsePath:
    """Rear-axle poses every ``SUBSAMPLE`` metres of arc length.

    ``kappa[i]`` is the curvature driven from pose ``i`` to pose ``i + 1``;
    the last entry repeats the previous one.
    """

    poses: np.ndarray  # (n, 3)
    s: np.ndarray  # (n,)
    kappa: np.ndarray  # (n,)
    margin: float = 0.0
    expansions: int = 0

    def __len__(self):
        return len(self.s)

    @property
    def length(self) -> float:
        return float(self.s[-1])


@dataclass(frozen=True)
class CoarseTrajectory:
    """Dense waypoints ``t, x, y, theta, v, phi, kappa`` (one array each)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    kappa: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def state(self, i: int) -> State:
        return State(float(self.x[i]), float(self.y[i]), float(self.theta[i]),
                     float(self.v[i]), float(self.phi[i]))

    def timed_states(self) -> list[TimedState]:
        return [TimedState(float(self.t[i]), self.state(i)) for i in range(len(self))]


@dataclass(frozen=True)
class InitialGuess:
    waypoints: tuple[TimedState, ...]

    @property
    def n_fe(self) -> int:
        return len(self.waypoints) - 1

    @property
    def duration(self) -> float:
        return self.waypoints[-1].t


# --- Hybrid A* -------------------------------------------------------------------

class _Collider:
    """Footprint-vs-world test with obstacles pre-inflated by the search margin."""

    def __init__(self, scenario, margin: float):
        self.p = scenario.vehicle
        self.margin = margin
        self.ws = scenario.workspace
        self.obs = [ob.vertices for ob in scenario.obstacles]
        self.obs_lo = [o.min(axis=0) - margin for o in self.obs]
        self.obs_hi = [o.max(axis=0) + margin for o in self.obs]

    def free(self, x, y, th) -> bool:
        fp = footprint_corners(x, y, th, self.p)
        if not self.ws.contains(fp):
            return False
        if not self.obs:
            return True
        big = footprint_corners(x, y, th, self.p, self.margin) if self.margin else fp
        flat = big.reshape(-1, 2)
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        for o, olo, ohi in zip(self.obs, self.obs_lo, self.obs_hi):
            if np.any(lo > ohi) or np.any(olo > hi):
                continue
            if sat_overlap_batch(big, o).any():
                return False
        return True


def _primitive_table(params: VehicleParams):
    """Local sub-sample offsets for each steering value: list of (phi, dx, dy, dth)."""
    n = int(round(PRIMITIVE_LENGTH / SUBSAMPLE))
    ell = SUBSAMPLE * np.arange(1, n + 1)
    out = []
    for frac in (-1.0, -0.5, 0.0, 0.5, 1.0):
        phi = frac * params.phi_max
        k = math.tan(phi) / params.lw
        dx, dy, dth = arc_step(0.0, 0.0, 0.0, k, ell)
        out.append((phi, k, np.asarray(dx), np.asarray(dy), np.asarray(dth)))
    return out


def _apply(pose, dx, dy, dth):
    c, s = math.cos(pose[2]), math.sin(pose[2])
    return pose[0] + c * dx - s * dy, pose[1] + s * dx + c * dy, pose[2] + dth


def _dubins_samples(q0, q1, radius):
    """Sub-sampled poses and per-step curvature along the Dubins path (excluding q0)."""
    segs = dubins.shortest_path(q0, q1, radius)
    xs, ys, ths, ks = [], [], [], []
    x, y, th = q0
    for k, ln in segs:
        n = max(1, int(math.ceil(ln / SUBSAMPLE - 1e-9)))
        ell = ln * np.arange(1, n + 1) / n
        px, py, pth = arc_step(x, y, th, k, ell)
        xs.append(px)
        ys.append(py)
        ths.append(pth)
        ks.append(np.full(n, k))
        x, y, th = float(px[-1]), float(py[-1]), float(pth[-1])
    if not xs:
        return None
    return (np.concatenate(xs), np.concatenate(ys), np.concatenate(ths), np.concatenate(ks))


def _heuristic(pose, goal, radius, weight):
    return weight * max(math.hypot(goal[0] - pose[0], goal[1] - pose[1]),
                        dubins.path_length(pose, goal, radius))


def _search(scenario, margin, max_expansions, weight):
    p = scenario.vehicle
    col = _Collider(scenario, margin)
    start = scenario.start.pose
    goal = scenario.goal.pose
    radius = 1.0 / p.kappa_max
    prims = _primitive_table(p)
    n_theta = int(round(2 * math.pi / GRID_THETA))

    def key(pose):
        return (int(math.floor(pose[0] / GRID_XY)), int(math.floor(pose[1] / GRID_XY)),
                int(math.floor(_wrap(pose[2]) / GRID_THETA)) % n_theta)

    # node: (pose, parent index, phi index used, sub-sample arrays from parent)
    nodes = [(start, -1, 2, None)]
    g_cost = {key(start): 0.0}
    tie = itertools.count()
    heap = [(_heuristic(start, goal, radius, weight), next(tie), 0.0, 0)]
    closed = set()
    expansions = 0
    while heap:
        _, _, g, idx = heapq.heappop(heap)
        pose, _, last, _ = nodes[idx]
        kk = key(pose)
        if kk in closed:
            continue
        closed.add(kk)
        expansions += 1
        if expansions > max_expansions:
            break
        dist = math.hypot(goal[0] - pose[0], goal[1] - pose[1])
        if expansions % 5 == 1 or dist < 10.0:
            samp = _dubins_samples(pose, goal, radius)
            if samp is not None and col.free(*samp[:3]):
                return nodes, idx, samp, expansions
        if dist <= GOAL_TOL_XY and abs(_wrap(goal[2] - pose[2])) <= GOAL_TOL_THETA:
            return nodes, idx, None, expansions
        for j, (phi, k, dx, dy, dth) in enumerate(prims):
            xs, ys, ths = _apply(pose, dx, dy, dth)
            if not col.free(xs, ys, ths):
                continue
            new = (float(xs[-1]), float(ys[-1]), float(ths[-1]))
            nk = key(new)
            if nk in closed:
                continue
            cost = g + PRIMITIVE_LENGTH * (1.0 + 0.1 * abs(j - 2) / 2 + 0.1 * abs(j - last) / 2)
            if cost >= g_cost.get(nk, math.inf):
                continue
            g_cost[nk] = cost
            nodes.append((new, idx, j, (xs, ys, ths, np.full(len(xs), k))))
            heapq.heappush(heap, (cost + _heuristic(new, goal, radius, weight), next(tie), cost, len(nodes) - 1))
    return None, None, None, expansions


def plan_coarse_path(scenario, margins=(0.3, 0.1, 0.0), max_expansions: int = 60000,
                     weight: float = 1.5) -> CoarsePath:
    """Forward-only Hybrid A* from the scenario start to its goal.

    Obstacles are searched with the footprint inflated by each entry of
    ``margins`` in turn, the first success wins. Raises ``NoPathFound`` when
    every margin exhausts its expansion budget.
    """
    start = np.array(scenario.start.pose)
    goal = np.array(scenario.goal.pose)
    if np.allclose(start[:2], goal[:2], atol=1e-9) and abs(_wrap(goal[2] - start[2])) < 1e-9:
        return CoarsePath(start[None].copy(), np.zeros(1), np.zeros(1), margins[-1], 0)
    total = 0
    for margin in margins:
        nodes, idx, tail, expansions = _search(scenario, margin, max_expansions, weight)
        total += expansions
        if nodes is None:
            continue
        chunks = []
        if tail is not None:
            chunks.append(tail)
        while idx > 0:
            pose, parent, _, samp = nodes[idx]
            chunks.append(samp)
            idx = parent
        chunks.reverse()
        x0, y0, th0 = nodes[0][0]
        xs = np.concatenate([[x0]] + [c[0] for c in chunks])
        ys = np.concatenate([[y0]] + [c[1] for c in chunks])
        ths = np.concatenate([[th0]] + [c[2] for c in chunks])
        ks = np.concatenate([c[3] for c in chunks])
        kappa = np.append(ks, ks[-1])
        step = np.hypot(np.diff(xs), np.diff(ys))
        # arc length along the primitives, not the chord
        seg = np.where(np.abs(ks) > 1e-12,
                       np.abs(np.diff(ths)) / np.maximum(np.abs(ks), 1e-300), step)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return CoarsePath(np.stack([xs, ys, ths], axis=1), s, kappa, margin, total)
    raise NoPathFound(f"no path after {total} expansions over margins {tuple(margins)}")


def straight_path(length: float, pose=(0.0, 0.0, math.pi / 2), step: float = SUBSAMPLE) -> CoarsePath:
    """Straight path of the given length; mainly for profiles and tests."""
    n = max(1, int(math.ceil(length / step - 1e-12)))
    s = np.linspace(0.0, length, n + 1) if length > 0 else np.zeros(1)
    x = pose[0] + s * math.cos(pose[2])
    y = pose[1] + s * math.sin(pose[2])
    th = np.full_like(s, pose[2])
    return CoarsePath(np.stack([x, y, th], axis=1), s, np.zeros_like(s))


# --- velocity profile --------------------------------------------------------------

def _box_filter(vals: np.ndarray, s: np.ndarray, window: float, left: float, right: float) -> np.ndarray:
    """Moving average over arc length with constant padding at both ends."""
    if len(vals) < 2 or window <= 0:
        return vals.copy()
    ds = float(np.median(np.diff(s))) if len(s) > 1 else SUBSAMPLE
    half = max(1, int(round(0.5 * window / max(ds, 1e-9))))
    padded = np.concatenate([np.full(half, left), vals, np.full(half, right)])
    c = np.concatenate([[0.0], np.cumsum(padded)])
    w = 2 * half + 1
    return (c[w:] - c[:-w]) / w


def attach_velocity(
    path: CoarsePath,
    params: VehicleParams,
    v_init: float,
    v_end: float,
    phi_init: float | None = None,
    phi_end: float | None = None,
    window: float = STEER_WINDOW,
) -> CoarseTrajectory:
    """Time-optimal bang-bang speed along a smoothed copy of ``path``.

    Steering is smoothed with a moving average of ``window`` metres so the
    steering-rate limit can be honoured, then the poses are re-integrated
    along the smoothed curvature. The speed cap at each sample is
    ``min(v_max, omega_max / |dphi/ds|)``; a forward pass accelerates at
    ``a_max`` and a backward pass decelerates at ``|a_min|``.
    """
    for name, v in (("v_init", v_init), ("v_end", v_end)):
        if not 0 <= v <= params.v_max + 1e-12:
            raise InfeasibleProfile(f"{name}={v} outside [0, {params.v_max}]")
    n = len(path)
    if n == 1 or path.length <= 0:
        x, y, th = path.poses[0]
        phi0 = 0.0 if phi_init is None else phi_init
        if v_init > 0:
            raise InfeasibleProfile("cannot stop on a zero-length path")
        return CoarseTrajectory(*(np.array([q]) for q in (0.0, x, y, th, v_init, phi0, math.tan(phi0) / params.lw)))

    s = path.s
    ds = np.diff(s)
    phi_raw = np.arctan(path.kappa * params.lw)
    left = phi_raw[0] if phi_init is None else phi_init
    right = phi_raw[-1] if phi_end is None else phi_end
    phi = np.clip(_box_filter(phi_raw, s, window, left, right), -params.phi_max, params.phi_max)
    phi[0] = left
    phi[-1] = right
    kappa = np.tan(phi) / params.lw

    x = np.empty(n)
    y = np.empty(n)
    th = np.empty(n)
    x[0], y[0], th[0] = path.poses[0]
    for i in range(n - 1):
        x[i + 1], y[i + 1], th[i + 1] = arc_step(x[i], y[i], th[i], kappa[i], ds[i])

    cap = np.full(n, params.v_max)
    dphi = np.abs(np.diff(phi))
    seg_cap = np.where(dphi > 0, params.omega_max * ds / np.maximum(dphi, 1e-300), np.inf)
    cap[:-1] = np.minimum(cap[:-1], seg_cap)
    cap[1:] = np.minimum(cap[1:], seg_cap)

    v = np.minimum(cap, params.v_max)
    v[0] = v_init
    for i in range(n - 1):
        v[i + 1] = min(v[i + 1], math.sqrt(v[i] ** 2 + 2 * params.a_max * ds[i]))
    if v[-1] < v_end - 1e-9:
        raise InfeasibleProfile(f"cannot reach v_end={v_end} within the path")
    v[-1] = v_end
    for i in range(n - 2, -1, -1):
        v[i] = min(v[i], math.sqrt(v[i + 1] ** 2 - 2 * params.a_min * ds[i]))
    if v[0] < v_init - 1e-9:
        raise InfeasibleProfile(f"v_init={v_init} too high to respect the limits ahead")
    v[0] = v_init

    vsum = v[:-1] + v[1:]
    if np.any(vsum <= 0):
        raise InfeasibleProfile("profile stalls at zero speed")
    dt = 2.0 * ds / vsum
    t = np.concatenate([[0.0], np.cumsum(dt)])
    return CoarseTrajectory(t, x, y, th, v, phi, kappa)


# --- resampling and guess -------------------------------------------------------------

def resample_equidistant(coarse: CoarseTrajectory, dt: float = DENSE_DT) -> CoarseTrajectory:
    """Waypoints at ``0, dt, 2dt, ...`` plus the final time.

    Within each source segment the acceleration is constant, steering is held
    at the segment's first value and the pose follows the held-curvature arc.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = coarse.duration
    if len(coarse) == 1 or T <= 0:
        return coarse
    n = int(math.floor(T / dt + 1e-9))
    grid = dt * np.arange(n + 1)
    if T - grid[-1] > 1e-9:
        grid = np.append(grid, T)
    else:
        grid[-1] = T
    j = np.clip(np.searchsorted(coarse.t, grid, side="right") - 1, 0, len(coarse) - 2)
    tau = grid - coarse.t[j]
    seg_dt = coarse.t[j + 1] - coarse.t[j]
    acc = (coarse.v[j + 1] - coarse.v[j]) / seg_dt
    dist = coarse.v[j] * tau + 0.5 * acc * tau * tau
    x, y, th = arc_step(coarse.x[j], coarse.y[j], coarse.theta[j], coarse.kappa[j], dist)
    v = coarse.v[j] + acc * tau
    phi = coarse.phi[j].copy()
    kappa = coarse.kappa[j].copy()
    # last point: take the source end state exactly
    x[-1], y[-1], th[-1] = coarse.x[-1], coarse.y[-1], coarse.theta[-1]
    v[-1], phi[-1], kappa[-1] = coarse.v[-1], coarse.phi[-1], coarse.kappa[-1]
    return CoarseTrajectory(grid, x, y, th, v, phi, kappa)


def _segment_ok(coarse, a, ks, lam, dT_max, params, conservative):
    """Mask over candidates ``ks`` (> a): does segment a->k pass the scan test?"""
    elapsed = coarse.t[ks] - coarse.t[a]
    s = coarse.v[a] * elapsed
    if conservative:
        kap = np.maximum.accumulate(np.abs(coarse.kappa[a:ks[-1]]))[ks - a - 1]
    else:
        kap = np.full(len(ks), coarse.kappa[a])
    c1, c2, c3 = prerequisite_slacks(kap, s, params, lam)
    # tan() wraps once the turn passes pi/2; the first condition rules that out
    return (elapsed <= dT_max + TIME_TOL) & (c1 <= 0) & (c2 <= 0) & (c3 <= 0)


def form_initial_guess(
    coarse: CoarseTrajectory,
    lam: float,
    dT_max: float,
    params: VehicleParams,
    conservative: bool = False,
) -> InitialGuess:
    """Greedy scan keeping the last waypoint before the tightened test fails.

    From each anchor the scan advances until the candidate's elapsed time
    exceeds ``dT_max`` or the validity conditions at ``lam`` fail for the
    anchor's curvature (the largest curvature over the segment when
    ``conservative``) and arc length ``anchor speed * elapsed``. The final
    dense waypoint is always kept.
    """
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    if dT_max <= 0:
        raise ValueError("dT_max must be positive")
    n = len(coarse)
    keep = [0]
    a = 0
    dt_min = float(np.min(np.diff(coarse.t))) if n > 1 else dT_max
    chunk = max(2, int(math.ceil(dT_max / max(dt_min, 1e-9))) + 2)
    while a < n - 1:
        best = None
        lo = a + 1
        while lo < n:
            ks = np.arange(lo, min(n, lo + chunk))
            ok = _segment_ok(coarse, a, ks, lam, dT_max, params, conservative)
            bad = np.flatnonzero(~ok)
            if bad.size:
                if bad[0] > 0:
                    best = int(ks[bad[0] - 1])
                break
            best = int(ks[-1])
            lo = ks[-1] + 1
        if best is None:
            best = a + 1  # dense spacing should prevent this; keep moving
        keep.append(best)
        a = best
    wps = tuple(TimedState(float(coarse.t[i]), coarse.state(i)) for i in keep)
    if len(wps) < 3:
        raise GuessDegenerate(f"only {len(wps)} waypoints survive the scan")
    return InitialGuess(wps)


def equidistant_guess(coarse: CoarseTrajectory, n_fe: int) -> InitialGuess:
    """``n_fe + 1`` waypoints evenly spaced in time along ``coarse``."""
    if n_fe < 1:
        raise ValueError("n_fe must be at least 1")
    fine = resample_equidistant(coarse, coarse.duration / n_fe) if coarse.duration > 0 else coarse
    idx = np.round(np.linspace(0, len(fine) - 1, n_fe + 1)).astype(int)
    return InitialGuess(tuple(TimedState(float(fine.t[i]), fine.state(i)) for i in idx))
