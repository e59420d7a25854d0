"""Transcription of the planning task into a finite-dimensional NLP.

Decision vector layout (``N`` = number of intervals)::

    [x_0, y_0, theta_0, v_0, phi_0,  x_1, ...,  phi_N,  dT_0, ..., dT_{N-1}]

Node ``i`` component ``j`` sits at ``5 * i + j``. The embodied transcription
has one duration per interval; the naive one a single shared duration.

Within each interval speed and steering are held at their node values, so the
pose advances along an exact circular arc. In embodied mode the footprint at
each interval start is enlarged to the box covering that interval's sweep;
the validity conditions of the box are imposed alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .embodied_box import check_vehicle_admissible, extents_arrays
from .errors import DimensionMismatch, ScenarioRejected
from .geometry import CCW_ORDER, box_corners, penetration_depth, triangle_area_margin
from .kinematics import State, TimedState, arc_step

EMBODIED = "embodied"
NAIVE = "naive"
MODES = (EMBODIED, NAIVE)
NODE_DIM = 5
TAN_CLAMP = 1.55  # keeps tan() finite where the turn-angle condition already fails
NAIVE_DT_HEADROOM = 2.0  # a shared step may need to exceed the guess's when N is small


@dataclass(frozen=True)
class NlpOptions:
    collision_margin: float = 1e-2
    depth_weight: float = 1.0
    dT_floor: float = 1e-3
    dT_ceiling: float | None = None
    euler: bool = False
    fd_step: float = 1e-6


@dataclass(frozen=True)
class ConstraintValue:
    name: str
    kind: str  # "eq" or "ineq"
    value: float


@dataclass(frozen=True)
class _Group:
    tag: str
    fun: object
    per: str  # "interval" or "point"
    nodes: np.ndarray  # interval index or node index per row


@dataclass
class NlpProblem:
    """Immutable-after-build transcription; implements the solver evaluation contract."""

    mode: str
    n_fe: int
    scenario: object
    opts: NlpOptions
    z_start: np.ndarray
    z_goal: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    obstacles: tuple
    _eq_groups: list = field(default_factory=list, repr=False)
    _in_groups: list = field(default_factory=list, repr=False)
    _rate_matrix: object = field(default=None, repr=False)
    _colors: list = field(default_factory=list, repr=False)

    # --- layout -----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return self.n_fe + 1

    @property
    def n_dt(self) -> int:
        return self.n_fe if self.mode == EMBODIED else 1

    @property
    def n(self) -> int:
        return NODE_DIM * self.n_nodes + self.n_dt

    def index(self, node: int, comp: str) -> int:
        return NODE_DIM * node + "x y theta v phi".split().index(comp)

    def dt_index(self, interval: int) -> int:
        base = NODE_DIM * self.n_nodes
        return base + (interval if self.mode == EMBODIED else 0)

    def split(self, xvec):
        xvec = np.asarray(xvec, dtype=float)
        if xvec.shape != (self.n,):
            raise DimensionMismatch(f"vector of shape {xvec.shape}, layout needs ({self.n},)")
        z = xvec[: NODE_DIM * self.n_nodes].reshape(self.n_nodes, NODE_DIM)
        d = xvec[NODE_DIM * self.n_nodes:]
        if self.mode == NAIVE:
            d = np.full(self.n_fe, d[0])
        return z, d

    # --- evaluation contract ------------------------------------------------

    def cost(self, xvec) -> float:
        _, d = self.split(xvec)
        return float(np.sum(d))

    def cost_grad(self, xvec) -> np.ndarray:
        self.split(xvec)
        g = np.zeros(self.n)
        g[NODE_DIM * self.n_nodes:] = 1.0 if self.mode == EMBODIED else float(self.n_fe)
        return g

    def _eval_groups(self, groups, z, d):
        if not groups:
            return np.zeros(z.shape[:-2] + (0,))
        return np.concatenate([g.fun(z, d) for g in groups], axis=-1)

    def constraints(self, xvec):
        """``(c_eq, c_in)`` handed to the solver; variable bounds are not repeated here."""
        z, d = self.split(xvec)
        ceq = self._eval_groups(self._eq_groups, z, d)
        cin_nl = self._eval_groups(self._in_groups, z, d)
        cin = np.concatenate([self._rate_matrix @ np.asarray(xvec, float), cin_nl])
        return ceq, cin

    def jacobian(self, xvec):
        """Sparse ``(J_eq, J_in)`` by colored central differences; rate rows are exact."""
        xvec = np.asarray(xvec, dtype=float)
        self.split(xvec)
        h = self.opts.fd_step * np.maximum(1.0, np.abs(xvec))
        jeq = self._fd_block(self._eq_groups, xvec, h)
        jin_nl = self._fd_block(self._in_groups, xvec, h)
        jin = sp.vstack([self._rate_matrix, jin_nl], format="csr")
        return jeq, jin

    def _split_batch(self, xb):
        nz = NODE_DIM * self.n_nodes
        z = xb[:, :nz].reshape(len(xb), self.n_nodes, NODE_DIM)
        d = xb[:, nz:]
        if self.mode == NAIVE:
            d = np.repeat(d, self.n_fe, axis=1)
        return z, d

    def _fd_block(self, groups, xvec, h):
        m = sum(len(g.nodes) for g in groups)
        if m == 0:
            return sp.csr_matrix((0, self.n))
        maps = self._color_maps(groups)
        n_col = len(maps)
        xb = np.repeat(xvec[None], 2 * n_col, axis=0)
        for c, (perturb_idx, _, _) in enumerate(maps):
            xb[2 * c, perturb_idx] += h[perturb_idx]
            xb[2 * c + 1, perturb_idx] -= h[perturb_idx]
        vals = self._eval_groups(groups, *self._split_batch(xb))
        rows_all, cols_all, vals_all = [], [], []
        for c, (_, row_idx, col_idx) in enumerate(maps):
            rows_all.append(row_idx)
            cols_all.append(col_idx)
            vals_all.append((vals[2 * c, row_idx] - vals[2 * c + 1, row_idx]) / (2.0 * h[col_idx]))
        return sp.csr_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(m, self.n),
        )

    def _color_maps(self, groups):
        key = id(groups)
        for k, maps in self._colors:
            if k == key:
                return maps
        per = np.concatenate([np.full(len(g.nodes), g.per == "interval") for g in groups])
        node = np.concatenate([g.nodes for g in groups]).astype(int)
        rows = np.arange(len(node))
        maps = []
        nodes = np.arange(self.n_nodes)
        for j in range(NODE_DIM):
            for parity in (0, 1):
                perturb = NODE_DIM * nodes[nodes % 2 == parity] + j
                hit_node = np.where(per, np.where(node % 2 == parity, node, node + 1), node)
                ok = np.where(per, True, node % 2 == parity)
                maps.append((perturb, rows[ok], NODE_DIM * hit_node[ok] + j))
        base = NODE_DIM * self.n_nodes
        if self.mode == EMBODIED:
            perturb = base + np.arange(self.n_fe)
            maps.append((perturb, rows[per], base + node[per]))
        else:
            maps.append((np.array([base]), rows[per], np.full(int(per.sum()), base)))
        self._colors.append((key, maps))
        return maps

    # --- reporting ------------------------------------------------------------

    def stats(self) -> dict:
        counts = {}
        for g in self._eq_groups + self._in_groups:
            counts[g.tag] = counts.get(g.tag, 0) + len(g.nodes)
        n_rate = self._rate_matrix.shape[0]
        counts["rate_limits"] = n_rate
        return {
            "mode": self.mode,
            "n_fe": self.n_fe,
            "n_variables": self.n,
            "n_equalities": sum(len(g.nodes) for g in self._eq_groups),
            "n_inequalities": n_rate + sum(len(g.nodes) for g in self._in_groups),
            "per_tag": counts,
        }

    def tag_counts(self) -> dict:
        return self.stats()["per_tag"]


# --- constraint groups -------------------------------------------------------

# Group functions take z of shape (..., N + 1, 5) and d of shape (..., N) and
# return (..., rows); the leading batch axis lets every finite-difference
# perturbation be evaluated in one call.

def _flat(parts):
    out = np.stack(parts, axis=-1)
    return out.reshape(out.shape[:-2] + (-1,))


def _arc_residual(p, z, d):
    a, b = z[..., :-1, :], z[..., 1:, :]
    kappa = np.tan(a[..., 4]) / p.lw
    x, y, th = arc_step(a[..., 0], a[..., 1], a[..., 2], kappa, a[..., 3] * d)
    return _flat([b[..., 0] - x, b[..., 1] - y, b[..., 2] - th])


def _euler_residual(p, z, d):
    a, b = z[..., :-1, :], z[..., 1:, :]
    v, th = a[..., 3], a[..., 2]
    return _flat([
        b[..., 0] - a[..., 0] - v * np.cos(th) * d,
        b[..., 1] - a[..., 1] - v * np.sin(th) * d,
        b[..., 2] - th - v * np.tan(a[..., 4]) / p.lw * d,
    ])


def _prereq_rows(p, z, d):
    a = z[..., :-1, :]
    k = np.abs(np.tan(a[..., 4]) / p.lw)
    turn = k * a[..., 3] * d
    tc = np.tan(np.minimum(turn, TAN_CLAMP))
    hb = 0.5 * p.lb * k
    return _flat([
        turn - 0.5 * math.pi,
        k * p.lf * tc - (1.0 + hb),
        (1.0 + hb) * tc - p.lr * k,
    ])


def outside_rows(eps, w, points, polys):
    """``eps - margin + w * depth``: the triangle-area test plus a penetration term.

    The depth term vanishes outside, so the feasible set is exactly the
    triangle-area one; inside it supplies the gradient the flat area sum lacks.
    """
    return eps - triangle_area_margin(points, polys) + w * penetration_depth(points, polys)


def _group_obstacles(obstacles):
    """Stack obstacles with equal vertex counts: list of (G, m, 2) arrays in first-seen order."""
    groups: dict[int, list] = {}
    for o in obstacles:
        groups.setdefault(len(o), []).append(o)
    return [np.stack(v) for v in groups.values()]


def _pair_rows(eps, w, boxes, stacks):
    """Rows for boxes ``(..., K, 4, 2)`` (CCW) against every obstacle.

    Per box and obstacle: the 4 box vertices against the obstacle, then the
    obstacle's vertices against the box.
    """
    parts = []
    for ob in stacks:  # (G, m, 2)
        box_in_obs = outside_rows(eps, w, boxes[..., None, :, :], ob[:, None])  # (..., K, G, 4)
        obs_in_box = outside_rows(eps, w, ob, boxes[..., None, None, :, :])  # (..., K, G, m)
        blk = np.concatenate([box_in_obs, obs_in_box], axis=-1)
        parts.append(blk.reshape(blk.shape[:-2] + (-1,)))
    out = np.concatenate(parts, axis=-1)
    return out.reshape(out.shape[:-2] + (-1,))


def _box_rows(p, stacks, eps, w, z, d):
    a = z[..., :-1, :]
    kappa = np.tan(a[..., 4]) / p.lw
    el, er, eu = extents_arrays(kappa, a[..., 3] * d, p)
    hw = 0.5 * p.lb
    c = box_corners(a[..., 0], a[..., 1], a[..., 2], p.lf + eu, p.lr, hw + el, hw + er)
    return _pair_rows(eps, w, c[..., list(CCW_ORDER), :], stacks)


def _footprint_rows(p, stacks, eps, w, z, which):
    q = z[..., which, :]
    hw = 0.5 * p.lb
    c = box_corners(q[..., 0], q[..., 1], q[..., 2], p.lf, p.lr, hw, hw)
    return _pair_rows(eps, w, c[..., list(CCW_ORDER), :], stacks)


def _rate_matrix(n_fe, n, mode, p):
    """Linear rate rows: accel upper/lower then steering-rate upper/lower."""
    rows, cols, vals = [], [], []
    base = NODE_DIM * (n_fe + 1)
    r = 0
    for comp, hi, lo in ((3, p.a_max, p.a_min), (4, p.omega_max, -p.omega_max)):
        for sign, lim in ((1.0, hi), (-1.0, lo)):
            for i in range(n_fe):
                dcol = base + (i if mode == EMBODIED else 0)
                # sign * (q_{i+1} - q_i) - sign * lim * dT <= 0
                rows += [r, r, r]
                cols += [NODE_DIM * (i + 1) + comp, NODE_DIM * i + comp, dcol]
                vals += [sign, -sign, -sign * lim]
                r += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, n))


RATE_TAGS = ("accel_upper", "accel_lower", "steer_rate_upper", "steer_rate_lower")


# --- build / encode / decode ------------------------------------------------------

def build_nlp(scenario, guess, mode: str = EMBODIED, opts: NlpOptions | None = None) -> NlpProblem:
    """Transcribe ``scenario`` with ``N = guess.n_fe`` intervals."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    opts = opts or NlpOptions()
    p = scenario.vehicle
    if not check_vehicle_admissible(p):
        raise ScenarioRejected("vehicle violates 2*L_W > L_B*tan(phi_max)")
    n_fe = guess.n_fe
    if n_fe < 1:
        raise ValueError("guess needs at least two waypoints")
    wps = guess.waypoints
    z_start = scenario.start.as_array()
    z_goal = scenario.goal.as_array()
    th_end = wps[-1].state.theta
    z_goal[2] += 2.0 * math.pi * round((th_end - z_goal[2]) / (2.0 * math.pi))

    n_nodes = n_fe + 1
    n = NODE_DIM * n_nodes + (n_fe if mode == EMBODIED else 1)
    ws = scenario.workspace
    node_lo = np.array([ws.x_min, ws.y_min, -np.inf, 0.0, -p.phi_max])
    node_hi = np.array([ws.x_max, ws.y_max, np.inf, p.v_max, p.phi_max])
    lower = np.tile(node_lo, n_nodes)
    upper = np.tile(node_hi, n_nodes)
    lower[:NODE_DIM] = upper[:NODE_DIM] = z_start
    lower[-NODE_DIM:] = upper[-NODE_DIM:] = z_goal
    guess_dt = np.diff([w.t for w in wps])
    ceiling = opts.dT_ceiling
    if ceiling is None:
        if mode == EMBODIED:
            ceiling = max(scenario.dT_max, float(guess_dt.max()))
        else:
            ceiling = max(scenario.dT_max, NAIVE_DT_HEADROOM * guess.duration / n_fe)
    lower = np.concatenate([lower, np.full(n - NODE_DIM * n_nodes, opts.dT_floor)])
    upper = np.concatenate([upper, np.full(n - NODE_DIM * n_nodes, ceiling)])

    obstacles = tuple(np.asarray(o.vertices) for o in scenario.obstacles)
    stacks = _group_obstacles(obstacles)
    eps = opts.collision_margin
    w = opts.depth_weight
    intervals = np.arange(n_fe)
    dyn = _euler_residual if opts.euler else _arc_residual
    eq_groups = [_Group("dynamics", lambda z, d: dyn(p, z, d), "interval", np.repeat(intervals, 3))]
    in_groups = []
    per_obs = sum(4 + len(o) for o in obstacles)
    if mode == EMBODIED:
        in_groups.append(_Group("prereq", lambda z, d: _prereq_rows(p, z, d), "interval",
                                np.repeat(intervals, 3)))
        if obstacles:
            in_groups.append(_Group("collision", lambda z, d: _box_rows(p, stacks, eps, w, z, d),
                                    "interval", np.repeat(intervals, per_obs)))
            last = np.array([n_fe])
            in_groups.append(_Group("terminal_collision",
                                    lambda z, d: _footprint_rows(p, stacks, eps, w, z, last),
                                    "point", np.full(per_obs, n_fe)))
    elif obstacles:
        allq = np.arange(n_nodes)
        in_groups.append(_Group("collision", lambda z, d: _footprint_rows(p, stacks, eps, w, z, allq),
                                "point", np.repeat(allq, per_obs)))
    return NlpProblem(
        mode=mode, n_fe=n_fe, scenario=scenario, opts=opts,
        z_start=z_start, z_goal=z_goal, lower=lower, upper=upper, obstacles=obstacles,
        _eq_groups=eq_groups, _in_groups=in_groups,
        _rate_matrix=_rate_matrix(n_fe, n, mode, p),
    )


def encode(problem: NlpProblem, guess) -> np.ndarray:
    """Flatten a guess into the problem's layout (naive mode uses the mean duration)."""
    wps = guess.waypoints
    if len(wps) != problem.n_nodes:
        raise DimensionMismatch(f"guess has {len(wps)} waypoints, problem needs {problem.n_nodes}")
    z = np.array([w.state.as_array() for w in wps]).ravel()
    dt = np.diff([w.t for w in wps])
    if problem.mode == NAIVE:
        dt = np.array([wps[-1].t / problem.n_fe])
    return np.concatenate([z, dt])


def decode_solution(problem: NlpProblem, xvec) -> list[TimedState]:
    z, d = problem.split(xvec)
    t = np.concatenate([[0.0], np.cumsum(d)])
    return [TimedState(float(t[i]), State.from_array(z[i])) for i in range(problem.n_nodes)]


def eval_cost(problem: NlpProblem, xvec) -> float:
    return problem.cost(xvec)


def eval_constraints(problem: NlpProblem, xvec) -> list[ConstraintValue]:
    """Every constraint in a fixed order, bounds and boundary conditions included.

    Equalities report residuals; inequalities report ``g`` with ``g <= 0``
    meaning satisfied.
    """
    z, d = problem.split(xvec)
    xvec = np.asarray(xvec, dtype=float)
    p = problem.scenario.vehicle
    comps = ("x", "y", "theta", "v", "phi")
    out = []
    for tag, node, target in (("boundary_start", 0, problem.z_start), ("boundary_end", problem.n_fe, problem.z_goal)):
        for j, c in enumerate(comps):
            out.append(ConstraintValue(f"{tag}/{c}", "eq", float(z[node, j] - target[j])))
    for g in problem._eq_groups:
        vals = g.fun(z, d)
        for r, v in enumerate(vals):
            out.append(ConstraintValue(f"{g.tag}/{g.nodes[r]}/{comps[r % 3]}", "eq", float(v)))
    rates = problem._rate_matrix @ xvec
    for k, v in enumerate(rates):
        out.append(ConstraintValue(f"{RATE_TAGS[k // problem.n_fe]}/{k % problem.n_fe}", "ineq", float(v)))
    for i in range(problem.n_nodes):
        out.append(ConstraintValue(f"v_upper/{i}", "ineq", float(z[i, 3] - p.v_max)))
        out.append(ConstraintValue(f"v_lower/{i}", "ineq", float(-z[i, 3])))
        out.append(ConstraintValue(f"phi_upper/{i}", "ineq", float(z[i, 4] - p.phi_max)))
        out.append(ConstraintValue(f"phi_lower/{i}", "ineq", float(-z[i, 4] - p.phi_max)))
    dts = xvec[NODE_DIM * problem.n_nodes:]
    for i, v in enumerate(dts):
        out.append(ConstraintValue(f"dT_upper/{i}", "ineq", float(v - problem.upper[-1])))
        out.append(ConstraintValue(f"dT_lower/{i}", "ineq", float(problem.opts.dT_floor - v)))
    names = ("C23d", "C30b", "C31")
    for g in problem._in_groups:
        vals = g.fun(z, d)
        seen: dict[int, int] = {}
        for r, v in enumerate(vals):
            node = int(g.nodes[r])
            j = seen[node] = seen.get(node, -1) + 1
            # collision rows per node: obstacle-major, box vertices then obstacle vertices
            suffix = f"/{names[j]}" if g.tag == "prereq" else f"/{j}"
            out.append(ConstraintValue(f"{g.tag}/{node}{suffix}", "ineq", float(v)))
    return out


def max_violation(values: list[ConstraintValue]) -> float:
    worst = 0.0
    for c in values:
        worst = max(worst, abs(c.value) if c.kind == "eq" else c.value)
    return worst
