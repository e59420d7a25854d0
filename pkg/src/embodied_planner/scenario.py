"""Planning tasks: JSON ingestion and validation.

Schema (``format_version`` 1), all quantities SI::

    {
      "format_version": 1,
      "name": "corridor",
      "workspace": {"x_min": 0, "x_max": 30, "y_min": 0, "y_max": 10},
      "obstacles": [{"vertices": [[x, y], ...], "margin": 0.0}, ...],
      "start": {"x": .., "y": .., "theta": .., "v": 0, "phi": 0},
      "goal":  {"x": .., "y": .., "theta": .., "v": 0, "phi": 0},
      "vehicle": "table_i" | {"L_F": .., "L_W": .., ...},
      "lambda": 0.75,
      "dT_max": 1.0,
      "solver": {"feas_tol": 1e-4, ...},
      "seed": 0,
      "probe": {...}            # optional, passed through untouched
    }

Obstacle vertices may be given in either winding; they are stored CCW.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .al_solver import SolverOptions
from .embodied_box import check_vehicle_admissible
from .errors import ParseError, ValidationError
from .geometry import (
    TABLE_I,
    TABLE_II,
    ConvexPolygon,
    VehicleParams,
    clearance_batch,
    footprint_corners,
    inflate_polygon,
)
from .kinematics import State

FORMAT_VERSION = 1
DEFAULT_LAMBDA = 0.75
DEFAULT_DT_MAX = 1.0
VEHICLE_PRESETS = {"table_i": TABLE_I, "table_ii": TABLE_II}


@dataclass(frozen=True)
class Workspace:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> bool:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return bool(
            np.all(pts[:, 0] >= self.x_min - tol) and np.all(pts[:, 0] <= self.x_max + tol)
            and np.all(pts[:, 1] >= self.y_min - tol) and np.all(pts[:, 1] <= self.y_max + tol)
        )

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min, "y_max": self.y_max}


@dataclass(frozen=True)
class Scenario:
    name: str
    workspace: Workspace
    obstacles: tuple[ConvexPolygon, ...]
    start: State
    goal: State
    vehicle: VehicleParams
    lam: float = DEFAULT_LAMBDA
    dT_max: float = DEFAULT_DT_MAX
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0
    lambda_defaulted: bool = False
    probe: dict | None = field(default=None, compare=False)

    def with_poses(self, start: State, goal: State) -> "Scenario":
        return replace(self, start=start, goal=goal)

    def with_lambda(self, lam: float) -> "Scenario":
        return replace(self, lam=lam, lambda_defaulted=False)

    def to_dict(self) -> dict:
        def st(s: State):
            return {"x": s.x, "y": s.y, "theta": s.theta, "v": s.v, "phi": s.phi}

        d = {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "workspace": self.workspace.to_dict(),
            "obstacles": [{"vertices": ob.vertices.tolist()} for ob in self.obstacles],
            "start": st(self.start),
            "goal": st(self.goal),
            "vehicle": self.vehicle.to_dict(),
            "lambda": self.lam,
            "dT_max": self.dT_max,
            "solver": self.solver.to_dict(),
            "seed": self.seed,
        }
        if self.probe is not None:
            d["probe"] = self.probe
        return d


def _num(d: dict, key: str, where: str, default=None) -> float:
    if key not in d:
        if default is not None:
            return float(default)
        raise ValidationError(f"{where}.{key} is required", None)
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise ValidationError(f"{where}.{key} must be a finite number", val)
    return float(val)


def _state(d, where: str) -> State:
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be an object", d)
    return State(
        _num(d, "x", where), _num(d, "y", where), _num(d, "theta", where),
        _num(d, "v", where, 0.0), _num(d, "phi", where, 0.0),
    )


def _vehicle(raw) -> VehicleParams:
    if raw is None:
        return TABLE_I
    if isinstance(raw, str):
        if raw.lower() not in VEHICLE_PRESETS:
            raise ValidationError("vehicle preset must be one of " + ", ".join(VEHICLE_PRESETS), raw)
        return VEHICLE_PRESETS[raw.lower()]
    if not isinstance(raw, dict):
        raise ValidationError("vehicle must be a preset name or an object", raw)
    base = TABLE_I.to_dict()
    base.update(raw)
    for k in base:
        _num(base, k, "vehicle")
    try:
        return VehicleParams.from_dict(base)
    except ValueError as exc:
        raise ValidationError("vehicle parameters", raw, str(exc)) from None


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    ver = doc.get("format_version", FORMAT_VERSION)
    if ver != FORMAT_VERSION:
        raise ValidationError("format_version must be 1", ver)

    ws_raw = doc.get("workspace")
    if not isinstance(ws_raw, dict):
        raise ValidationError("workspace must be an object", ws_raw)
    ws = Workspace(*(_num(ws_raw, k, "workspace") for k in ("x_min", "x_max", "y_min", "y_max")))
    if not (ws.x_min < ws.x_max and ws.y_min < ws.y_max):
        raise ValidationError("workspace must have x_min < x_max and y_min < y_max", ws_raw)

    obstacles = []
    for j, ob in enumerate(doc.get("obstacles", [])):
        verts = ob.get("vertices") if isinstance(ob, dict) else ob
        try:
            poly = ConvexPolygon.from_points(verts)
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"obstacles[{j}] must be a strictly convex polygon", verts, str(exc)) from None
        margin = float(ob.get("margin", 0.0)) if isinstance(ob, dict) else 0.0
        if margin < 0:
            raise ValidationError(f"obstacles[{j}].margin must be non-negative", margin)
        obstacles.append(inflate_polygon(poly, margin))

    vehicle = _vehicle(doc.get("vehicle"))
    lam_defaulted = "lambda" not in doc
    lam = DEFAULT_LAMBDA if lam_defaulted else _num(doc, "lambda", "scenario")
    dT_max = _num(doc, "dT_max", "scenario", DEFAULT_DT_MAX)
    try:
        solver = SolverOptions.from_dict(doc.get("solver"))
    except (TypeError, ValueError) as exc:
        raise ValidationError("solver options", doc.get("solver"), str(exc)) from None
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ValidationError("seed must be a non-negative integer", seed)

    sc = Scenario(
        name=str(doc.get("name", "unnamed")),
        workspace=ws,
        obstacles=tuple(obstacles),
        start=_state(doc.get("start"), "start"),
        goal=_state(doc.get("goal"), "goal"),
        vehicle=vehicle,
        lam=lam,
        dT_max=dT_max,
        solver=solver,
        seed=seed,
        lambda_defaulted=lam_defaulted,
        probe=doc.get("probe"),
    )
    validate_scenario(sc)
    return sc


def pose_clearance(sc: Scenario, pose) -> float:
    """Distance from the footprint at ``pose`` to the nearest obstacle (inf without obstacles)."""
    fp = footprint_corners(pose[0], pose[1], pose[2], sc.vehicle)[None]
    best = math.inf
    for ob in sc.obstacles:
        best = min(best, float(clearance_batch(fp, ob.vertices)[0]))
    return best


def validate_scenario(sc: Scenario) -> None:
    """Check every scenario invariant; raises ``ValidationError`` naming the first failure."""
    p = sc.vehicle
    if not check_vehicle_admissible(p):
        raise ValidationError(
            "admissibility 2*L_W > L_B*tan(phi_max)",
            {"2*L_W": 2 * p.lw, "L_B*tan(phi_max)": p.lb * math.tan(p.phi_max)},
        )
    if not 0 < sc.lam < 1:
        raise ValidationError("lambda must lie in (0, 1)", sc.lam)
    if not sc.dT_max > 0:
        raise ValidationError("dT_max must be positive", sc.dT_max)
    for tag, s in (("start", sc.start), ("goal", sc.goal)):
        if not 0 <= s.v <= p.v_max:
            raise ValidationError(f"{tag}.v must lie in [0, v_max]", s.v)
        if abs(s.phi) > p.phi_max:
            raise ValidationError(f"{tag}.phi must satisfy |phi| <= phi_max", s.phi)
        fp = footprint_corners(s.x, s.y, s.theta, p)
        if not sc.workspace.contains(fp):
            raise ValidationError(f"{tag} footprint must lie inside the workspace", s.pose)
        if pose_clearance(sc, s.pose) <= 0:
            raise ValidationError(f"{tag} footprint must be collision-free", s.pose)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return scenario_from_dict(doc)


def fixture_dir() -> Path:
    """Directory of the scenario files shipped with the package."""
    return Path(__file__).resolve().parent / "scenarios"


def fixture_paths() -> list[Path]:
    return sorted(fixture_dir().glob("*.json"))
