"""Convex-polygon primitives: vehicle footprints, embodied boxes, overlap and clearance.

Polygons are stored counter-clockwise. The scalar API (``ConvexPolygon`` and
friends) validates its inputs; the ``*_corners`` / ``*_batch`` helpers work on
raw ``(..., k, 2)`` arrays and are what the optimizer and the oracle call in
their inner loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

CONTACT_TOL = 1e-9


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and kinematic limits of the ego vehicle.

    ``lf`` is measured from the rear-axle midpoint to the front bumper,
    ``lr`` from the rear-axle midpoint to the rear bumper, ``lw`` is the
    wheelbase and ``lb`` the width.
    """

    lf: float
    lw: float
    lr: float
    lb: float
    a_min: float
    a_max: float
    v_max: float
    phi_max: float
    omega_max: float

    def __post_init__(self):
        checks = [
            ("lf > 0", self.lf > 0),
            ("lw > 0", self.lw > 0),
            ("lr > 0", self.lr > 0),
            ("lb > 0", self.lb > 0),
            ("a_min < 0 < a_max", self.a_min < 0 < self.a_max),
            ("v_max > 0", self.v_max > 0),
            ("0 < phi_max < pi/2", 0 < self.phi_max < math.pi / 2),
            ("omega_max > 0", self.omega_max > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"VehicleParams invariant violated: {name}")

    @property
    def kappa_max(self) -> float:
        return math.tan(self.phi_max) / self.lw

    def to_dict(self) -> dict[str, float]:
        return {
            "L_F": self.lf,
            "L_W": self.lw,
            "L_R": self.lr,
            "L_B": self.lb,
            "a_min": self.a_min,
            "a_max": self.a_max,
            "v_max": self.v_max,
            "phi_max": self.phi_max,
            "omega_max": self.omega_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        return cls(
            lf=float(d["L_F"]),
            lw=float(d["L_W"]),
            lr=float(d["L_R"]),
            lb=float(d["L_B"]),
            a_min=float(d["a_min"]),
            a_max=float(d["a_max"]),
            v_max=float(d["v_max"]),
            phi_max=float(d["phi_max"]),
            omega_max=float(d["omega_max"]),
        )


# Simulation vehicle and the small field-test platform.
TABLE_I = VehicleParams(
    lf=0.96, lw=2.80, lr=0.929, lb=1.942,
    a_min=-0.75, a_max=0.75, v_max=5.0, phi_max=0.7, omega_max=0.5,
)
TABLE_II = VehicleParams(
    lf=0.036, lw=0.143, lr=0.032, lb=0.191,
    a_min=-0.02, a_max=0.02, v_max=0.25, phi_max=0.38, omega_max=0.10,
)


def _cross2(ax, ay, bx, by):
    return ax * by - ay * bx


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices.

    ``labels`` optionally names each vertex by role (e.g. ``"A"`` for the
    front-left footprint corner); storage order is always CCW.
    """

    vertices: np.ndarray
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs an (n>=3, 2) vertex array")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        e = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(e[:, 0], e[:, 1]) <= 1e-9):
            raise ValueError("polygon has repeated vertices")
        turn = _cross2(e[:, 0], e[:, 1], np.roll(e[:, 0], -1), np.roll(e[:, 1], -1))
        if not np.all(turn > 0):
            raise ValueError("polygon must be strictly convex and counter-clockwise")
        if self.labels is not None and len(self.labels) != len(v):
            raise ValueError("one label per vertex")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], labels=None) -> "ConvexPolygon":
        """Build from points in either winding; clockwise input is reversed."""
        v = np.asarray(points, dtype=float)
        if signed_area(v) < 0:
            v = v[::-1]
            if labels is not None:
                labels = tuple(labels)[::-1]
        return cls(v, None if labels is None else tuple(labels))

    def __len__(self):
        return len(self.vertices)

    def named(self) -> dict[str, Point2]:
        if self.labels is None:
            raise ValueError("polygon carries no vertex labels")
        return {k: Point2(float(x), float(y)) for k, (x, y) in zip(self.labels, self.vertices)}

    def aabb(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def translated(self, dx: float, dy: float) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.array([dx, dy]), self.labels)


def signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_area(poly: ConvexPolygon) -> float:
    """Shoelace area of a CCW polygon."""
    return signed_area(poly.vertices)


# --- footprint and embodied-box corners --------------------------------------

def box_corners(x, y, theta, front, rear, left, right):
    """Corners of a heading-aligned rectangle around the rear-axle point.

    All arguments broadcast. Returns ``(..., 4, 2)`` in role order
    A (front-left), B (front-right), C (rear-right), D (rear-left).
    """
    x, y, theta, front, rear, left, right = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x, y, theta, front, rear, left, right))
    )
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(x.shape + (4, 2))
    out[..., 0, 0] = x + front * c - left * s
    out[..., 0, 1] = y + front * s + left * c
    out[..., 1, 0] = x + front * c + right * s
    out[..., 1, 1] = y + front * s - right * c
    out[..., 2, 0] = x - rear * c + right * s
    out[..., 2, 1] = y - rear * s - right * c
    out[..., 3, 0] = x - rear * c - left * s
    out[..., 3, 1] = y - rear * s + left * c
    return out


def footprint_corners(x, y, theta, params: VehicleParams, margin: float = 0.0):
    """Footprint corners in role order A, B, C, D (clockwise); see ``box_corners``."""
    hw = 0.5 * params.lb + margin
    return box_corners(x, y, theta, params.lf + margin, params.lr + margin, hw, hw)


def embodied_corners(x, y, theta, params: VehicleParams, e_left, e_right, e_up, e_down=0.0):
    hw = 0.5 * params.lb
    return box_corners(
        x, y, theta, params.lf + e_up, params.lr + e_down, hw + e_left, hw + e_right
    )


# Role order A,B,C,D is clockwise; this permutation stores it CCW starting at A.
CCW_ORDER = (0, 3, 2, 1)
CCW_LABELS = ("A", "D", "C", "B")


def _rect_polygon(corners: np.ndarray, primed: bool) -> ConvexPolygon:
    labels = tuple(lab + "'" for lab in CCW_LABELS) if primed else CCW_LABELS
    return ConvexPolygon(corners[list(CCW_ORDER)], labels)


def footprint_vertices(pose: Sequence[float], params: VehicleParams) -> ConvexPolygon:
    """Vehicle rectangle ABCD for a rear-axle pose ``(x, y, theta)``."""
    x, y, theta = pose
    return _rect_polygon(footprint_corners(x, y, theta, params), primed=False)


def embodied_vertices(pose: Sequence[float], params: VehicleParams, ext) -> ConvexPolygon:
    """Footprint enlarged by ``ext`` (a ``BoxExtents``) on each side: A'B'C'D'."""
    if min(ext.e_left, ext.e_right, ext.e_up, ext.e_down) < 0:
        raise ValueError("box extents must be non-negative")
    x, y, theta = pose
    c = embodied_corners(x, y, theta, params, ext.e_left, ext.e_right, ext.e_up, ext.e_down)
    return _rect_polygon(c, primed=True)


# --- triangle-area containment ------------------------------------------------

def triangle_area_margin(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Sum of the triangle areas each point forms with the polygon edges, minus the area.

    ``points`` is ``(..., 2)`` and ``poly`` a CCW ``(..., m, 2)`` vertex array
    (batch dims broadcast against the point's). Zero inside or on the
    boundary, strictly positive outside.
    """
    p = np.asarray(points, dtype=float)[..., None, :]
    a = np.asarray(poly, dtype=float)
    b = np.roll(a, -1, axis=-2)
    ex, ey = b[..., 0] - a[..., 0], b[..., 1] - a[..., 1]
    tri = np.abs(_cross2(ex, ey, p[..., 0] - a[..., 0], p[..., 1] - a[..., 1]))
    area2 = np.sum(_cross2(a[..., 0], a[..., 1], b[..., 0], b[..., 1]), axis=-1)
    return 0.5 * (np.sum(tri, axis=-1) - area2)


def penetration_depth(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to the boundary when inside the CCW polygon, else 0.

    Broadcasts like ``triangle_area_margin``.
    """
    p = np.asarray(points, dtype=float)[..., None, :]
    a = np.asarray(poly, dtype=float)
    b = np.roll(a, -1, axis=-2)
    ex, ey = b[..., 0] - a[..., 0], b[..., 1] - a[..., 1]
    ln = np.hypot(ex, ey)
    # outward normal of a CCW edge is (ey, -ex) / |e|
    out = (ey * (p[..., 0] - a[..., 0]) - ex * (p[..., 1] - a[..., 1])) / ln
    return np.maximum(0.0, -np.max(out, axis=-1))


def point_outside_margin(p: Sequence[float], poly: ConvexPolygon) -> float:
    """Triangle-area margin of ``p`` w.r.t. ``poly`` in m^2; > 0 iff strictly outside."""
    return float(triangle_area_margin(np.asarray(p, dtype=float), poly.vertices))


# --- separating axis test ------------------------------------------------------

def _edge_normals(poly: np.ndarray) -> np.ndarray:
    e = np.roll(poly, -1, axis=-2) - poly
    n = np.stack([e[..., 1], -e[..., 0]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def sat_overlap_batch(polys: np.ndarray, other: np.ndarray, tol: float = CONTACT_TOL) -> np.ndarray:
    """Interior overlap of each polygon in ``polys`` (K, k, 2) with ``other`` (m, 2).

    Projections separated by less than ``tol`` (touching) count as disjoint.
    """
    polys = np.asarray(polys, dtype=float)
    other = np.asarray(other, dtype=float)
    axes = np.concatenate(
        [_edge_normals(polys), np.broadcast_to(_edge_normals(other), polys.shape[:-2] + other.shape)],
        axis=-2,
    )  # (K, k+m, 2)
    pa = np.einsum("...ad,...vd->...av", axes, polys)
    pb = np.einsum("...ad,vd->...av", axes, other)
    separated = (pa.max(-1) <= pb.min(-1) + tol) | (pb.max(-1) <= pa.min(-1) + tol)
    return ~np.any(separated, axis=-1)


def convex_overlap_sat(a: ConvexPolygon, b: ConvexPolygon, tol: float = CONTACT_TOL) -> bool:
    """True iff the interiors of two convex polygons intersect."""
    return bool(sat_overlap_batch(a.vertices[None], b.vertices, tol)[0])


# --- distances -----------------------------------------------------------------

def _point_segment_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.einsum("...d,...d->...", p - a, ab) / np.maximum(np.einsum("...d,...d->...", ab, ab), 1e-300)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[..., None] * ab
    return np.linalg.norm(p - q, axis=-1)


def clearance_batch(polys: np.ndarray, other: np.ndarray, tol: float = CONTACT_TOL) -> np.ndarray:
    """Boundary distance between each of ``polys`` (K, k, 2) and ``other`` (m, 2); 0 if overlapping."""
    polys = np.asarray(polys, dtype=float)
    other = np.asarray(other, dtype=float)
    oa, ob = other, np.roll(other, -1, axis=0)
    pa, pb = polys, np.roll(polys, -1, axis=-2)
    # vertices of polys vs edges of other: (K, k, m)
    d1 = _point_segment_dist(polys[..., :, None, :], oa[None, None], ob[None, None])
    # vertices of other vs edges of polys: (K, m, k)
    d2 = _point_segment_dist(other[None, :, None, :], pa[..., None, :, :], pb[..., None, :, :])
    d = np.minimum(d1.min(axis=(-1, -2)), d2.min(axis=(-1, -2)))
    return np.where(sat_overlap_batch(polys, other, tol), 0.0, d)


def clearance(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Minimum boundary distance between two convex polygons; 0 when they overlap."""
    return float(clearance_batch(a.vertices[None], b.vertices)[0])


def rectangle(x0: float, y0: float, x1: float, y1: float) -> ConvexPolygon:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""
    return ConvexPolygon(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))


def inflate_polygon(poly: ConvexPolygon, margin: float) -> ConvexPolygon:
    """Offset each edge outward by ``margin`` (miter joins); identity for margin 0."""
    if margin == 0:
        return poly
    v = poly.vertices
    n = _edge_normals(v)  # outward for CCW polygons
    prev_n = np.roll(n, 1, axis=0)
    bis = n + prev_n
    cosh = np.einsum("ij,ij->i", bis / np.linalg.norm(bis, axis=1, keepdims=True), n)
    offset = bis / np.linalg.norm(bis, axis=1, keepdims=True) * (margin / cosh)[:, None]
    return ConvexPolygon(v + offset, poly.labels)
