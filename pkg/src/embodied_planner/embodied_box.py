"""Embodied-box enlargement buffers and their validity conditions.

Frame convention for the swept bounds: the vehicle starts at the normalized
pose (0, 0, pi/2), so "up" is the heading and "left" is negative x. Positive
curvature turns left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PrereqViolation
from .geometry import VehicleParams

KAPPA_ZERO = 1e-12
PREREQ_NAMES = ("C23d", "C30b", "C31")


@dataclass(frozen=True)
class BoxExtents:
    e_left: float
    e_right: float
    e_up: float
    e_down: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.e_left, self.e_right, self.e_up, self.e_down)


@dataclass(frozen=True)
class SweepBounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)


@dataclass(frozen=True)
class PrereqReport:
    ok: bool
    violated: frozenset[str]
    slacks: dict[str, float]


def check_vehicle_admissible(params: VehicleParams) -> bool:
    """Whether ``2 L_W > L_B tan(phi_max)``, i.e. the turning radius always exceeds half the width."""
    return 2.0 * params.lw > params.lb * math.tan(params.phi_max)


def prerequisite_slacks(kappa, s, params: VehicleParams, lam=1.0):
    """``lhs - rhs`` of the three validity conditions, vectorized.

    Returns a tuple ``(c23d, c30b, c31)``; each entry is <= 0 when the
    condition holds. ``lam`` scales the right-hand sides (``lam = 1`` is
    nominal, smaller values are stricter).
    """
    k = np.abs(np.asarray(kappa, dtype=float))
    k = np.where(k < KAPPA_ZERO, 0.0, k)
    turn = k * np.asarray(s, dtype=float)
    tan_turn = np.tan(turn)
    half_b = 0.5 * params.lb
    c23d = turn - lam * (math.pi / 2)
    c30b = k * params.lf * tan_turn - lam * (1.0 + half_b * k)
    c31 = (1.0 + half_b * k) * tan_turn - lam * params.lr * k
    return c23d, c30b, c31


def prerequisites(kappa: float, s: float, params: VehicleParams, lam: float = 1.0) -> PrereqReport:
    """Evaluate the validity conditions for one interval.

    At zero curvature every left-hand side is zero, so all three hold.
    """
    if s < 0:
        raise ValueError("arc length must be non-negative")
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    vals = [float(v) for v in prerequisite_slacks(kappa, s, params, lam)]
    # tan() wraps past pi/2; C23d already fails there, the others are flagged with it
    if vals[0] > 0:
        vals[1] = max(vals[1], vals[0])
        vals[2] = max(vals[2], vals[0])
    slacks = dict(zip(PREREQ_NAMES, vals))
    violated = frozenset(name for name, v in slacks.items() if v > 0)
    return PrereqReport(ok=not violated, violated=violated, slacks=slacks)


def extents_arrays(kappa, s, params: VehicleParams):
    """Unchecked ``(e_left, e_right, e_up)`` for arrays of curvature and arc length."""
    kappa = np.asarray(kappa, dtype=float)
    s = np.asarray(s, dtype=float)
    ks = kappa * s
    e_left = np.maximum(-params.lr * ks, (params.lf + 0.5 * s) * ks)
    e_right = np.maximum(params.lr * ks, -(params.lf + 0.5 * s) * ks)
    e_up = s + 0.5 * params.lb * np.abs(ks)
    return e_left, e_right, e_up


def _require(kappa: float, s: float, params: VehicleParams) -> None:
    rep = prerequisites(kappa, s, params, 1.0)
    if not rep.ok:
        raise PrereqViolation(kappa, s, rep.slacks)


def extents(kappa: float, s: float, params: VehicleParams) -> BoxExtents:
    """Buffers that enlarge the footprint to cover one interval's swept region.

    ``s`` is the arc length travelled in the interval (speed times duration).
    Raises ``PrereqViolation`` outside the validity envelope.
    """
    _require(kappa, s, params)
    el, er, eu = extents_arrays(kappa, s, params)
    return BoxExtents(float(el), float(er), float(eu), 0.0)


def sweep_bounds_unchecked(kappa: float, s: float, params: VehicleParams) -> SweepBounds:
    el, er, eu = (float(a) for a in extents_arrays(kappa, s, params))
    hw = 0.5 * params.lb
    return SweepBounds(x_min=-hw - el, x_max=hw + er, y_min=-params.lr, y_max=params.lf + eu)


def sweep_bounds(kappa: float, s: float, params: VehicleParams) -> SweepBounds:
    """Axis-aligned bounds of the swept region in the normalized frame."""
    _require(kappa, s, params)
    return sweep_bounds_unchecked(kappa, s, params)
