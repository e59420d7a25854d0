"""Single-track bicycle kinematics with speed and steering held constant per interval."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import VehicleParams

SERIES_KAPPA = 1e-6


@dataclass(frozen=True)
class State:
    x: float
    y: float
    theta: float
    v: float
    phi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.phi])

    @classmethod
    def from_array(cls, a) -> "State":
        return cls(*(float(t) for t in a))

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class Control:
    a: float
    omega: float


@dataclass(frozen=True)
class TimedState:
    t: float
    state: State

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time stamps are non-negative")


def curvature(phi, lw: float):
    """Signed path curvature ``tan(phi) / lw`` (1/m)."""
    return np.tan(phi) / lw if isinstance(phi, np.ndarray) else math.tan(phi) / lw


def arc_displacement(kappa, length):
    """Forward and leftward displacement after travelling ``length`` on an arc.

    Both are expressed in the start heading's frame. Uses half-angle forms so
    small curvature loses no precision; below ``SERIES_KAPPA`` a Taylor series
    replaces the ``1/kappa`` expressions.
    """
    kappa = np.asarray(kappa, dtype=float)
    length = np.asarray(length, dtype=float)
    turn = kappa * length
    small = np.abs(kappa) < SERIES_KAPPA
    k_safe = np.where(small, 1.0, kappa)
    fwd_exact = np.sin(turn) / k_safe
    lat_exact = 2.0 * np.sin(0.5 * turn) ** 2 / k_safe
    t2 = turn * turn
    fwd_series = length * (1.0 - t2 / 6.0)
    lat_series = length * turn * (0.5 - t2 / 24.0)
    return np.where(small, fwd_series, fwd_exact), np.where(small, lat_series, lat_exact), turn


def arc_step(x, y, theta, kappa, length):
    """Advance rear-axle poses by ``length`` along arcs of curvature ``kappa`` (broadcasts)."""
    fwd, lat, turn = arc_displacement(kappa, length)
    c, s = np.cos(theta), np.sin(theta)
    return x + fwd * c - lat * s, y + fwd * s + lat * c, theta + turn


def propagate_arc(start: State, dt: float, lw: float) -> State:
    """Exact motion under constant ``v`` and ``phi`` for ``dt`` seconds.

    Heading is not wrapped.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    k = curvature(start.phi, lw)
    x, y, th = arc_step(start.x, start.y, start.theta, k, start.v * dt)
    return State(float(x), float(y), float(th), start.v, start.phi)


def state_derivative(s: State, u: Control, lw: float) -> np.ndarray:
    """Rates ``(dx, dy, dv, dphi, dtheta)`` of the bicycle model."""
    return np.array([
        s.v * math.cos(s.theta),
        s.v * math.sin(s.theta),
        u.a,
        u.omega,
        s.v * math.tan(s.phi) / lw,
    ])


def rk4_propagate(s: State, u: Control, lw: float, dt: float, steps: int) -> State:
    """Classical Runge-Kutta integration of ``state_derivative``; used as a reference."""
    # internal order follows the rate vector: x, y, v, phi, theta
    z = np.array([s.x, s.y, s.v, s.phi, s.theta])
    h = dt / steps

    def f(z):
        return state_derivative(State(z[0], z[1], z[4], z[2], z[3]), u, lw)

    for _ in range(steps):
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return State(z[0], z[1], z[4], z[2], z[3])


def vertex_trajectory(v: float, kappa: float, t, params: VehicleParams) -> np.ndarray:
    """Footprint corners A, B, C, D at times ``t`` from the normalized pose (0, 0, pi/2).

    Returns ``(4, 2)`` for scalar ``t`` and ``(len(t), 4, 2)`` for arrays.
    """
    t = np.asarray(t, dtype=float)
    a = v * kappa * t
    if abs(kappa) < SERIES_KAPPA:
        ell = v * t
        bx, by = -0.5 * ell * ell * kappa, ell
    else:
        bx, by = (np.cos(a) - 1.0) / kappa, np.sin(a) / kappa
    ca, sa = np.cos(a), np.sin(a)
    hw = 0.5 * params.lb
    out = np.empty(t.shape + (4, 2))
    out[..., 0, 0] = bx - params.lf * sa - hw * ca
    out[..., 0, 1] = by + params.lf * ca - hw * sa
    out[..., 1, 0] = bx - params.lf * sa + hw * ca
    out[..., 1, 1] = by + params.lf * ca + hw * sa
    out[..., 2, 0] = bx + params.lr * sa + hw * ca
    out[..., 2, 1] = by - params.lr * ca + hw * sa
    out[..., 3, 0] = bx + params.lr * sa - hw * ca
    out[..., 3, 1] = by - params.lr * ca - hw * sa
    return out
