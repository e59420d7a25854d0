"""Shortest forward-only paths of bounded curvature between two poses."""

from __future__ import annotations

import math

TWO_PI = 2.0 * math.pi


def _mod2pi(a: float) -> float:
    return a - TWO_PI * math.floor(a / TWO_PI)


def _lsl(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = 2 + d * d - 2 * math.cos(a - b) + 2 * d * (sa - sb)
    if p2 < 0:
        return None
    tmp = math.atan2(cb - ca, d + sa - sb)
    return _mod2pi(-a + tmp), math.sqrt(p2), _mod2pi(b - tmp)


def _rsr(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = 2 + d * d - 2 * math.cos(a - b) + 2 * d * (sb - sa)
    if p2 < 0:
        return None
    tmp = math.atan2(ca - cb, d - sa + sb)
    return _mod2pi(a - tmp), math.sqrt(p2), _mod2pi(-b + tmp)


def _lsr(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = -2 + d * d + 2 * math.cos(a - b) + 2 * d * (sa + sb)
    if p2 < 0:
        return None
    p = math.sqrt(p2)
    tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
    return _mod2pi(-a + tmp), p, _mod2pi(-_mod2pi(b) + tmp)


def _rsl(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    p2 = -2 + d * d + 2 * math.cos(a - b) - 2 * d * (sa + sb)
    if p2 < 0:
        return None
    p = math.sqrt(p2)
    tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
    return _mod2pi(a - tmp), p, _mod2pi(b - tmp)


def _rlr(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    tmp = (6.0 - d * d + 2 * math.cos(a - b) + 2 * d * (sa - sb)) / 8.0
    if abs(tmp) > 1:
        return None
    p = _mod2pi(TWO_PI - math.acos(tmp))
    t = _mod2pi(a - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
    return t, p, _mod2pi(a - b - t + p)


def _lrl(a, b, d):
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    tmp = (6.0 - d * d + 2 * math.cos(a - b) + 2 * d * (-sa + sb)) / 8.0
    if abs(tmp) > 1:
        return None
    p = _mod2pi(TWO_PI - math.acos(tmp))
    t = _mod2pi(-a - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
    return t, p, _mod2pi(_mod2pi(b) - a - t + p)


_WORDS = (
    ("LSL", _lsl), ("RSR", _rsr), ("LSR", _lsr),
    ("RSL", _rsl), ("RLR", _rlr), ("LRL", _lrl),
)


def shortest_path(q0, q1, radius: float) -> list[tuple[float, float]]:
    """Segments ``(curvature, length)`` of the shortest Dubins path from ``q0`` to ``q1``.

    Poses are ``(x, y, theta)``; curvature is ``+1/radius`` (left),
    ``-1/radius`` (right) or 0.
    """
    dx, dy = q1[0] - q0[0], q1[1] - q0[1]
    d = math.hypot(dx, dy) / radius
    th = _mod2pi(math.atan2(dy, dx)) if d > 0 else 0.0
    a = _mod2pi(q0[2] - th)
    b = _mod2pi(q1[2] - th)
    best = None
    for word, fn in _WORDS:
        res = fn(a, b, d)
        if res is None:
            continue
        total = sum(res)
        if best is None or total < best[0]:
            best = (total, word, res)
    if best is None:
        return []
    _, word, lengths = best
    k = 1.0 / radius
    segs = []
    for ch, ln in zip(word, lengths):
        if ln * radius <= 1e-12:
            continue
        segs.append(({"L": k, "R": -k, "S": 0.0}[ch], ln * radius))
    return segs


def path_length(q0, q1, radius: float) -> float:
    return sum(ln for _, ln in shortest_path(q0, q1, radius))
