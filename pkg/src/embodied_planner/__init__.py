"""Trajectory planning with collision constraints that hold between collocation points."""

from __future__ import annotations

__version__ = "0.1.0"
