"""Exception types shared across the planner stages."""

from __future__ import annotations


class PlannerError(Exception):
    """Base class for every recoverable failure raised by this package."""


class PrereqViolation(PlannerError):
    """Embodied-box validity conditions do not hold for a (curvature, arc length) pair.

    ``slacks`` holds ``lhs - rhs`` for each condition (positive means violated).
    """

    def __init__(self, kappa: float, s: float, slacks: dict[str, float]):
        self.kappa = kappa
        self.s = s
        self.slacks = dict(slacks)
        bad = ", ".join(f"{k}={v:+.3e}" for k, v in self.slacks.items() if v > 0)
        super().__init__(f"prerequisites violated at kappa={kappa:g}, s={s:g}: {bad}")


class MalformedTrajectory(PlannerError):
    pass


class NoPathFound(PlannerError):
    pass


class InfeasibleProfile(PlannerError):
    pass


class GuessDegenerate(PlannerError):
    pass


class DimensionMismatch(PlannerError, ValueError):
    pass


class ScenarioRejected(PlannerError):
    pass


class ParseError(PlannerError):
    pass


class ValidationError(PlannerError):
    """A scenario field breaks a named invariant."""

    def __init__(self, invariant: str, value: object, detail: str = ""):
        self.invariant = invariant
        self.value = value
        msg = f"{invariant}: offending value {value!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NotSafeWithinBudget(PlannerError):
    def __init__(self, n_max: int, trail: list):
        self.n_max = n_max
        self.trail = trail
        super().__init__(f"naive transcription not certified safe up to N_fe={n_max}")


class StageError(PlannerError):
    """Wraps a failure with the pipeline stage that produced it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
