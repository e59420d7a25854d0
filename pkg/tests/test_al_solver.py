from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from _cache import scenario, seed
from embodied_planner.al_solver import (
    FEASIBLE,
    FEASIBLE_OPTIMAL,
    INFEASIBLE,
    ITERATION_LIMIT,
    SolverOptions,
    numerical_gradient,
    numerical_jacobian,
    solve,
)
from embodied_planner.coarse_planner import form_initial_guess
from embodied_planner.errors import DimensionMismatch
from embodied_planner.geometry import TABLE_I
from embodied_planner.kinematics import State
from embodied_planner.trajectory_nlp import build_nlp, encode

INF = np.inf


@dataclass
class Quadratic:
    """min 0.5 x'Qx + c'x  s.t.  A x = b,  G x <= h,  lower <= x <= upper."""

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    G: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.c)
        self.n = n
        if self.A.size == 0:
            self.A = np.zeros((0, n))
        if self.G.size == 0:
            self.G = np.zeros((0, n))
        self.lower = np.full(n, -INF) if self.lower is None else self.lower
        self.upper = np.full(n, INF) if self.upper is None else self.upper

    def cost(self, x):
        return 0.5 * x @ self.Q @ x + self.c @ x

    def cost_grad(self, x):
        return self.Q @ x + self.c

    def constraints(self, x):
        return self.A @ x - self.b, self.G @ x - self.h

    def jacobian(self, x):
        return sp.csr_matrix(self.A), sp.csr_matrix(self.G)


class NoDerivatives:
    """Wraps a problem, hiding its derivatives so the solver falls back to differences."""

    def __init__(self, inner):
        self._p = inner
        self.n, self.lower, self.upper = inner.n, inner.lower, inner.upper

    def cost(self, x):
        return self._p.cost(x)

    def constraints(self, x):
        return self._p.constraints(x)


# --- finite differences -------------------------------------------------------------

def test_numerical_gradient_examples():
    g = numerical_gradient(lambda x: x @ x, np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-6)
    g = numerical_gradient(lambda x: math.sin(x[0]) * x[1], np.array([0.3, 2.0]))
    np.testing.assert_allclose(g, [2 * math.cos(0.3), math.sin(0.3)], atol=1e-6)


def test_numerical_jacobian_example():
    fun = lambda x: np.array([x[0] * x[1], x[0] ** 2, 3.0 * x[1]])  # noqa: E731
    jac = numerical_jacobian(fun, np.array([2.0, -1.0]))
    np.testing.assert_allclose(jac, [[-1, 2], [4, 0], [0, 3]], atol=1e-6)


# --- small programs with known answers ----------------------------------------------------

def test_equality_constrained_quadratic():
    # min x^2 + y^2  s.t.  x + y = 1  ->  (0.5, 0.5)
    p = Quadratic(2 * np.eye(2), np.zeros(2), A=np.array([[1.0, 1.0]]), b=np.array([1.0]))
    x, rep = solve(p, np.array([3.0, -2.0]))
    assert rep.status == FEASIBLE_OPTIMAL
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-4)
    assert rep.cost == pytest.approx(0.5, abs=1e-4)


def test_inequality_constrained_quadratic():
    # min (x-2)^2 + (y-2)^2  s.t.  x + y <= 2  ->  (1, 1)
    p = Quadratic(2 * np.eye(2), np.array([-4.0, -4.0]), G=np.array([[1.0, 1.0]]), h=np.array([2.0]))
    x, rep = solve(p, np.zeros(2))
    assert rep.success
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-3)


def test_bounds_are_respected():
    p = Quadratic(np.eye(2), np.array([5.0, -5.0]), lower=np.array([-1.0, -1.0]), upper=np.array([1.0, 1.0]))
    x, rep = solve(p, np.zeros(2))
    assert rep.success
    np.testing.assert_allclose(x, [-1.0, 1.0])


def test_pinned_variable_stays_put():
    p = Quadratic(np.eye(2), np.array([1.0, 1.0]), lower=np.array([0.7, -INF]), upper=np.array([0.7, INF]))
    x, _ = solve(p, np.array([3.0, 3.0]))
    assert x[0] == 0.7
    assert x[1] == pytest.approx(-1.0, abs=1e-4)


def test_finite_difference_fallback_matches_analytic():
    p = Quadratic(2 * np.eye(2), np.array([-4.0, -4.0]), G=np.array([[1.0, 1.0]]), h=np.array([2.0]))
    xa, ra = solve(p, np.zeros(2))
    xf, rf = solve(NoDerivatives(p), np.zeros(2))
    assert ra.success and rf.success
    np.testing.assert_allclose(xf, xa, atol=1e-4)


def test_infeasible_program_reports_status():
    # x <= -1 and -x <= -1 cannot both hold
    p = Quadratic(np.eye(1), np.zeros(1), G=np.array([[1.0], [-1.0]]), h=np.array([-1.0, -1.0]))
    x, rep = solve(p, np.zeros(1), SolverOptions(max_outer=30))
    assert rep.status in (INFEASIBLE, ITERATION_LIMIT)
    assert not rep.success
    assert np.all(np.isfinite(x))
    assert rep.max_violation >= 1.0 - 1e-3


def test_feasible_stationary_warm_start_returns_immediately():
    p = Quadratic(2 * np.eye(2), np.zeros(2), A=np.array([[1.0, 1.0]]), b=np.array([1.0]))
    x, rep = solve(p, np.array([0.5, 0.5]))
    assert rep.status == FEASIBLE_OPTIMAL
    assert rep.outer_iterations <= 1
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-9)


def test_dimension_mismatch():
    p = Quadratic(np.eye(2), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        solve(p, np.zeros(3))


@pytest.mark.parametrize(
    "kwargs",
    [{"feas_tol": 0.0}, {"stat_tol": -1.0}, {"penalty_growth": 1.0}, {"max_outer": 0}, {"max_inner": 0}],
)
def test_solver_options_validation(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)


def test_solver_options_round_trip():
    o = SolverOptions(feas_tol=1e-6, max_outer=7)
    assert SolverOptions.from_dict(o.to_dict()) == o
    assert SolverOptions.from_dict(None) == SolverOptions()


@st.composite
def random_qp(draw):
    n = draw(st.integers(2, 5))
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    m = rng.normal(size=(n, n))
    q = m @ m.T + n * np.eye(n)
    c = rng.normal(size=n)
    a = rng.normal(size=(1, n))
    g = rng.normal(size=(2, n))
    x_feas = rng.normal(size=n)
    # right-hand sides chosen so x_feas is strictly feasible for the inequalities
    return Quadratic(q, c, A=a, b=a @ x_feas, G=g, h=g @ x_feas + 0.5), rng.normal(size=n)


@settings(max_examples=30)
@given(random_qp())
def test_random_convex_programs_reach_kkt(case):
    p, x0 = case
    x, rep = solve(p, x0, SolverOptions(feas_tol=1e-6, stat_tol=1e-5))
    assert rep.success
    ceq, cin = p.constraints(x)
    assert np.max(np.abs(ceq)) <= 1e-5 and np.max(cin) <= 1e-5
    # no feasible point along a projected perturbation does better
    rng = np.random.default_rng(0)
    base = p.cost(x)
    a = p.A[0]
    for _ in range(50):
        d = rng.normal(size=p.n)
        d -= a * (a @ d) / (a @ a)
        for t in (1e-2, 1e-1):
            y = x + t * d
            if np.all(p.constraints(y)[1] <= 0):
                assert p.cost(y) >= base - 1e-4


@settings(max_examples=20)
@given(random_qp())
def test_violation_history_and_penalty_are_monotone(case):
    p, x0 = case
    _, rep = solve(p, x0)
    assert all(b >= a for a, b in zip(rep.penalty_history, rep.penalty_history[1:]))
    assert rep.violation_history[-1] <= rep.violation_history[0] + 1e-12
    assert len(rep.cost_history) == rep.outer_iterations + 1


def test_deterministic():
    p = Quadratic(2 * np.eye(2), np.array([-4.0, -4.0]), G=np.array([[1.0, 1.0]]), h=np.array([2.0]))
    a = solve(p, np.zeros(2))
    b = solve(p, np.zeros(2))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1].violation_history == b[1].violation_history


# --- trajectory problems ---------------------------------------------------------------

def straight_problem():
    sc = scenario("straight_10m")
    guess = form_initial_guess(seed("straight_10m").dense, sc.lam, sc.dT_max, TABLE_I)
    return build_nlp(sc, guess), guess


def test_straight_run_near_bang_bang_time():
    prob, guess = straight_problem()
    x, rep = solve(prob, encode(prob, guess))
    assert rep.success
    # triangular profile at the acceleration limits: 2 sqrt(10 / 0.75)
    assert rep.cost == pytest.approx(7.3030, rel=0.05)


def test_solved_point_is_a_fixed_point():
    prob, guess = straight_problem()
    x, _ = solve(prob, encode(prob, guess))
    _, again = solve(prob, x)
    assert again.success
    assert again.outer_iterations <= 1


def test_goal_inside_obstacle_is_reported_not_raised():
    sc = scenario("offset_block")
    bx, by = sc.obstacles[0].vertices.mean(axis=0)
    # keep the planned guess but move the goal into the block
    guess = form_initial_guess(seed("offset_block").dense, sc.lam, sc.dT_max, TABLE_I)
    prob = build_nlp(sc.with_poses(sc.start, State(bx, by, 0.0, 0.0, 0.0)), guess)
    x, rep = solve(prob, encode(prob, guess), SolverOptions(max_outer=8, max_inner=100))
    assert rep.status in (INFEASIBLE, ITERATION_LIMIT)
    assert np.all(np.isfinite(x))


def test_status_names():
    assert {FEASIBLE_OPTIMAL, FEASIBLE, INFEASIBLE, ITERATION_LIMIT} == {
        "feasible-optimal-ish", "feasible", "infeasible", "iteration-limit",
    }
