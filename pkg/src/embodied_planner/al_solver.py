"""Augmented-Lagrangian solver for bound-constrained nonlinear programs.

The solver only needs the evaluation contract below; ``trajectory_nlp``
problems implement it, but any object with these members works:

``n``, ``lower``, ``upper``
    dimension and variable bounds (``lower == upper`` pins a variable)
``cost(x)``
    scalar objective
``constraints(x)``
    ``(c_eq, c_in)`` with ``c_eq == 0`` and ``c_in <= 0`` at feasibility
``cost_grad(x)`` and ``jacobian(x)`` (optional)
    gradient and sparse ``(J_eq, J_in)``; central differences are used when
    absent
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .errors import DimensionMismatch

FEASIBLE_OPTIMAL = "feasible-optimal-ish"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-4
    stat_tol: float = 1e-3
    max_outer: int = 50
    max_inner: int = 500
    penalty0: float = 10.0
    penalty_growth: float = 5.0
    fd_step: float = 1e-6
    seed: int = 0
    penalty_max: float = 1e10
    cost_rtol: float = 1e-4
    inner_ftol: float = 1e-7
    restore: bool = True

    def __post_init__(self):
        if self.feas_tol <= 0 or self.stat_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty growth factor must exceed 1")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverOptions":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    status: str
    cost: float
    max_violation: float
    stationarity: float
    outer_iterations: int
    inner_iterations: int
    penalty: float
    wall_time: float
    violation_history: list[float]
    penalty_history: list[float]
    cost_history: list[float]

    @property
    def success(self) -> bool:
        return self.status in (FEASIBLE_OPTIMAL, FEASIBLE)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def numerical_gradient(f, x, h0: float = 1e-6) -> np.ndarray:
    """Central differences with per-coordinate step ``h0 * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = h0 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def numerical_jacobian(fun, x, h0: float = 1e-6) -> np.ndarray:
    """Dense central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = h0 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h)
    return jac


class _Evaluator:
    """Caches one evaluation of cost, constraints and derivatives per point."""

    def __init__(self, problem, h0: float):
        self.p = problem
        self.h0 = h0
        self._x = None
        self._val = None

    def __call__(self, x):
        if self._x is not None and np.array_equal(x, self._x):
            return self._val
        p = self.p
        f = p.cost(x)
        ceq, cin = p.constraints(x)
        if hasattr(p, "cost_grad"):
            gf = p.cost_grad(x)
        else:
            gf = numerical_gradient(p.cost, x, self.h0)
        if hasattr(p, "jacobian"):
            jeq, jin = p.jacobian(x)
        else:
            jeq = sp.csr_matrix(numerical_jacobian(lambda z: p.constraints(z)[0], x, self.h0))
            jin = sp.csr_matrix(numerical_jacobian(lambda z: p.constraints(z)[1], x, self.h0))
        self._x = x.copy()
        self._val = (f, gf, np.asarray(ceq, float), np.asarray(cin, float), jeq, jin)
        return self._val


def _violation(ceq, cin) -> float:
    v = 0.0
    if ceq.size:
        v = max(v, float(np.max(np.abs(ceq))))
    if cin.size:
        v = max(v, float(np.max(cin)))
    return max(v, 0.0)


def _projected(g, x, lo, hi, eps=1e-10):
    g = g.copy()
    at_lo = x <= lo + eps
    at_hi = x >= hi - eps
    g[at_lo] = np.minimum(g[at_lo], 0.0)
    g[at_hi] = np.maximum(g[at_hi], 0.0)
    g[at_lo & at_hi] = 0.0
    return g


def _initial_multipliers(gf, jeq, jin, cin, x, lo, hi, feas_tol):
    """Least-squares multipliers for the equalities and near-active inequalities."""
    active = np.flatnonzero(cin >= -10 * feas_tol)
    free = ~((x <= lo + 1e-10) | (x >= hi - 1e-10))
    mats = [jeq, jin[active]]
    a = sp.hstack([m.T for m in mats]).tocsr()[free]
    n_eq = jeq.shape[0]
    lb = np.concatenate([np.full(n_eq, -np.inf), np.zeros(active.size)])
    mu = np.zeros(n_eq)
    nu = np.zeros(jin.shape[0])
    if a.shape[1] == 0 or a.shape[0] == 0:
        return mu, nu
    res = scipy.optimize.lsq_linear(a, -gf[free], bounds=(lb, np.full(lb.size, np.inf)),
                                    lsmr_tol="auto", max_iter=200)
    mu = res.x[:n_eq]
    nu[active] = res.x[n_eq:]
    return mu, nu


def solve(problem, warm_start, opts: SolverOptions | None = None):
    """Minimize ``problem.cost`` subject to its constraints and bounds.

    Returns ``(x, SolveReport)``. Non-convergence is reported through the
    status, never raised.
    """
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    x = np.asarray(warm_start, dtype=float).copy()
    if x.shape != (problem.n,):
        raise DimensionMismatch(f"warm start has shape {x.shape}, problem needs ({problem.n},)")
    lo = np.asarray(problem.lower, float)
    hi = np.asarray(problem.upper, float)
    x = np.clip(x, lo, hi)
    ev = _Evaluator(problem, opts.fd_step)

    f, gf, ceq, cin, jeq, jin = ev(x)
    mu, nu = _initial_multipliers(gf, jeq, jin, cin, x, lo, hi, opts.feas_tol)
    rho = opts.penalty0
    viol = _violation(ceq, cin)
    stat = float(np.max(np.abs(_projected(gf + jeq.T @ mu + jin.T @ nu, x, lo, hi)), initial=0.0))
    viol_hist, rho_hist, cost_hist = [viol], [rho], [float(f)]
    inner_total = 0
    outer = 0
    status = None
    if viol <= opts.feas_tol and stat <= opts.stat_tol:
        status = FEASIBLE_OPTIMAL

    if status is None and opts.restore and viol > opts.feas_tol:
        # feasibility restoration: least-squares violation only, no cost
        def phase1(z):
            _, _, ceq, cin, jeq, jin = ev(z)
            cp = np.maximum(cin, 0.0)
            return 0.5 * (ceq @ ceq + cp @ cp), jeq.T @ ceq + jin.T @ cp

        res = scipy.optimize.minimize(
            phase1, x, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
            options={"maxiter": opts.max_inner, "gtol": 1e-10, "ftol": 1e-16, "maxcor": 20},
        )
        inner_total += int(res.nit)
        x = res.x
        f, gf, ceq, cin, jeq, jin = ev(x)
        mu, nu = _initial_multipliers(gf, jeq, jin, cin, x, lo, hi, opts.feas_tol)
        viol = _violation(ceq, cin)
        viol_hist.append(viol)

    def al_fun(z):
        f, gf, ceq, cin, jeq, jin = ev(z)
        w_eq = mu + rho * ceq
        w_in = np.maximum(0.0, nu + rho * cin)
        val = f + mu @ ceq + 0.5 * rho * (ceq @ ceq) + (w_in @ w_in - nu @ nu) / (2.0 * rho)
        grad = gf + jeq.T @ w_eq + jin.T @ w_in
        return val, grad

    while status is None and outer < opts.max_outer:
        outer += 1
        res = scipy.optimize.minimize(
            al_fun, x, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
            options={"maxiter": opts.max_inner, "gtol": 0.1 * opts.stat_tol,
                     "ftol": opts.inner_ftol, "maxcor": 20},
        )
        inner_total += int(res.nit)
        x = res.x
        f, gf, ceq, cin, jeq, jin = ev(x)
        prev = viol
        viol = _violation(ceq, cin)
        prev_f = cost_hist[-1]
        cost_hist.append(float(f))
        mu = mu + rho * ceq
        nu = np.maximum(0.0, nu + rho * cin)
        stat = float(np.max(np.abs(_projected(gf + jeq.T @ mu + jin.T @ nu, x, lo, hi)), initial=0.0))
        viol_hist.append(viol)
        if viol <= opts.feas_tol and stat <= opts.stat_tol:
            status = FEASIBLE_OPTIMAL
            break
        if viol <= opts.feas_tol and prev <= opts.feas_tol and abs(f - prev_f) <= opts.cost_rtol * max(1.0, abs(f)):
            status = FEASIBLE  # cost has stalled on the feasible set
            break
        if viol > opts.feas_tol and viol > 0.25 * prev:
            rho *= opts.penalty_growth
        rho_hist.append(rho)
        if rho > opts.penalty_max:
            status = INFEASIBLE if viol > opts.feas_tol else FEASIBLE
            break

    if status is None:
        status = FEASIBLE if viol <= opts.feas_tol else ITERATION_LIMIT
    f = float(problem.cost(x))
    report = SolveReport(
        status=status,
        cost=f,
        max_violation=viol,
        stationarity=stat,
        outer_iterations=outer,
        inner_iterations=inner_total,
        penalty=rho,
        wall_time=time.perf_counter() - t_start,
        violation_history=viol_hist,
        penalty_history=rho_hist,
        cost_history=cost_hist,
    )
    return x, report
