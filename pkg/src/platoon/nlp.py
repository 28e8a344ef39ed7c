"""Generic smooth NLP container and a local solver with an independent KKT audit.

Constraint convention: ``eq(x) == 0`` and ``ineq(x) >= 0``, plus simple bounds
``lb <= x <= ub``. All callbacks return dense numpy arrays.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import OptimizeWarning, lsq_linear, minimize

log = logging.getLogger(__name__)

SUCCESS = "success"
FAILED = "infeasible-or-failed"


@dataclass
class NlpProblem:
    n: int
    lb: np.ndarray
    ub: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    eq: Callable[[np.ndarray], np.ndarray]
    eq_jac: Callable[[np.ndarray], np.ndarray]
    ineq: Callable[[np.ndarray], np.ndarray]
    ineq_jac: Callable[[np.ndarray], np.ndarray]
    x_init: np.ndarray
    layout: dict = field(default_factory=dict)
    kkt_tol: float = 1e-4
    feas_tol: float = 1e-7
    max_iter: int = 200
    # optional exact-Hessian backend: x0 -> (x, lam_eq, lam_ineq, lam_x, iterations, message)
    ipopt: Callable | None = None

    @property
    def n_eq(self) -> int:
        return len(self.eq(self.x_init))

    @property
    def n_ineq(self) -> int:
        return len(self.ineq(self.x_init))


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    primal_infeasibility: float
    iterations: int
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS


def primal_infeasibility(p: NlpProblem, x: np.ndarray) -> float:
    viol = [0.0]
    e = p.eq(x)
    if e.size:
        viol.append(np.max(np.abs(e)))
    g = p.ineq(x)
    if g.size:
        viol.append(-np.min(g))
    viol.append(np.max(p.lb - x, initial=0.0))
    viol.append(np.max(x - p.ub, initial=0.0))
    return float(max(viol))


def kkt_residual(p: NlpProblem, x: np.ndarray, active_tol: float = 1e-6) -> tuple[float, float]:
    """(stationarity, primal infeasibility) with multipliers fitted by bounded least squares."""
    grad = p.gradient(x)
    cols, lo, hi = [], [], []
    Je = p.eq_jac(x)
    if Je.size:
        cols.append(Je.T)
        lo += [-np.inf] * Je.shape[0]
        hi += [np.inf] * Je.shape[0]
    g = p.ineq(x)
    if g.size:
        act = g <= active_tol
        if act.any():
            cols.append(p.ineq_jac(x)[act].T)
            lo += [0.0] * int(act.sum())
            hi += [np.inf] * int(act.sum())
    eye = np.eye(p.n)
    at_lb = np.flatnonzero(x - p.lb <= active_tol)
    at_ub = np.flatnonzero(p.ub - x <= active_tol)
    if at_lb.size:
        cols.append(eye[:, at_lb])
    if at_ub.size:
        cols.append(-eye[:, at_ub])
    lo += [0.0] * (at_lb.size + at_ub.size)
    hi += [np.inf] * (at_lb.size + at_ub.size)

    scale = max(1.0, float(np.max(np.abs(grad))))
    if cols:
        M = np.hstack(cols)
        res = lsq_linear(M, grad, bounds=(np.array(lo), np.array(hi)), method="bvls")
        r = grad - M @ res.x
    else:
        r = grad
    return float(np.max(np.abs(r)) / scale), primal_infeasibility(p, x)


def stationarity(p: NlpProblem, x, lam_eq, lam_ineq, lam_x) -> float:
    """Scaled gradient-of-Lagrangian norm for multipliers in the sign convention
    grad f + J_eq^T lam_eq + J_ineq^T lam_ineq + lam_x = 0 (lam_ineq <= 0 on active rows)."""
    grad = p.gradient(x)
    r = grad + lam_x
    if len(lam_eq):
        r = r + p.eq_jac(x).T @ lam_eq
    if len(lam_ineq):
        if np.any(lam_ineq > 1e-6 * max(1.0, np.max(np.abs(lam_ineq)))):
            return np.inf
        r = r + p.ineq_jac(x).T @ lam_ineq
    return float(np.max(np.abs(r)) / max(1.0, float(np.max(np.abs(grad)))))


def solve_nlp(p: NlpProblem, warm_start: np.ndarray | NlpSolution | None = None,
              backend: str | None = None) -> NlpSolution:
    """Locally solve ``p``; success requires a verified KKT point.

    ``backend`` is ``"ipopt"`` (default when the problem provides it) or ``"slsqp"``.
    """
    if isinstance(warm_start, NlpSolution):
        x0 = warm_start.x
    elif warm_start is not None:
        x0 = np.asarray(warm_start, dtype=float)
    else:
        x0 = p.x_init
    x0 = np.clip(x0, p.lb, p.ub)
    backend = backend or ("ipopt" if p.ipopt is not None else "slsqp")
    if backend == "ipopt":
        if p.ipopt is None:
            raise ValueError("problem has no IPOPT backend")
        return _solve_ipopt(p, x0)
    return _solve_slsqp(p, x0)


def _solve_ipopt(p: NlpProblem, x0: np.ndarray) -> NlpSolution:
    x, lam_eq, lam_in, lam_x, nit, message = p.ipopt(x0)
    if not np.all(np.isfinite(x)):
        return NlpSolution(x, np.inf, FAILED, np.inf, np.inf, nit, "non-finite iterate")
    stat = stationarity(p, x, lam_eq, lam_in, lam_x)
    infeas = primal_infeasibility(p, x)
    ok = infeas <= p.feas_tol and stat <= p.kkt_tol
    if not ok:
        log.debug("IPOPT exit %s: stationarity %.2e infeasibility %.2e", message, stat, infeas)
    return NlpSolution(x, float(p.objective(x)), SUCCESS if ok else FAILED,
                       max(stat, infeas), infeas, nit, message)


def _solve_slsqp(p: NlpProblem, x0: np.ndarray) -> NlpSolution:
    constraints = []
    if p.eq(x0).size:
        constraints.append({"type": "eq", "fun": p.eq, "jac": p.eq_jac})
    if p.ineq(x0).size:
        constraints.append({"type": "ineq", "fun": p.ineq, "jac": p.ineq_jac})
    bounds = list(zip(np.where(np.isfinite(p.lb), p.lb, None), np.where(np.isfinite(p.ub), p.ub, None)))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            p.objective,
            x0,
            jac=p.gradient,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": p.max_iter, "ftol": 1e-12},
        )
    x = np.clip(res.x, p.lb, p.ub)
    if not np.all(np.isfinite(x)):
        return NlpSolution(x, np.inf, FAILED, np.inf, np.inf, res.nit, "non-finite iterate")
    stat, infeas = kkt_residual(p, x)
    ok = infeas <= p.feas_tol and stat <= p.kkt_tol
    if not ok:
        log.debug("SLSQP exit %s (%s): stationarity %.2e infeasibility %.2e",
                  res.status, res.message, stat, infeas)
    return NlpSolution(
        x=x,
        objective=float(p.objective(x)),
        status=SUCCESS if ok else FAILED,
        kkt_residual=max(stat, infeas),
        primal_infeasibility=infeas,
        iterations=int(res.nit),
        message=str(res.message),
    )
