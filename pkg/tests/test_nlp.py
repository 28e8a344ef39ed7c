import numpy as np
import pytest

from platoon.nlp import NlpProblem, kkt_residual, primal_infeasibility, solve_nlp, stationarity


def quadratic(lb=(-10.0, -10.0), ub=(10.0, 10.0), with_eq=False):
    # min (x - 1)^2 + (y - 2)^2  s.t.  x + y <= 1  -> optimum (0, 1)
    eq = (lambda x: np.array([x[0] - 5.0])) if with_eq else (lambda x: np.zeros(0))
    eq_jac = (lambda x: np.array([[1.0, 0.0]])) if with_eq else (lambda x: np.zeros((0, 2)))
    return NlpProblem(
        n=2, lb=np.array(lb), ub=np.array(ub),
        objective=lambda x: (x[0] - 1) ** 2 + (x[1] - 2) ** 2,
        gradient=lambda x: np.array([2 * (x[0] - 1), 2 * (x[1] - 2)]),
        eq=eq, eq_jac=eq_jac,
        ineq=lambda x: np.array([1.0 - x[0] - x[1]]),
        ineq_jac=lambda x: np.array([[-1.0, -1.0]]),
        x_init=np.zeros(2),
    )


def test_slsqp_solves_small_qp():
    sol = solve_nlp(quadratic())
    assert sol.ok
    assert sol.x == pytest.approx([0.0, 1.0], abs=1e-6)
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    assert sol.kkt_residual < 1e-6


def test_kkt_residual_detects_non_optimal_point():
    p = quadratic()
    assert kkt_residual(p, np.array([0.0, 1.0]))[0] < 1e-9
    assert kkt_residual(p, np.array([-1.0, 1.0]))[0] > 0.1
    assert primal_infeasibility(p, np.array([1.0, 1.0])) == pytest.approx(1.0)


def test_stationarity_sign_convention():
    p = quadratic()
    x = np.array([0.0, 1.0])
    # grad f = (-2, -2) and J = (-1, -1): grad f + J^T lam = 0 needs lam = -2
    assert stationarity(p, x, np.zeros(0), np.array([-2.0]), np.zeros(2)) < 1e-12
    assert stationarity(p, x, np.zeros(0), np.array([2.0]), np.zeros(2)) == np.inf


def test_bound_active_optimum():
    sol = solve_nlp(quadratic(ub=(10.0, 0.5)))
    assert sol.ok and sol.x == pytest.approx([0.5, 0.5], abs=1e-6)


def test_infeasible_problem_reports_failure():
    sol = solve_nlp(quadratic(ub=(1.0, 10.0), with_eq=True))
    assert not sol.ok
    assert sol.primal_infeasibility > 1.0


def test_ipopt_backend_requires_runner():
    with pytest.raises(ValueError):
        solve_nlp(quadratic(), backend="ipopt")
