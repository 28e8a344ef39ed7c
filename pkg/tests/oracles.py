"""Reference computations used only by the tests, written independently of the package."""

import math
from functools import lru_cache

import cvxpy as cp
import numpy as np
from shapely.geometry import Polygon


def rectangle_corners(x, y, psi, length, width):
    c, s = math.cos(psi), math.sin(psi)
    local = [(length / 2, width / 2), (-length / 2, width / 2), (-length / 2, -width / 2), (length / 2, -width / 2)]
    return [(x + c * a - s * b, y + s * a + c * b) for a, b in local]


def shapely_distance(pose1, pose2):
    """Distance between two rectangles given as (x, y, psi, len, w)."""
    return Polygon(rectangle_corners(*pose1)).distance(Polygon(rectangle_corners(*pose2)))


def sampled_distance(pose1, pose2, n=2000):
    """Dense boundary sampling; converges to the true distance from above."""
    def boundary(pose):
        pts = np.array(rectangle_corners(*pose) + [rectangle_corners(*pose)[0]])
        out = []
        for a, b in zip(pts[:-1], pts[1:]):
            t = np.linspace(0, 1, n // 4, endpoint=False)[:, None]
            out.append(a + t * (b - a))
        return np.vstack(out)
    if Polygon(rectangle_corners(*pose1)).intersects(Polygon(rectangle_corners(*pose2))):
        return 0.0
    b1, b2 = boundary(pose1), boundary(pose2)
    d = np.sqrt(((b1[:, None, :] - b2[None, :, :]) ** 2).sum(axis=2))
    return float(d.min())


@lru_cache(maxsize=None)
def _dual_program(m1, m2):
    A1, A2 = cp.Parameter((m1, 2)), cp.Parameter((m2, 2))
    b1, b2 = cp.Parameter(m1), cp.Parameter(m2)
    lam, mu = cp.Variable(m1, nonneg=True), cp.Variable(m2, nonneg=True)
    s = cp.Variable(2)
    cons = [A1.T @ lam + s == 0, A2.T @ mu - s == 0, cp.norm(s, 2) <= 1]
    prob = cp.Problem(cp.Maximize(-b1 @ lam - b2 @ mu), cons)
    return prob, (A1, b1, A2, b2), (lam, mu, s)


def dual_optimum(P1, P2):
    """Optimal value of the separation dual, solved as a second-order cone program."""
    prob, (A1, b1, A2, b2), (lam, mu, s) = _dual_program(len(P1.b), len(P2.b))
    A1.value, b1.value, A2.value, b2.value = P1.A, P1.b, P2.A, P2.b
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == cp.OPTIMAL, prob.status
    return float(prob.value), (lam.value, mu.value, s.value)


def plans_collide(a_states, a_dims, b_states, b_dims, d_min, T):
    """Exhaustive check over every step, no prefilter and no early exit."""
    hits = [
        shapely_distance((*a_states[t, :3], *a_dims), (*b_states[t, :3], *b_dims)) < d_min
        for t in range(T + 1)
    ]
    return any(hits)


def fd_jacobian(fun, x, h=1e-6):
    """Central finite differences, one column per variable."""
    f0 = fun(x)
    J = np.zeros((len(f0), len(x)))
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = h
        J[:, j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return J


def random_point(problem, rng):
    """A random point inside the variable bounds, near realistic magnitudes."""
    lo = np.where(np.isfinite(problem.lb), problem.lb, -5.0)
    hi = np.where(np.isfinite(problem.ub), problem.ub, 5.0)
    hi = np.minimum(hi, lo + 10.0)
    return problem.x_init + 0.1 * rng.standard_normal(problem.n) if rng.random() < 0.5 else rng.uniform(lo, hi)


def relative_error(J, J_ref):
    return float(np.max(np.abs(J - J_ref), initial=0.0) / max(1.0, np.max(np.abs(J_ref), initial=0.0)))
