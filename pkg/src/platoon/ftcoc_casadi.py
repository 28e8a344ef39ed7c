"""Symbolic mirror of the FTCOC for IPOPT (exact Hessians via casadi).

The numpy callbacks in :mod:`platoon.planner` stay the reference formulation;
this module rebuilds the same variable layout and constraint order symbolically
so IPOPT's multipliers can be checked against them.
"""

from __future__ import annotations

import threading

import numpy as np

try:
    import casadi as ca
except ImportError:  # pragma: no cover - exercised only without casadi
    ca = None

_CACHE: dict = {}
_LOCK = threading.Lock()


def available() -> bool:
    return ca is not None


def _key(layout) -> tuple:
    agents = layout["agents"]
    return (
        len(agents),
        layout["N"],
        layout["dt"],
        tuple((a.params.lf, a.params.lr, a.params.len, a.params.w) for a in agents),
        tuple(layout["streams"]),
        tuple(len(P.b) for P in layout["obstacles"]),
    )


def parameters(layout) -> np.ndarray:
    """Numeric parameter vector for one FTCOC instance, matching :func:`_build` ordering."""
    shift4 = np.array([layout["x_shift"], 0.0, 0.0, 0.0])
    parts = []
    for a in layout["agents"]:
        parts += [a.z0 - shift4, (a.ref[1:] - shift4).ravel(), a.u_prev, a.qz ** 2, a.qu ** 2, a.qdu ** 2]
    for P in layout["obstacles"]:
        parts += [P.A.ravel(), P.b]
    parts.append([layout["d_min"]])
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


def _rot(psi):
    c, s = ca.cos(psi), ca.sin(psi)
    return c, s


def _expressions(layout):
    """Symbolic (x, p, f, g_eq, g_in) in the same ordering as the numpy callbacks."""
    L, N, dt = layout["slices"], layout["N"], layout["dt"]
    agents, streams = layout["agents"], layout["streams"]
    n_a = len(agents)
    x = ca.SX.sym("x", L.n)

    # parameter symbols
    P = []
    z0, ref, u_prev, qz2, qu2, qdu2 = [], [], [], [], [], []
    for _ in range(n_a):
        z0.append(ca.SX.sym("z0", 4))
        ref.append(ca.SX.sym("ref", 4 * N))
        u_prev.append(ca.SX.sym("up", 2))
        qz2.append(ca.SX.sym("qz", 4))
        qu2.append(ca.SX.sym("qu", 2))
        qdu2.append(ca.SX.sym("qdu", 2))
        P += [z0[-1], ref[-1], u_prev[-1], qz2[-1], qu2[-1], qdu2[-1]]
    obsA, obsb = [], []
    for Pobs in layout["obstacles"]:
        m = len(Pobs.b)
        obsA.append(ca.SX.sym("oA", m * 2))
        obsb.append(ca.SX.sym("ob", m))
        P += [obsA[-1], obsb[-1]]
    d_min = ca.SX.sym("dmin")
    P.append(d_min)
    p = ca.vertcat(*P)

    def Z(i, k):
        if k == 0:
            return z0[i]
        s = L.z[i].start + 4 * (k - 1)
        return x[s:s + 4]

    def U(i, k):
        s = L.u[i].start + 2 * k
        return x[s:s + 2]

    f = 0
    for i in range(n_a):
        for k in range(1, N + 1):
            e = Z(i, k) - ref[i][4 * (k - 1):4 * k]
            f += ca.dot(qz2[i], e * e)
        prev = u_prev[i]
        for k in range(N):
            u = U(i, k)
            du = u - prev
            f += ca.dot(qu2[i], u * u) + ca.dot(qdu2[i], du * du)
            prev = u

    eqs = []
    for i, a in enumerate(agents):
        Lw = a.params.lf + a.params.lr
        kr = a.params.lr / Lw
        for k in range(N):
            z, u = Z(i, k), U(i, k)
            tan_d = ca.tan(u[1])
            beta = ca.atan(kr * tan_d)
            nxt = ca.vertcat(
                z[0] + dt * z[3] * ca.cos(z[2] + beta),
                z[1] + dt * z[3] * ca.sin(z[2] + beta),
                z[2] + dt * z[3] * ca.cos(beta) * tan_d / Lw,
                z[3] + dt * u[0],
            )
            eqs.append(Z(i, k + 1) - nxt)

    def At_w(psi, w):
        c, s = _rot(psi)
        v0, v1 = w[0] - w[2], w[1] - w[3]
        return ca.vertcat(c * v0 - s * v1, s * v0 + c * v1)

    def b_dot(z, params, w):
        half = ca.DM([params.len / 2, params.w / 2, params.len / 2, params.w / 2])
        Rv = At_w(z[2], w)
        return ca.dot(half, w) + Rv[0] * z[0] + Rv[1] * z[1]

    pair_ineq = []
    for q, (i, j, o) in enumerate(streams):
        for k in range(N + 1):
            lam = x[L.lam[q][k]]
            mu = x[L.mu[q][k]]
            s = x[L.s[q][k]]
            zi = Z(i, k)
            eqs.append(At_w(zi[2], lam) + s)
            if j is None:
                m = len(layout["obstacles"][o].b)
                A = ca.reshape(obsA[o], 2, m).T
                eqs.append(ca.mtimes(A.T, mu) - s)
                bj = ca.dot(obsb[o], mu)
            else:
                zj = Z(j, k)
                eqs.append(At_w(zj[2], mu) - s)
                bj = b_dot(zj, agents[j].params, mu)
            bi = b_dot(zi, agents[i].params, lam)
            pair_ineq += [-bi - bj - d_min, 1 - ca.dot(s, s)]

    rates = []
    for i in range(n_a):
        prev = u_prev[i]
        lo_rows, hi_rows = [], []
        for k in range(N):
            du = U(i, k) - prev
            lo_rows.append(du)
            hi_rows.append(-du)
            prev = U(i, k)
        rates += lo_rows + hi_rows

    g_eq = ca.vertcat(*eqs) if eqs else ca.SX(0, 1)
    g_in = ca.vertcat(*(rates + pair_ineq))
    return x, p, f, g_eq, g_in


def functions(layout):
    """casadi Function (x, p) -> (f, g_eq, g_in); used to cross-check the numpy model."""
    x, p, f, g_eq, g_in = _expressions(layout)
    return ca.Function("ftcoc_eval", [x, p], [f, g_eq, g_in])


def _build(layout, max_iter: int, tol: float):
    x, p, f, g_eq, g_in = _expressions(layout)
    g = ca.vertcat(g_eq, g_in)
    opts = {
        "print_time": 0,
        "ipopt.print_level": 0,
        "ipopt.sb": "yes",
        "ipopt.max_iter": max_iter,
        "ipopt.tol": tol,
        "ipopt.acceptable_tol": 1e-6,
        "ipopt.constr_viol_tol": 1e-9,
        "ipopt.mu_strategy": "adaptive",
    }
    solver = ca.nlpsol("ftcoc", "ipopt", {"x": x, "p": p, "f": f, "g": g}, opts)
    return solver, int(g_eq.shape[0]), int(g_in.shape[0])


def solver_for(layout, max_iter: int = 500, tol: float = 1e-8):
    key = _key(layout) + (max_iter, tol)
    with _LOCK:
        entry = _CACHE.get(key)
        if entry is None:
            entry = _build(layout, max_iter, tol)
            _CACHE[key] = entry
    return entry


def rate_offsets(layout) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper bounds on the rate rows: du_min <= du, and -du >= -du_max."""
    N, dt = layout["N"], layout["dt"]
    lo = []
    for a in layout["agents"]:
        rlo, rhi = a.limits.rate_bounds(dt)
        lo += [np.tile(rlo, N), np.tile(-rhi, N)]
    return np.concatenate(lo), np.full(sum(len(v) for v in lo), np.inf)
