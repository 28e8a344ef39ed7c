"""Centralized receding-horizon planner with duality-based polytope avoidance."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import audit, ftcoc_casadi
from .dynamics import ControlInput, Limits, VehicleParams, VehicleState, step, step_array, step_jacobian
from .formation import PlatoonConfiguration, build_reference
from .geometry import OrientedPolytope, footprint_from_pose, optimal_certificate
from .nlp import NlpProblem, NlpSolution, solve_nlp

log = logging.getLogger(__name__)

COLD_DUAL = 0.05


class ManeuverInfeasible(RuntimeError):
    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


@dataclass
class PlannerConfig:
    N: int = 5
    dt: float = 0.2
    T: int = 120
    d_min: float = 0.3
    v_max: float = 20.0
    rho: float = 0.25
    Qz: tuple = (10.0, 2.0, 10.0, 5.0)
    Qu: tuple = (1.0, 10.0)
    Qdu: tuple = (10.0, 100.0)
    kkt_tol: float = 1e-4
    max_iter: int = 200

    def __post_init__(self):
        if not 0 < self.N < self.T:
            raise ValueError("need 0 < N < T")
        if self.d_min < 0 or self.dt <= 0:
            raise ValueError("need d_min >= 0 and dt > 0")
        if min(self.Qz) < 0 or min(self.Qu) < 0 or min(self.Qdu) < 0:
            raise ValueError("weights must be nonnegative")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict | None) -> "PlannerConfig":
        d = dict(d or {})
        for k in ("Qz", "Qu", "Qdu"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown planner options {sorted(unknown)}")
        return cls(**d)


@dataclass
class Agent:
    """One controlled vehicle inside an FTCOC."""

    params: VehicleParams
    z0: np.ndarray
    u_prev: np.ndarray
    ref: np.ndarray  # (N+1, 4)
    qz: np.ndarray
    qu: np.ndarray
    qdu: np.ndarray
    limits: Limits


@dataclass
class FleetTrajectory:
    vehicle_ids: list
    params: list
    states: np.ndarray  # (n, T+1, 4)
    inputs: np.ndarray  # (n, T, 2)
    metadata: dict = field(default_factory=dict)
    # wall-clock solver statistics; not serialized so stored tables stay reproducible
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def T(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dt(self) -> float:
        return float(self.metadata["dt"])

    def index_of(self, vid) -> int:
        return [str(v) for v in self.vehicle_ids].index(str(vid))

    def obstacles(self) -> list[OrientedPolytope]:
        return [OrientedPolytope(np.array(o["A"]), np.array(o["b"])) for o in self.metadata.get("obstacles", [])]


# ---------------------------------------------------------------------------
# FTCOC construction


class _Layout:
    def __init__(self, n_agents: int, N: int, pair_dims):
        self.N = N
        off = 0
        self.z, self.u = [], []
        for _ in range(n_agents):
            self.z.append(slice(off, off + 4 * N))
            off += 4 * N
            self.u.append(slice(off, off + 2 * N))
            off += 2 * N
        self.n_primal = off
        self.lam, self.mu, self.s = [], [], []
        for mi, mj in pair_dims:
            lam_k, mu_k, s_k = [], [], []
            for _ in range(N + 1):
                lam_k.append(slice(off, off + mi))
                off += mi
                mu_k.append(slice(off, off + mj))
                off += mj
                s_k.append(slice(off, off + 2))
                off += 2
            self.lam.append(lam_k)
            self.mu.append(mu_k)
            self.s.append(s_k)
        self.n = off


def _rot(psi):
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]]), np.array([[-s, -c], [c, -s]])


def _half(params: VehicleParams):
    return np.array([params.len / 2, params.w / 2, params.len / 2, params.w / 2])


def build_ftcoc_problem(
    agents: list[Agent],
    pairs: list[tuple[int, int]],
    obstacles: list[OrientedPolytope],
    N: int,
    dt: float,
    d_min: float,
    kkt_tol: float = 1e-4,
    max_iter: int = 200,
) -> NlpProblem:
    """Assemble the FTCOC NLP.

    Variables per agent: predicted states z(1..N) and inputs u(0..N-1). Per
    avoidance stream (agent pair or agent/obstacle) and per k = 0..N:
    lam, mu, s. Longitudinal coordinates are shifted to a local frame so that
    the bilinear dual terms stay well conditioned.
    """
    n_a = len(agents)
    x_shift = float(np.mean([a.z0[0] for a in agents]))
    shift4 = np.array([x_shift, 0.0, 0.0, 0.0])
    z0 = [a.z0 - shift4 for a in agents]
    refs = [a.ref - shift4 for a in agents]
    obs = [OrientedPolytope(P.A, P.b - P.A[:, 0] * x_shift) for P in obstacles]

    # stream = (i, j, obstacle index or None)
    streams = [(i, j, None) for i, j in pairs] + [(i, None, o) for i in range(n_a) for o in range(len(obs))]
    dims = [(4, 4 if j is not None else len(obs[o].b)) for i, j, o in streams]
    L = _Layout(n_a, N, dims)
    halves = [_half(a.params) for a in agents]

    # bounds
    lb = np.full(L.n, -np.inf)
    ub = np.full(L.n, np.inf)
    for i, a in enumerate(agents):
        zmin = a.limits.z_min - shift4
        zmax = a.limits.z_max - shift4
        lb[L.z[i]] = np.tile(zmin, N)
        ub[L.z[i]] = np.tile(zmax, N)
        lb[L.u[i]] = np.tile(a.limits.u_min, N)
        ub[L.u[i]] = np.tile(a.limits.u_max, N)
    for p in range(len(streams)):
        for k in range(N + 1):
            lb[L.lam[p][k]] = 0.0
            lb[L.mu[p][k]] = 0.0
            lb[L.s[p][k]] = -1.0
            ub[L.s[p][k]] = 1.0

    qz2 = [a.qz ** 2 for a in agents]
    qu2 = [a.qu ** 2 for a in agents]
    qdu2 = [a.qdu ** 2 for a in agents]
    const_cost = sum(float(np.sum(qz2[i] * (z0[i] - refs[i][0]) ** 2)) for i in range(n_a))

    def states_of(x, i):
        return x[L.z[i]].reshape(N, 4)

    def inputs_of(x, i):
        return x[L.u[i]].reshape(N, 2)

    def objective(x):
        f = const_cost
        for i in range(n_a):
            Z, U = states_of(x, i), inputs_of(x, i)
            f += np.sum(qz2[i] * (Z - refs[i][1:]) ** 2)
            f += np.sum(qu2[i] * U ** 2)
            dU = np.diff(np.vstack([agents[i].u_prev, U]), axis=0)
            f += np.sum(qdu2[i] * dU ** 2)
        return float(f)

    def gradient(x):
        g = np.zeros(L.n)
        for i in range(n_a):
            Z, U = states_of(x, i), inputs_of(x, i)
            g[L.z[i]] = (2 * qz2[i] * (Z - refs[i][1:])).ravel()
            dU = np.diff(np.vstack([agents[i].u_prev, U]), axis=0)
            gd = 2 * qdu2[i] * dU
            gu = 2 * qu2[i] * U + gd
            gu[:-1] -= gd[1:]
            g[L.u[i]] = gu.ravel()
        return g

    n_dyn = 4 * N * n_a
    n_dual_eq = sum(4 * (N + 1) for _ in streams)
    n_eq = n_dyn + n_dual_eq
    n_rate = 4 * N * n_a
    n_ineq = n_rate + 2 * (N + 1) * len(streams)

    def state_at(x, i, k):
        """(state, column offset or None) of agent i at horizon step k."""
        if k == 0:
            return z0[i], None
        start = L.z[i].start + 4 * (k - 1)
        return x[start:start + 4], start

    def eq(x):
        out = np.empty(n_eq)
        r = 0
        for i, a in enumerate(agents):
            Z, U = states_of(x, i), inputs_of(x, i)
            prev = z0[i]
            for k in range(N):
                out[r:r + 4] = Z[k] - step_array(a.params, prev, U[k], dt)
                prev = Z[k]
                r += 4
        for p, (i, j, o) in enumerate(streams):
            for k in range(N + 1):
                zi, _ = state_at(x, i, k)
                lam, mu, s = x[L.lam[p][k]], x[L.mu[p][k]], x[L.s[p][k]]
                Ri, _ = _rot(zi[2])
                out[r:r + 2] = Ri @ (lam[:2] - lam[2:]) + s
                if j is None:
                    out[r + 2:r + 4] = obs[o].A.T @ mu - s
                else:
                    zj, _ = state_at(x, j, k)
                    Rj, _ = _rot(zj[2])
                    out[r + 2:r + 4] = Rj @ (mu[:2] - mu[2:]) - s
                r += 4
        return out

    def eq_jac(x):
        J = np.zeros((n_eq, L.n))
        r = 0
        for i, a in enumerate(agents):
            Z, U = states_of(x, i), inputs_of(x, i)
            prev = z0[i]
            for k in range(N):
                Jz, Ju = step_jacobian(a.params, prev, U[k], dt)
                zc = L.z[i].start + 4 * k
                J[r:r + 4, zc:zc + 4] = np.eye(4)
                if k > 0:
                    J[r:r + 4, zc - 4:zc] = -Jz
                uc = L.u[i].start + 2 * k
                J[r:r + 4, uc:uc + 2] = -Ju
                prev = Z[k]
                r += 4
        for p, (i, j, o) in enumerate(streams):
            for k in range(N + 1):
                zi, ci = state_at(x, i, k)
                lam, mu = x[L.lam[p][k]], x[L.mu[p][k]]
                ls, ms, ss = L.lam[p][k], L.mu[p][k], L.s[p][k]
                Ri, dRi = _rot(zi[2])
                J[r:r + 2, ls.start:ls.start + 2] = Ri
                J[r:r + 2, ls.start + 2:ls.stop] = -Ri
                J[r:r + 2, ss] = np.eye(2)
                if ci is not None:
                    J[r:r + 2, ci + 2] = dRi @ (lam[:2] - lam[2:])
                if j is None:
                    J[r + 2:r + 4, ms] = obs[o].A.T
                else:
                    zj, cj = state_at(x, j, k)
                    Rj, dRj = _rot(zj[2])
                    J[r + 2:r + 4, ms.start:ms.start + 2] = Rj
                    J[r + 2:r + 4, ms.start + 2:ms.stop] = -Rj
                    if cj is not None:
                        J[r + 2:r + 4, cj + 2] = dRj @ (mu[:2] - mu[2:])
                J[r + 2:r + 4, ss] = -np.eye(2)
                r += 4
        return J

    rate_lo = [a.limits.rate_bounds(dt)[0] for a in agents]
    rate_hi = [a.limits.rate_bounds(dt)[1] for a in agents]

    def _b_dot(zi, half, w):
        """b(z)^T w for a footprint, plus d/d(x, y, psi) and d/dw."""
        R, dR = _rot(zi[2])
        v = w[:2] - w[2:]
        Rv = R @ v
        val = half @ w + Rv @ zi[:2]
        dpos = Rv
        dpsi = (dR @ v) @ zi[:2]
        dw_pos = np.concatenate([R.T @ zi[:2], -(R.T @ zi[:2])])
        return val, dpos, dpsi, half + dw_pos

    def ineq(x):
        out = np.empty(n_ineq)
        r = 0
        for i, a in enumerate(agents):
            U = inputs_of(x, i)
            dU = np.diff(np.vstack([a.u_prev, U]), axis=0)
            out[r:r + 2 * N] = (dU - rate_lo[i]).ravel()
            out[r + 2 * N:r + 4 * N] = (rate_hi[i] - dU).ravel()
            r += 4 * N
        for p, (i, j, o) in enumerate(streams):
            for k in range(N + 1):
                zi, _ = state_at(x, i, k)
                lam, mu, s = x[L.lam[p][k]], x[L.mu[p][k]], x[L.s[p][k]]
                bi, *_ = _b_dot(zi, halves[i], lam)
                if j is None:
                    bj = obs[o].b @ mu
                else:
                    zj, _ = state_at(x, j, k)
                    bj, *_ = _b_dot(zj, halves[j], mu)
                out[r] = -bi - bj - d_min
                out[r + 1] = 1.0 - s @ s
                r += 2
        return out

    rate_jac = np.zeros((n_rate, L.n))
    r = 0
    for i in range(n_a):
        base = L.u[i].start
        for sign, off in ((1.0, 0), (-1.0, 2 * N)):
            for k in range(N):
                for c in range(2):
                    row = r + off + 2 * k + c
                    rate_jac[row, base + 2 * k + c] = sign
                    if k > 0:
                        rate_jac[row, base + 2 * (k - 1) + c] = -sign
        r += 4 * N

    def ineq_jac(x):
        J = np.zeros((n_ineq, L.n))
        J[:n_rate] = rate_jac
        r = n_rate
        for p, (i, j, o) in enumerate(streams):
            for k in range(N + 1):
                zi, ci = state_at(x, i, k)
                lam, mu, s = x[L.lam[p][k]], x[L.mu[p][k]], x[L.s[p][k]]
                _, dpos, dpsi, dlam = _b_dot(zi, halves[i], lam)
                J[r, L.lam[p][k]] = -dlam
                if ci is not None:
                    J[r, ci:ci + 2] = -dpos
                    J[r, ci + 2] = -dpsi
                if j is None:
                    J[r, L.mu[p][k]] = -obs[o].b
                else:
                    zj, cj = state_at(x, j, k)
                    _, dpos, dpsi, dmu = _b_dot(zj, halves[j], mu)
                    J[r, L.mu[p][k]] = -dmu
                    if cj is not None:
                        J[r, cj:cj + 2] = -dpos
                        J[r, cj + 2] = -dpsi
                J[r + 1, L.s[p][k]] = -2 * s
                r += 2
        return J

    problem = NlpProblem(
        n=L.n, lb=lb, ub=ub,
        objective=objective, gradient=gradient,
        eq=eq, eq_jac=eq_jac, ineq=ineq, ineq_jac=ineq_jac,
        x_init=np.zeros(L.n),
        layout={"slices": L, "streams": streams, "x_shift": x_shift, "N": N, "dt": dt,
                "agents": agents, "obstacles": obs, "d_min": d_min},
        kkt_tol=kkt_tol, max_iter=max_iter,
    )
    problem.x_init = cold_start(problem)
    if ftcoc_casadi.available():
        problem.ipopt = _ipopt_runner(problem, n_eq, n_rate, n_ineq - n_rate)
    return problem


def _ipopt_runner(problem: NlpProblem, n_eq: int, n_rate: int, n_pair: int):
    layout = problem.layout

    def run(x0):
        solver, n_eq_sym, n_in_sym = ftcoc_casadi.solver_for(layout, max_iter=max(problem.max_iter, 500))
        assert n_eq_sym == n_eq and n_in_sym == n_rate + n_pair
        rate_lo, _ = ftcoc_casadi.rate_offsets(layout)
        lbg = np.concatenate([np.zeros(n_eq), rate_lo, np.zeros(n_pair)])
        ubg = np.concatenate([np.zeros(n_eq), np.full(n_rate + n_pair, np.inf)])
        res = solver(x0=x0, p=ftcoc_casadi.parameters(layout), lbx=problem.lb, ubx=problem.ub, lbg=lbg, ubg=ubg)
        stats = solver.stats()
        lam_g = np.asarray(res["lam_g"]).ravel()
        return (np.asarray(res["x"]).ravel(), lam_g[:n_eq], lam_g[n_eq:], np.asarray(res["lam_x"]).ravel(),
                int(stats.get("iter_count", 0)), str(stats.get("return_status", "")))

    return run


def _footprint_local(z, params):
    return footprint_from_pose(z[0], z[1], z[2], params.len, params.w)


def _fill_duals(problem: NlpProblem, x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Set every dual block to the exact separation certificate of the given primal part."""
    lay = problem.layout
    L, N = lay["slices"], lay["N"]
    agents = lay["agents"]
    x = x.copy()
    for p, (i, j, o) in enumerate(lay["streams"]):
        for k in range(N + 1):
            zi = agents[i].z0 - np.array([lay["x_shift"], 0, 0, 0]) if k == 0 else x[L.z[i]].reshape(N, 4)[k - 1]
            Pi = _footprint_local(zi, agents[i].params)
            if j is None:
                Pj = lay["obstacles"][o]
            else:
                zj = agents[j].z0 - np.array([lay["x_shift"], 0, 0, 0]) if k == 0 else x[L.z[j]].reshape(N, 4)[k - 1]
                Pj = _footprint_local(zj, agents[j].params)
            cert = optimal_certificate(Pi, Pj)
            if not np.any(cert.s):
                x[L.lam[p][k]] = COLD_DUAL
                x[L.mu[p][k]] = COLD_DUAL
                x[L.s[p][k]] = 0.0
            else:
                x[L.lam[p][k]] = scale * cert.lam
                x[L.mu[p][k]] = scale * cert.mu
                x[L.s[p][k]] = scale * cert.s
    return x


def cold_start(problem: NlpProblem, inputs: list[np.ndarray] | None = None) -> np.ndarray:
    """Primal guess by rolling out held previous inputs; duals from exact certificates."""
    lay = problem.layout
    L, N, dt = lay["slices"], lay["N"], lay["dt"]
    x = np.zeros(problem.n)
    for i, a in enumerate(lay["agents"]):
        U = np.tile(a.u_prev, (N, 1)) if inputs is None else inputs[i]
        U = np.clip(U, a.limits.u_min, a.limits.u_max)
        z = a.z0 - np.array([lay["x_shift"], 0, 0, 0])
        Z = []
        for k in range(N):
            z = step_array(a.params, z, U[k], dt)
            Z.append(z)
        x[L.z[i]] = np.array(Z).ravel()
        x[L.u[i]] = U.ravel()
    return _fill_duals(problem, x)


def unpack(problem: NlpProblem, x: np.ndarray) -> dict:
    """Global-frame predicted states (N+1 rows incl. the current state), inputs and duals."""
    lay = problem.layout
    L, N = lay["slices"], lay["N"]
    shift4 = np.array([lay["x_shift"], 0, 0, 0])
    states, inputs = [], []
    for i, a in enumerate(lay["agents"]):
        Z = x[L.z[i]].reshape(N, 4) + shift4
        states.append(np.vstack([a.z0, Z]))
        inputs.append(x[L.u[i]].reshape(N, 2).copy())
    duals = []
    for p in range(len(lay["streams"])):
        duals.append([(x[L.lam[p][k]].copy(), x[L.mu[p][k]].copy(), x[L.s[p][k]].copy()) for k in range(N + 1)])
    return {"states": states, "inputs": inputs, "duals": duals}


def shifted_guess(problem: NlpProblem, previous: dict) -> np.ndarray:
    """Warm start: previous solution shifted one step, last entry repeated."""
    lay = problem.layout
    L, N = lay["slices"], lay["N"]
    shift4 = np.array([lay["x_shift"], 0, 0, 0])
    x = np.zeros(problem.n)
    for i, a in enumerate(lay["agents"]):
        Zp = previous["states"][i]  # N+1 rows, global
        Up = previous["inputs"][i]
        U = np.vstack([Up[1:], Up[-1:]])
        last = step_array(a.params, Zp[-1], U[-1], lay["dt"])
        Z = np.vstack([Zp[2:], last[None, :]])
        x[L.z[i]] = (Z - shift4).ravel()
        x[L.u[i]] = U.ravel()
    for p in range(len(lay["streams"])):
        d = previous["duals"][p]
        d = d[1:] + d[-1:]
        for k in range(N + 1):
            x[L.lam[p][k]], x[L.mu[p][k]], x[L.s[p][k]] = d[k]
    return x


def build_ftcoc(states, refs, obstacles, cfg: PlannerConfig, params, u_prev=None, limits: Limits | None = None) -> NlpProblem:
    """FTCOC for a fleet: ``states`` (n, 4) current states, ``refs`` (n, N+1, 4) reference windows."""
    n = len(states)
    params = params if isinstance(params, (list, tuple)) else [params] * n
    limits = limits or Limits()
    u_prev = np.zeros((n, 2)) if u_prev is None else np.asarray(u_prev, dtype=float)
    agents = [
        Agent(params[i], np.asarray(states[i], float), u_prev[i], np.asarray(refs[i], float),
              np.array(cfg.Qz, float), np.array(cfg.Qu, float), np.array(cfg.Qdu, float), limits)
        for i in range(n)
    ]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return build_ftcoc_problem(agents, pairs, list(obstacles), cfg.N, cfg.dt, cfg.d_min, cfg.kkt_tol, cfg.max_iter)


def solve_step(problem: NlpProblem, previous: dict | None) -> NlpSolution:
    """Warm-started solve with one cold-start retry; both attempts are logged."""
    if previous is not None:
        sol = solve_nlp(problem, shifted_guess(problem, previous))
        if sol.ok:
            return sol
        log.info("warm-started solve failed (%s); retrying cold", sol.message)
    return solve_nlp(problem, problem.x_init)


# ---------------------------------------------------------------------------
# closed loop


def initial_fleet(ci: PlatoonConfiguration, refs: dict, v0: float) -> dict:
    return {vid: np.array([r.states[0, 0], r.states[0, 1], 0.0, v0]) for vid, r in refs.items()}


def plan_maneuver(ci, cf, scenario, cfg: PlannerConfig | None = None, rho=None) -> FleetTrajectory:
    """Closed-loop receding-horizon simulation of the FTCOC from ``ci`` to ``cf``.

    Raises :class:`ManeuverInfeasible` if any step fails; partial maneuvers are discarded.
    """
    cfg = cfg or scenario.planner
    rho = cfg.rho if rho is None else rho
    ids = list(ci.ids())
    params = [scenario.params_for(v) for v in ids]
    limits = scenario.planner_limits()
    refs = build_reference(ci, cf, rho, cfg.v_max, cfg.T, cfg.dt, scenario.road, params[0],
                           origin_x=scenario.origin_x, x_mode=scenario.x_reference)
    v0 = cfg.v_max if scenario.v0 is None else scenario.v0
    start = initial_fleet(ci, refs, v0)
    obstacles = scenario.obstacle_polytopes()

    z = np.array([start[v] for v in ids])
    violations = audit.fleet_violations(z[None], params, obstacles, cfg.d_min, tol=0.0)
    if violations:
        t, a, b, d = violations[0]
        raise ManeuverInfeasible(
            f"initial footprints {ids[a]} / {b if isinstance(b, str) else ids[b]} are {d:.4f} m apart, "
            f"below d_min={cfg.d_min}", 0)

    n, T = len(ids), cfg.T
    states = np.zeros((n, T + 1, 4))
    inputs = np.zeros((n, T, 2))
    states[:, 0] = z
    u_prev = np.zeros((n, 2))
    previous = None
    stats = {"iterations": [], "solve_time": []}
    for t in range(T):
        window = [refs[v].window(t, cfg.N) for v in ids]
        problem = build_ftcoc(states[:, t], window, obstacles, cfg, params, u_prev, limits)
        tic = time.perf_counter()
        sol = solve_step(problem, previous)
        stats["solve_time"].append(time.perf_counter() - tic)
        stats["iterations"].append(sol.iterations)
        if not sol.ok:
            raise ManeuverInfeasible(
                f"FTCOC failed at step {t}: {sol.message} (KKT residual {sol.kkt_residual:.2e})", t)
        previous = unpack(problem, sol.x)
        for i in range(n):
            u = previous["inputs"][i][0]
            inputs[i, t] = u
            nxt = step(params[i], VehicleState.from_array(states[i, t]), ControlInput.from_array(u), cfg.dt)
            states[i, t + 1] = nxt.as_array()
        u_prev = inputs[:, t].copy()
        log.debug("t=%d iters=%d obj=%.4g", t, sol.iterations, sol.objective)

    metadata = {
        "rho": float(rho) if not isinstance(rho, dict) else None,
        "rho_per_vehicle": [float(rho[v] if isinstance(rho, dict) else rho) for v in ids],
        "d_min": cfg.d_min,
        "dt": cfg.dt,
        "T": T,
        "N": cfg.N,
        "v_max": cfg.v_max,
        "weights": {"Qz": list(cfg.Qz), "Qu": list(cfg.Qu), "Qdu": list(cfg.Qdu)},
        "ci": ci.config_id,
        "cf": cf.config_id,
        "obstacles": [{"A": P.A.tolist(), "b": P.b.tolist()} for P in obstacles],
        "reference": {str(v): refs[v].states.tolist() for v in ids},
    }
    solver_stats = {"mean_time": float(np.mean(stats["solve_time"])),
                    "max_time": float(np.max(stats["solve_time"])),
                    "mean_iterations": float(np.mean(stats["iterations"]))}
    traj = FleetTrajectory(ids, params, states, inputs, metadata, solver_stats)
    bad = audit.fleet_violations(states, params, obstacles, cfg.d_min, tol=audit.DIST_TOL)
    if bad:
        t, a, b, d = bad[0]
        raise ManeuverInfeasible(f"safety audit failed at step {t}: distance {d:.5f}", t)
    return traj
