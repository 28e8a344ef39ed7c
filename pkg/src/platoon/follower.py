"""Single-vehicle MPC path follower tracking a stored target trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlInput, Limits, VehicleParams, VehicleState, step
from .nlp import NlpSolution
from .planner import Agent, build_ftcoc_problem, solve_step, unpack


class FollowerError(RuntimeError):
    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


@dataclass
class FollowerConfig:
    """Tracking MPC settings. The defaults track positions tightly and leave the
    inputs free apart from a light rate penalty, so the stored maneuver (already
    smooth) is reproduced rather than re-shaped."""

    N: int = 5
    dt: float = 0.02
    Qz: tuple = (10.0, 10.0, 1.0, 1.0)
    Qu: tuple = (0.0, 0.0)
    Qdu: tuple = (0.1, 0.1)
    limits: Limits = field(default_factory=Limits)
    kkt_tol: float = 1e-4
    max_iter: int = 200

    def __post_init__(self):
        if self.N < 1 or self.dt <= 0:
            raise ValueError("need N >= 1 and dt > 0")
        if min(self.Qz) < 0 or min(self.Qu) < 0 or min(self.Qdu) < 0:
            raise ValueError("weights must be nonnegative")

    @classmethod
    def for_rate(cls, rate_hz: float, horizon: float = 0.1, **kw) -> "FollowerConfig":
        """Config sampled at ``rate_hz`` whose horizon spans ``horizon`` seconds."""
        dt = 1.0 / rate_hz
        return cls(N=max(1, round(horizon / dt)), dt=dt, **kw)

    @classmethod
    def from_dict(cls, d: dict | None, limits: Limits | None = None) -> "FollowerConfig":
        d = dict(d or {})
        horizon = d.pop("horizon", None)
        if "rate_hz" in d:
            d["dt"] = 1.0 / float(d.pop("rate_hz"))
        if horizon is not None:
            d["N"] = max(1, round(float(horizon) / float(d.get("dt", cls.dt))))
        for k in ("Qz", "Qu", "Qdu"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown follower options {sorted(unknown)}")
        if limits is not None:
            d.setdefault("limits", limits)
        return cls(**d)


def target_window(target: np.ndarray, t: int, N: int, dt: float) -> np.ndarray:
    """Rows t..t+N of ``target``; past its end the final lane, heading and speed are held
    and the position keeps advancing along the final heading."""
    T = len(target) - 1
    out = np.empty((N + 1, target.shape[1]))
    last = target[T]
    for k in range(N + 1):
        idx = t + k
        if idx <= T:
            out[k] = target[idx]
        else:
            out[k] = last
            dist = (idx - T) * dt * last[3]
            out[k, 0] = last[0] + dist * np.cos(last[2])
            out[k, 1] = last[1] + dist * np.sin(last[2])
    return out


def resample(states: np.ndarray, dt_src: float, dt_dst: float) -> np.ndarray:
    """Linear interpolation of x, y, v and of the unwrapped heading onto a new step."""
    states = np.asarray(states, dtype=float)
    if len(states) == 0:
        return states.copy()
    t_src = np.arange(len(states)) * dt_src
    n = int(np.floor(t_src[-1] / dt_dst + 1e-9)) + 1
    t_dst = np.arange(n) * dt_dst
    out = np.empty((n, 4))
    for c in (0, 1, 3):
        out[:, c] = np.interp(t_dst, t_src, states[:, c])
    out[:, 2] = np.interp(t_dst, t_src, np.unwrap(states[:, 2]))
    return out


class Follower:
    """Receding-horizon tracker for one vehicle; keeps its own warm start between steps."""

    def __init__(self, cfg: FollowerConfig, params: VehicleParams | None = None):
        self.cfg = cfg
        self.params = params or VehicleParams()
        self._previous = None

    def reset(self):
        self._previous = None

    def problem(self, z, u_prev, window):
        c = self.cfg
        agent = Agent(self.params, np.asarray(z, float), np.asarray(u_prev, float), np.asarray(window, float),
                      np.array(c.Qz, float), np.array(c.Qu, float), np.array(c.Qdu, float), c.limits)
        return build_ftcoc_problem([agent], [], [], c.N, c.dt, 0.0, c.kkt_tol, c.max_iter)

    def step(self, z, u_prev, window) -> tuple[ControlInput, NlpSolution]:
        prob = self.problem(z, u_prev, window)
        sol = solve_step(prob, self._previous)
        if not sol.ok:
            self._previous = None
            raise FollowerError(f"tracking problem failed: {sol.message}")
        self._previous = unpack(prob, sol.x)
        u = self._previous["inputs"][0][0]
        return ControlInput(float(u[0]), float(u[1])), sol


def follow_step(z, u_prev, target, cfg: FollowerConfig, params: VehicleParams | None = None) -> ControlInput:
    """First optimal input of the tracking problem for the target window ``target`` (N+1 rows)."""
    z = z.as_array() if isinstance(z, VehicleState) else np.asarray(z, float)
    u_prev = u_prev.as_array() if isinstance(u_prev, ControlInput) else np.asarray(u_prev, float)
    return Follower(cfg, params).step(z, u_prev, target)[0]


@dataclass
class FollowTrace:
    states: np.ndarray  # (T+1, 4)
    inputs: np.ndarray  # (T, 2)
    target: np.ndarray  # (T+1, 4)
    dt: float

    @property
    def position_error(self) -> np.ndarray:
        return np.hypot(*(self.states[:, :2] - self.target[: len(self.states), :2]).T)

    @property
    def max_position_error(self) -> float:
        err = self.position_error
        return float(err.max()) if len(err) else 0.0


def follow_run(z0, u0, target, cfg: FollowerConfig, params: VehicleParams | None = None) -> FollowTrace:
    """Closed loop of the follower with the vehicle model along ``target`` (sampled at cfg.dt)."""
    target = np.asarray(target, dtype=float).reshape(-1, 4)
    if len(target) == 0:
        return FollowTrace(np.zeros((0, 4)), np.zeros((0, 2)), target, cfg.dt)
    params = params or VehicleParams()
    z = VehicleState.from_array(z0.as_array() if isinstance(z0, VehicleState) else z0)
    u_prev = np.asarray(u0.as_array() if isinstance(u0, ControlInput) else u0, dtype=float)
    T = len(target) - 1
    states = np.zeros((T + 1, 4))
    inputs = np.zeros((T, 2))
    states[0] = z.as_array()
    ctl = Follower(cfg, params)
    for t in range(T):
        try:
            u, _ = ctl.step(states[t], u_prev, target_window(target, t, cfg.N, cfg.dt))
        except FollowerError as exc:
            raise FollowerError(f"step {t}: {exc}", t) from None
        inputs[t] = u.as_array()
        z = step(params, z, u, cfg.dt)
        states[t + 1] = z.as_array()
        u_prev = inputs[t]
    return FollowTrace(states, inputs, target, cfg.dt)


def follow_maneuver(traj, vehicle, cfg: FollowerConfig) -> FollowTrace:
    """Track one vehicle of a stored maneuver, resampled to the follower rate, from its exact start."""
    i = traj.index_of(vehicle)
    target = resample(traj.states[i], traj.dt, cfg.dt)
    u0 = np.zeros(2)
    return follow_run(traj.states[i, 0], u0, target, cfg, traj.params[i])
