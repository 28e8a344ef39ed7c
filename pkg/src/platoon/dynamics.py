"""Kinematic bicycle model and actuator/state limits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEN = 4.5
DEFAULT_WIDTH = 1.8
DEFAULT_LANE_WIDTH = 3.7


@dataclass(frozen=True)
class VehicleParams:
    len: float = DEFAULT_LEN
    w: float = DEFAULT_WIDTH
    lf: float = 1.35
    lr: float = 1.35

    def __post_init__(self):
        if min(self.len, self.w, self.lf, self.lr) <= 0:
            raise ValueError(f"vehicle dimensions must be positive: {self}")
        if self.lf + self.lr > self.len + 1e-12:
            raise ValueError("wheelbase lf + lr exceeds vehicle length")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    psi: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi, self.v])

    @classmethod
    def from_array(cls, z) -> "VehicleState":
        return cls(float(z[0]), float(z[1]), float(z[2]), float(z[3]))


@dataclass(frozen=True)
class ControlInput:
    a: float = 0.0
    delta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta])

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        return cls(float(u[0]), float(u[1]))


def _arr(values) -> np.ndarray:
    return np.asarray(values, dtype=float)


@dataclass
class Limits:
    """Box limits on states [x, y, psi, v], inputs [a, delta] and input rates.

    Rate bounds are stored per second; :meth:`rate_bounds` converts them to
    per-step bounds for a given sampling time.
    """

    z_min: np.ndarray = field(default_factory=lambda: _arr([-np.inf, -np.inf, -np.pi, 0.0]))
    z_max: np.ndarray = field(default_factory=lambda: _arr([np.inf, np.inf, np.pi, np.inf]))
    u_min: np.ndarray = field(default_factory=lambda: _arr([-4.0, -0.3]))
    u_max: np.ndarray = field(default_factory=lambda: _arr([4.0, 0.3]))
    du_min: np.ndarray = field(default_factory=lambda: _arr([-1.0, -0.2]))
    du_max: np.ndarray = field(default_factory=lambda: _arr([1.0, 0.2]))

    def __post_init__(self):
        for name in ("z_min", "z_max", "u_min", "u_max", "du_min", "du_max"):
            setattr(self, name, _arr(getattr(self, name)).copy())
        for lo, hi in (("z_min", "z_max"), ("u_min", "u_max"), ("du_min", "du_max")):
            if np.any(getattr(self, lo) > getattr(self, hi)):
                raise ValueError(f"{lo} exceeds {hi}")

    def rate_bounds(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        return self.du_min * dt, self.du_max * dt

    def with_lateral_road(self, y_lo: float, y_hi: float) -> "Limits":
        z_min, z_max = self.z_min.copy(), self.z_max.copy()
        z_min[1], z_max[1] = y_lo, y_hi
        return Limits(z_min, z_max, self.u_min, self.u_max, self.du_min, self.du_max)

    def to_dict(self) -> dict:
        def enc(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {k: enc(getattr(self, k)) for k in ("z_min", "z_max", "u_min", "u_max", "du_min", "du_max")}

    @classmethod
    def from_dict(cls, data: dict | None) -> "Limits":
        base = cls()
        if not data:
            return base
        kwargs = {}
        for k in ("z_min", "z_max", "u_min", "u_max", "du_min", "du_max"):
            default = getattr(base, k)
            if k not in data:
                kwargs[k] = default
                continue
            fill = -np.inf if k.endswith("min") else np.inf
            kwargs[k] = [fill if v is None else v for v in data[k]]
            if len(kwargs[k]) != len(default):
                raise ValueError(f"limits.{k} must have {len(default)} entries")
        return cls(**kwargs)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = math.fmod(a + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


def side_slip(params: VehicleParams, delta: float) -> float:
    return math.atan(math.tan(delta) * params.lr / (params.lf + params.lr))


def step(params: VehicleParams, z: VehicleState, u: ControlInput, dt: float) -> VehicleState:
    """One explicit Euler step of the kinematic bicycle model."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    beta = side_slip(params, u.delta)
    x = z.x + dt * z.v * math.cos(z.psi + beta)
    y = z.y + dt * z.v * math.sin(z.psi + beta)
    psi = z.psi + dt * z.v * math.cos(beta) / (params.lf + params.lr) * math.tan(u.delta)
    v = z.v + dt * u.a
    return VehicleState(x, y, wrap_angle(psi), v)


def step_array(params: VehicleParams, z: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """Euler step on plain arrays, without heading wrap (used inside the NLP)."""
    L = params.lf + params.lr
    k = params.lr / L
    tan_d = math.tan(u[1])
    beta = math.atan(k * tan_d)
    c = math.cos(z[2] + beta)
    s = math.sin(z[2] + beta)
    return np.array([
        z[0] + dt * z[3] * c,
        z[1] + dt * z[3] * s,
        z[2] + dt * z[3] * math.cos(beta) * tan_d / L,
        z[3] + dt * u[0],
    ])


def step_jacobian(params: VehicleParams, z: np.ndarray, u: np.ndarray, dt: float):
    """Return (d z+/d z, d z+/d u) of :func:`step_array`."""
    L = params.lf + params.lr
    k = params.lr / L
    tan_d = math.tan(u[1])
    sec2 = 1.0 + tan_d * tan_d
    beta = math.atan(k * tan_d)
    dbeta = k * sec2 / (1.0 + (k * tan_d) ** 2)
    c = math.cos(z[2] + beta)
    s = math.sin(z[2] + beta)
    cb, sb = math.cos(beta), math.sin(beta)
    v = z[3]

    Jz = np.eye(4)
    Jz[0, 2] = -dt * v * s
    Jz[0, 3] = dt * c
    Jz[1, 2] = dt * v * c
    Jz[1, 3] = dt * s
    Jz[2, 3] = dt * cb * tan_d / L

    Ju = np.zeros((4, 2))
    Ju[0, 1] = -dt * v * s * dbeta
    Ju[1, 1] = dt * v * c * dbeta
    Ju[2, 1] = dt * v / L * (cb * sec2 - sb * dbeta * tan_d)
    Ju[3, 0] = dt
    return Jz, Ju


def rollout(params: VehicleParams, z0: VehicleState, inputs, dt: float) -> list[VehicleState]:
    states = [z0]
    for u in inputs:
        if not isinstance(u, ControlInput):
            u = ControlInput.from_array(u)
        states.append(step(params, states[-1], u, dt))
    return states
