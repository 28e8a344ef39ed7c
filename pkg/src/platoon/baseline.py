"""Behavior-based benchmark: motion primitives tracked by per-vehicle MPC under a scripted schedule.

No inter-vehicle avoidance constraint is imposed here; traces are audited afterwards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audit
from .dynamics import ControlInput, Limits, VehicleParams, VehicleState, step
from .follower import Follower, FollowerConfig, FollowerError
from .formation import RoadGeometry
from .planner import FleetTrajectory

log = logging.getLogger(__name__)

KINDS = ("slow_down", "cruise", "lane_change", "acc")
TRIGGERS = ("time", "gap", "in_lane")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class MotionPrimitive:
    kind: str
    speed: float | None = None  # cruise / slow_down target speed
    decel: float | None = None  # slow_down deceleration magnitude
    lane: int | None = None  # lane_change target lane
    accel: float = 0.0  # lane_change longitudinal acceleration
    front: object = None  # acc: id of the vehicle ahead
    distance: float | None = None  # acc: desired bumper-to-bumper distance

    def __post_init__(self):
        need = {"cruise": ("speed",), "slow_down": ("speed", "decel"), "lane_change": ("lane",),
                "acc": ("front", "distance")}
        if self.kind not in need:
            raise ScheduleError(f"unknown primitive {self.kind!r}")
        missing = [k for k in need[self.kind] if getattr(self, k) is None]
        if missing:
            raise ScheduleError(f"{self.kind} needs {missing}")
        if self.kind == "slow_down" and self.decel <= 0:
            raise ScheduleError("slow_down deceleration must be positive")
        if self.kind == "acc" and self.distance < 0:
            raise ScheduleError("acc distance must be nonnegative")
        if self.speed is not None and self.speed < 0:
            raise ScheduleError("speed must be nonnegative")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None and not (k == "accel" and v == 0.0)}

    @classmethod
    def from_dict(cls, d: dict) -> "MotionPrimitive":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScheduleError(f"unknown primitive fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Trigger:
    """When a schedule entry becomes active.

    ``time``: simulated time >= ``t``; ``gap``: bumper gap from ``rear`` to
    ``front`` >= ``min_gap``; ``in_lane``: ``vehicle`` within ``tol`` of the
    center of ``lane``.
    """

    kind: str = "time"
    t: float = 0.0
    front: object = None
    rear: object = None
    min_gap: float | None = None
    vehicle: object = None
    lane: int | None = None
    tol: float = 0.2

    def __post_init__(self):
        if self.kind not in TRIGGERS:
            raise ScheduleError(f"unknown trigger {self.kind!r}")
        if self.kind == "gap" and (self.front is None or self.rear is None or self.min_gap is None):
            raise ScheduleError("gap trigger needs front, rear and min_gap")
        if self.kind == "in_lane" and (self.vehicle is None or self.lane is None):
            raise ScheduleError("in_lane trigger needs vehicle and lane")

    def fired(self, time: float, fleet: dict, params: dict, road: RoadGeometry) -> bool:
        if self.kind == "time":
            return time >= self.t - 1e-9
        if self.kind == "gap":
            f, r = fleet[_key(self.front, fleet)], fleet[_key(self.rear, fleet)]
            pf, pr = params[_key(self.front, fleet)], params[_key(self.rear, fleet)]
            return f[0] - r[0] - 0.5 * (pf.len + pr.len) >= self.min_gap
        z = fleet[_key(self.vehicle, fleet)]
        return abs(z[1] - road.lane_center(self.lane)) <= self.tol

    def to_dict(self) -> dict:
        base = Trigger()
        return {k: v for k, v in self.__dict__.items() if k == "kind" or v != getattr(base, k)}

    @classmethod
    def from_dict(cls, d: dict) -> "Trigger":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScheduleError(f"unknown trigger fields {sorted(unknown)}")
        return cls(**d)


def _key(vid, fleet: dict):
    if vid in fleet:
        return vid
    for k in fleet:
        if str(k) == str(vid):
            return k
    raise ScheduleError(f"unknown vehicle {vid!r}")


@dataclass
class PrimitiveSchedule:
    entries: dict  # vehicle id -> list of (Trigger, MotionPrimitive)

    def __post_init__(self):
        for vid, seq in self.entries.items():
            if not seq:
                raise ScheduleError(f"vehicle {vid}: empty schedule")
            first = seq[0][0]
            if first.kind != "time" or first.t != 0.0:
                raise ScheduleError(f"vehicle {vid}: first primitive must trigger at t=0")
            times = [trig.t for trig, _ in seq if trig.kind == "time"]
            if times != sorted(times):
                raise ScheduleError(f"vehicle {vid}: time triggers must be non-decreasing")

    def to_dict(self) -> dict:
        return {"vehicles": [
            {"vehicle_id": vid, "sequence": [{"trigger": t.to_dict(), "primitive": p.to_dict()} for t, p in seq]}
            for vid, seq in self.entries.items()
        ]}

    @classmethod
    def from_dict(cls, d: dict) -> "PrimitiveSchedule":
        try:
            entries = {
                v["vehicle_id"]: [(Trigger.from_dict(e.get("trigger", {})), MotionPrimitive.from_dict(e["primitive"]))
                                  for e in v["sequence"]]
                for v in d["vehicles"]
            }
        except (KeyError, TypeError) as exc:
            raise ScheduleError(f"malformed schedule: {exc}") from None
        return cls(entries)


@dataclass
class BaselineConfig:
    N: int = 8
    dt: float = 0.1
    steps: int = 250
    Qz_speed: tuple = (0.0, 2.0, 10.0, 5.0)  # cruise, slow_down, lane_change: no position target
    Qz_acc: tuple = (0.0, 2.0, 10.0, 5.0)
    acc_gain: float = 0.35  # 1/s: speed offset per metre of distance error
    acc_max_offset: float = 1.0  # m/s: cap on that offset
    Qu: tuple = (1.0, 10.0)
    Qdu: tuple = (10.0, 100.0)
    limits: Limits = field(default_factory=Limits)

    @classmethod
    def from_dict(cls, d: dict | None, limits: Limits | None = None) -> "BaselineConfig":
        d = dict(d or {})
        for k in ("Qz_speed", "Qz_acc", "Qu", "Qdu"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScheduleError(f"unknown baseline options {sorted(unknown)}")
        if limits is not None:
            d.setdefault("limits", limits)
        return cls(**d)


def primitive_reference(z, active: MotionPrimitive, fleet: dict, params: dict, road: RoadGeometry,
                        own: VehicleParams, N: int, dt: float, acc_gain: float = 0.35,
                        acc_max_offset: float = 1.0) -> np.ndarray:
    """Reference window (N+1, 4) synthesized from the active primitive and the fleet snapshot."""
    x, y, _, v = z
    k = np.arange(N + 1) * dt
    ref = np.zeros((N + 1, 4))
    ref[:, 1] = road.lane_center(road.lane_of(y))
    if active.kind == "cruise":
        ref[:, 3] = active.speed
        ref[:, 0] = x + active.speed * k
    elif active.kind == "slow_down":
        ref[:, 3] = np.maximum(active.speed, v - active.decel * k) if v > active.speed else active.speed
        ref[:, 0] = x + np.concatenate([[0.0], np.cumsum(ref[:-1, 3] * dt)])
    elif active.kind == "lane_change":
        ref[:, 1] = road.lane_center(active.lane)
        ref[:, 3] = np.maximum(0.0, v + active.accel * k)
        ref[:, 0] = x + np.concatenate([[0.0], np.cumsum(ref[:-1, 3] * dt)])
    else:
        try:
            key = _key(active.front, fleet)
        except ScheduleError:
            raise ScheduleError(f"acc front vehicle {active.front!r} does not exist") from None
        zf, pf = fleet[key], params[key]
        # constant-distance policy: close the distance error at a rate proportional to it
        error = zf[0] - x - 0.5 * (pf.len + own.len) - active.distance
        ref[:, 3] = max(0.0, zf[3] + np.clip(acc_gain * error, -acc_max_offset, acc_max_offset))
        ref[:, 0] = x + ref[:, 3] * k
    return ref


def _controller_cfg(active: MotionPrimitive, cfg: BaselineConfig) -> FollowerConfig:
    limits = cfg.limits
    if active.kind == "slow_down":
        # the requested deceleration is also the braking bound while slowing down
        u_min = limits.u_min.copy()
        u_min[0] = max(u_min[0], -active.decel)
        limits = Limits(limits.z_min, limits.z_max, u_min, limits.u_max, limits.du_min, limits.du_max)
    qz = cfg.Qz_acc if active.kind == "acc" else cfg.Qz_speed
    return FollowerConfig(N=cfg.N, dt=cfg.dt, Qz=qz, Qu=cfg.Qu, Qdu=cfg.Qdu, limits=limits)


def primitive_step(z, u_prev, active: MotionPrimitive, fleet: dict, params: dict, road: RoadGeometry,
                   cfg: BaselineConfig, own: VehicleParams | None = None,
                   controller: Follower | None = None) -> ControlInput:
    """One MPC input for the active primitive given the current fleet snapshot."""
    own = own or VehicleParams()
    z = np.asarray(z, dtype=float)
    ref = primitive_reference(z, active, fleet, params, road, own, cfg.N, cfg.dt, cfg.acc_gain,
                              cfg.acc_max_offset)
    ctl = controller or Follower(_controller_cfg(active, cfg), own)
    u, _ = ctl.step(z, np.asarray(u_prev, dtype=float), ref)
    return u


def run_schedule(schedule: PrimitiveSchedule, initial: dict, road: RoadGeometry, cfg: BaselineConfig,
                 params: dict | None = None, d_min: float = 0.0) -> FleetTrajectory:
    """Simulate every vehicle stepping its active primitive; the trace carries an audit summary."""
    ids = list(initial)
    for vid in schedule.entries:
        _key(vid, initial)
    params = {v: (params or {}).get(v, VehicleParams()) for v in ids}
    seqs = {v: schedule.entries[_key(v, {k: None for k in schedule.entries})] for v in ids}
    n, T = len(ids), cfg.steps
    states = np.zeros((n, T + 1, 4))
    inputs = np.zeros((n, T, 2))
    states[:, 0] = [np.asarray(initial[v], dtype=float) for v in ids]
    u_prev = np.zeros((n, 2))
    pointer = {v: 0 for v in ids}
    controllers = {}
    events, failures = [], []

    for t in range(T):
        fleet = {v: states[i, t] for i, v in enumerate(ids)}
        time = t * cfg.dt
        for v in ids:
            seq = seqs[v]
            while pointer[v] + 1 < len(seq) and seq[pointer[v] + 1][0].fired(time, fleet, params, road):
                pointer[v] += 1
                controllers.pop(v, None)
                events.append({"t": time, "vehicle_id": v, "primitive": seq[pointer[v]][1].kind})
            if t == 0 and pointer[v] == 0:
                events.append({"t": 0.0, "vehicle_id": v, "primitive": seq[0][1].kind})
        for i, v in enumerate(ids):
            active = seqs[v][pointer[v]][1]
            ctl = controllers.get(v)
            if ctl is None:
                ctl = controllers[v] = Follower(_controller_cfg(active, cfg), params[v])
            try:
                u = primitive_step(states[i, t], u_prev[i], active, fleet, params, road, cfg, params[v], ctl)
                inputs[i, t] = u.as_array()
            except FollowerError as exc:
                # hold the previous input and flag the step
                inputs[i, t] = u_prev[i]
                failures.append({"t": time, "vehicle_id": v, "reason": str(exc)})
        for i, v in enumerate(ids):
            nxt = step(params[v], VehicleState.from_array(states[i, t]), ControlInput.from_array(inputs[i, t]), cfg.dt)
            states[i, t + 1] = nxt.as_array()
        u_prev = inputs[:, t].copy()

    plist = [params[v] for v in ids]
    summary = audit.summarize(states, plist)
    violations = audit.fleet_violations(states, plist, (), d_min) if d_min > 0 else []
    metadata = {
        "kind": "baseline",
        "dt": cfg.dt,
        "T": T,
        "d_min": d_min,
        "events": events,
        "solver_failures": failures,
        "audit": {**summary, "violations": len(violations)},
    }
    if failures:
        log.warning("%d primitive solves failed; previous inputs were held", len(failures))
    return FleetTrajectory(ids, plist, states, inputs, metadata)


def load_schedule(path) -> tuple[PrimitiveSchedule, dict]:
    """Schedule file: ``{"config": name, "baseline": {...}, "vehicles": [...]}``."""
    data = json.loads(Path(path).read_text())
    return PrimitiveSchedule.from_dict(data), data
