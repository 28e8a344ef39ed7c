"""Online selection of a stored maneuver that is clear of the surrounding traffic's shared plans."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import footprint_from_pose, polytope_distance
from .lookup import ManeuverTable, TableEntry, query


class InsufficientHorizon(ValueError):
    pass


class TrafficError(ValueError):
    pass


@dataclass
class SharedPlan:
    """A vehicle's planned states [x, y, psi, (v)] at t = k * dt, k = 0..T'."""

    vehicle_id: object
    states: np.ndarray
    len: float
    w: float
    dt: float | None = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[1] < 3:
            raise TrafficError("plan states need at least x, y, psi")
        if self.len <= 0 or self.w <= 0:
            raise TrafficError("vehicle dimensions must be positive")

    @property
    def T(self) -> int:
        return len(self.states) - 1


def fleet_plans(traj) -> list[SharedPlan]:
    """Platoon vehicles of a stored maneuver in the same form as shared plans."""
    return [
        SharedPlan(vid, traj.states[i], traj.params[i].len, traj.params[i].w, traj.dt)
        for i, vid in enumerate(traj.vehicle_ids)
    ]


def _radius(plan: SharedPlan) -> float:
    return 0.5 * math.hypot(plan.len, plan.w)


def collision_check(a: SharedPlan, b: SharedPlan, d_min: float, T: int | None = None) -> bool:
    """True iff the footprints come closer than ``d_min`` at some t in 0..T.

    ``T`` defaults to ``a``'s horizon; ``b`` may be longer and is truncated.
    Distance exactly ``d_min`` counts as clear.
    """
    T = a.T if T is None else T
    if a.T < T or b.T < T:
        raise InsufficientHorizon(f"plans cover {min(a.T, b.T) + 1} steps, need {T + 1}")
    Sa, Sb = a.states[: T + 1], b.states[: T + 1]
    # bounding circles: clearly separated steps need no polytope distance
    centre = np.hypot(Sa[:, 0] - Sb[:, 0], Sa[:, 1] - Sb[:, 1])
    near = np.flatnonzero(centre - _radius(a) - _radius(b) < d_min)
    for t in near:
        Pa = footprint_from_pose(Sa[t, 0], Sa[t, 1], Sa[t, 2], a.len, a.w)
        Pb = footprint_from_pose(Sb[t, 0], Sb[t, 1], Sb[t, 2], b.len, b.w)
        if polytope_distance(Pa, Pb)[0] < d_min:
            return True
    return False


@dataclass
class Decision:
    feasible: bool
    entry: TableEntry | None = None
    checked: int = 0

    @property
    def index(self) -> int | None:
        return None if self.entry is None else self.entry.index


def candidate_is_clear(entry: TableEntry, shared: list[SharedPlan], d_min: float | None = None) -> bool:
    traj = entry.trajectory
    d = float(traj.metadata["d_min"]) if d_min is None else d_min
    for plan in shared:
        if plan.dt is not None and abs(plan.dt - traj.dt) > 1e-9:
            raise TrafficError(f"shared plan {plan.vehicle_id} sampled at {plan.dt}s, maneuver at {traj.dt}s")
    for mine in fleet_plans(traj):
        for plan in shared:
            if collision_check(mine, plan, d, T=traj.T):
                return False
    return True


def decide(ci_id, cf_id, table: ManeuverTable, shared: list[SharedPlan], d_min: float | None = None) -> Decision:
    """First stored candidate (lowest index) clear of every shared plan, or an infeasible decision."""
    family = query(table, ci_id, cf_id)
    for n, entry in enumerate(family, start=1):
        if candidate_is_clear(entry, shared, d_min):
            return Decision(True, entry, n)
    return Decision(False, None, len(family))


def load_traffic(path) -> list[SharedPlan]:
    """Read ``[{vehicle_id, len, w, states: [{t, x, y, psi, v}]}]`` (t in seconds from maneuver start)."""
    data = json.loads(Path(path).read_text())
    return traffic_from_list(data.get("vehicles", []) if isinstance(data, dict) else data)


def traffic_from_list(items) -> list[SharedPlan]:
    plans = []
    for item in items:
        try:
            rows = item["states"]
            t = np.array([r["t"] for r in rows], dtype=float)
            S = np.array([[r["x"], r["y"], r.get("psi", 0.0), r.get("v", 0.0)] for r in rows], dtype=float)
            vid, length, width = item["vehicle_id"], float(item["len"]), float(item["w"])
        except (KeyError, TypeError) as exc:
            raise TrafficError(f"malformed shared plan: {exc}") from None
        dt = None
        if len(t) > 1:
            steps = np.diff(t)
            dt = float(steps[0])
            if t[0] != 0.0 or dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9:
                raise TrafficError(f"shared plan {vid}: t must start at 0 with a uniform step")
        plans.append(SharedPlan(vid, S, length, width, dt))
    return plans


def traffic_to_list(plans: list[SharedPlan]) -> list[dict]:
    out = []
    for p in plans:
        dt = p.dt or 0.0
        rows = [{"t": k * dt, "x": s[0], "y": s[1], "psi": s[2], "v": s[3] if len(s) > 3 else 0.0}
                for k, s in enumerate(p.states.tolist())]
        out.append({"vehicle_id": p.vehicle_id, "len": p.len, "w": p.w, "states": rows})
    return out
