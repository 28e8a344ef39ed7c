"""Platoon configurations C(n_v, l, p), their coordinate expansion and reference trajectories.

Conventions used throughout:

* lane 1 is the right-most lane, lane ``j`` has its center at ``(j - 0.5) * lane_width``;
* the reference lane is the right-most occupied lane, the reference vehicle is
  its front-most vehicle;
* row ``j`` of ``p`` is ``[d_shift, d_1, ..., d_{n_v-1}]``. Gaps are
  bumper-to-bumper. A lane holds one vehicle plus one per gap entry before the
  first zero entry (trailing zeros mean "no vehicle");
* the origin is the C.G. of the rear-most vehicle in the reference lane.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_LANE_WIDTH, VehicleParams


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RoadGeometry:
    n_lanes: int = 3
    lane_width: float = DEFAULT_LANE_WIDTH

    def __post_init__(self):
        if self.n_lanes < 1 or self.lane_width <= 0:
            raise ValueError(f"invalid road geometry {self}")

    def lane_center(self, lane: int) -> float:
        return (lane - 0.5) * self.lane_width

    def lane_of(self, y: float) -> int:
        return int(math.floor(y / self.lane_width)) + 1


@dataclass(frozen=True)
class PlatoonConfiguration:
    n_v: int
    l: tuple
    p: tuple
    vehicle_ids: tuple | None = field(default=None, compare=False)
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "l", tuple(int(v) for v in self.l))
        rows = tuple(tuple(float(v) for v in row) for row in self.p)
        object.__setattr__(self, "p", rows)
        if self.vehicle_ids is not None:
            object.__setattr__(self, "vehicle_ids", tuple(self.vehicle_ids))
        if self.n_v < 1:
            raise ConfigurationError("n_v must be >= 1")
        if any(v not in (0, 1) for v in self.l) or not any(self.l):
            raise ConfigurationError("l must be a 0/1 vector with at least one occupied lane")
        if len(rows) != len(self.l):
            raise ConfigurationError("p must have one row per lane")
        for j, row in enumerate(rows):
            if len(row) != self.n_v:
                raise ConfigurationError(f"row {j + 1} of p must have n_v={self.n_v} entries")
        if self.vehicle_ids is not None and len(self.vehicle_ids) != self.n_vehicles:
            raise ConfigurationError(
                f"vehicle_ids lists {len(self.vehicle_ids)} ids for {self.n_vehicles} vehicles"
            )

    @property
    def n_lanes(self) -> int:
        return len(self.l)

    def lane_gaps(self, lane: int) -> list[float]:
        """Gaps of the vehicles actually present in ``lane`` (1-based)."""
        row = self.p[lane - 1]
        gaps = []
        for k, d in enumerate(row[1:]):
            if d == 0.0:
                if any(v != 0.0 for v in row[k + 2:]):
                    raise ConfigurationError(
                        f"lane {lane}: zero gap followed by further vehicles is ambiguous"
                    )
                break
            if d < 0:
                raise ConfigurationError(f"lane {lane}: negative gap {d} overlaps footprints")
            gaps.append(d)
        return gaps

    def lane_counts(self) -> list[int]:
        return [1 + len(self.lane_gaps(j + 1)) if occ else 0 for j, occ in enumerate(self.l)]

    @property
    def n_vehicles(self) -> int:
        return sum(self.lane_counts())

    def ids(self) -> tuple:
        if self.vehicle_ids is not None:
            return self.vehicle_ids
        return tuple(range(1, self.n_vehicles + 1))

    def canonical(self) -> dict:
        p = [list(row) if occ else [0.0] * self.n_v for row, occ in zip(self.p, self.l)]
        return {"n_v": self.n_v, "l": list(self.l), "p": p}

    @property
    def config_id(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = self.canonical()
        d["p"] = [list(row) for row in self.p]
        if self.vehicle_ids is not None:
            d["vehicle_ids"] = list(self.vehicle_ids)
        if self.name is not None:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict, name: str | None = None) -> "PlatoonConfiguration":
        try:
            return cls(
                n_v=int(d["n_v"]),
                l=d["l"],
                p=d["p"],
                vehicle_ids=d.get("vehicle_ids"),
                name=d.get("name", name),
            )
        except KeyError as exc:
            raise ConfigurationError(f"configuration is missing field {exc}") from None


def expand(cfg: PlatoonConfiguration, road: RoadGeometry, params: VehicleParams) -> list[tuple[float, float]]:
    """Map a configuration to per-vehicle (x, y) C.G. coordinates relative to the origin."""
    if cfg.n_lanes > road.n_lanes:
        raise ConfigurationError("configuration uses more lanes than the road has")
    counts = cfg.lane_counts()
    occupied = [j + 1 for j, occ in enumerate(cfg.l) if occ]
    ref_lane = occupied[0]

    lanes = {}
    for lane in occupied:
        x_front = -cfg.p[lane - 1][0] if lane != ref_lane else 0.0
        xs = [x_front]
        for gap in cfg.lane_gaps(lane):
            xs.append(xs[-1] - params.len - gap)
        lanes[lane] = xs
    assert sum(len(v) for v in lanes.values()) == sum(counts)

    shift = -lanes[ref_lane][-1]
    order = [ref_lane] + [j for j in occupied if j != ref_lane]
    return [(x + shift, road.lane_center(lane)) for lane in order for x in lanes[lane]]


def reconstruct(coords, n_v: int, n_lanes: int, road: RoadGeometry, params: VehicleParams):
    """Inverse of :func:`expand`: recover (l, p) from vehicle coordinates."""
    by_lane: dict[int, list[float]] = {}
    for x, y in coords:
        by_lane.setdefault(road.lane_of(y), []).append(x)
    l = [1 if j + 1 in by_lane else 0 for j in range(n_lanes)]
    p = [[0.0] * n_v for _ in range(n_lanes)]
    ref_front = max(by_lane[min(by_lane)])
    for lane, xs in by_lane.items():
        xs = sorted(xs, reverse=True)
        row = p[lane - 1]
        row[0] = ref_front - xs[0]
        for k in range(len(xs) - 1):
            row[k + 1] = xs[k] - xs[k + 1] - params.len
    return l, p


def integrate_ref(x0: float, v_max: float, T: int, dt: float) -> np.ndarray:
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    x = np.empty(T + 1)
    x[0] = x0
    for t in range(T):
        x[t + 1] = x[t] + v_max * dt
    return x


@dataclass
class ReferenceTrajectory:
    """Reference states, one row [x, y, psi, v] per step t = 0..T."""

    states: np.ndarray
    switch_index: int
    v_max: float
    dt: float

    @property
    def T(self) -> int:
        return len(self.states) - 1

    def window(self, t: int, N: int) -> np.ndarray:
        """Rows t..t+N; past T the final lane/heading/speed are held and x keeps advancing at v_max."""
        out = np.empty((N + 1, 4))
        T = self.T
        for k in range(N + 1):
            idx = t + k
            if idx <= T:
                out[k] = self.states[idx]
            else:
                out[k] = self.states[T]
                out[k, 0] = self.states[T, 0] + (idx - T) * self.v_max * self.dt
        return out


X_MODES = ("initial", "switch", "blend")


def switch_index(rho: float, T: int) -> int:
    return int(math.floor(rho * T))


def build_reference(
    ci: PlatoonConfiguration,
    cf: PlatoonConfiguration,
    rho,
    v_max: float,
    T: int,
    dt: float,
    road: RoadGeometry,
    params: VehicleParams,
    origin_x: float = 0.0,
    x_mode: str = "blend",
) -> dict:
    """Reference trajectories keyed by vehicle id.

    ``rho`` is a scalar or a mapping vehicle id -> rho. ``x_mode`` selects the
    longitudinal spacing carried by the reference:

    * ``"initial"``: the initial layout for the whole maneuver;
    * ``"switch"``: the final layout (aligned to the initial centroid) from the
      lane-change index on;
    * ``"blend"``: moves linearly from the initial to the aligned final layout
      over steps 0..switch, so gaps open before the lateral reference changes.
    """
    if x_mode not in X_MODES:
        raise ValueError(f"x_mode must be one of {X_MODES}, got {x_mode!r}")
    if ci.n_vehicles != cf.n_vehicles:
        raise ConfigurationError(
            f"initial configuration has {ci.n_vehicles} vehicles, final has {cf.n_vehicles}"
        )
    ids_i, ids_f = ci.ids(), cf.ids()
    if sorted(map(str, ids_i)) != sorted(map(str, ids_f)):
        raise ConfigurationError("initial and final configurations list different vehicle ids")
    pos_i = dict(zip(ids_i, expand(ci, road, params)))
    pos_f = dict(zip(ids_f, expand(cf, road, params)))
    offset = np.mean([p[0] for p in pos_i.values()]) - np.mean([p[0] for p in pos_f.values()])

    refs = {}
    for vid in ids_i:
        r = rho[vid] if isinstance(rho, dict) else rho
        if not 0.0 < r < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {r}")
        k = switch_index(r, T)
        xi, yi = pos_i[vid]
        xf, yf = pos_f[vid]
        states = np.zeros((T + 1, 4))
        states[:, 0] = integrate_ref(origin_x + xi, v_max, T, dt)
        if x_mode != "initial":
            delta = xf + offset - xi
            if x_mode == "blend" and k > 0:
                states[: k + 1, 0] += delta * np.arange(k + 1) / k
            states[k + 1:, 0] += delta
        states[: k + 1, 1] = yi
        states[k + 1:, 1] = yf
        states[:, 3] = v_max
        refs[vid] = ReferenceTrajectory(states, k, v_max, dt)
    return refs
