"""Scenario files: road, fleet, limits, solver settings, configurations and obstacles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dynamics import Limits, VehicleParams
from .formation import PlatoonConfiguration, RoadGeometry, expand
from .geometry import footprint_from_pose
from .planner import PlannerConfig


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    road: RoadGeometry = field(default_factory=RoadGeometry)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    fleet: dict = field(default_factory=dict)  # vehicle id -> VehicleParams
    limits: Limits = field(default_factory=Limits)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    follower: dict = field(default_factory=dict)
    configs: dict = field(default_factory=dict)  # name -> PlatoonConfiguration
    pairs: list = field(default_factory=list)  # (name_i, name_f)
    rho_grid: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    max_entries: int = 9
    obstacles: list = field(default_factory=list)  # dicts x, y, psi, len, w
    origin_x: float = 0.0
    v0: float | None = None
    x_reference: str = "blend"
    traffic: str | None = None
    name: str = "scenario"

    def params_for(self, vid) -> VehicleParams:
        return self.fleet.get(str(vid), self.vehicle)

    def planner_limits(self) -> Limits:
        w = max([self.vehicle.w] + [p.w for p in self.fleet.values()])
        return self.limits.with_lateral_road(w / 2, self.road.n_lanes * self.road.lane_width - w / 2)

    def obstacle_polytopes(self):
        return [
            footprint_from_pose(o["x"], o["y"], o.get("psi", 0.0), o["len"], o["w"])
            for o in self.obstacles
        ]

    def config(self, name: str) -> PlatoonConfiguration:
        try:
            return self.configs[name]
        except KeyError:
            raise ScenarioError(f"unknown configuration {name!r}") from None

    def initial_positions(self, cfg: PlatoonConfiguration) -> dict:
        pts = expand(cfg, self.road, self.vehicle)
        return {vid: (x + self.origin_x, y) for vid, (x, y) in zip(cfg.ids(), pts)}


def _params(d: dict | None, base: VehicleParams) -> VehicleParams:
    if not d:
        return base
    merged = {**base.__dict__, **d}
    return VehicleParams(**{k: float(merged[k]) for k in ("len", "w", "lf", "lr")})


def scenario_from_dict(data: dict) -> Scenario:
    try:
        road = RoadGeometry(**data.get("road", {}))
        vehicle = _params(data.get("vehicle"), VehicleParams())
        fleet = {}
        for entry in data.get("fleet", []):
            fleet[str(entry["id"])] = _params(entry.get("params"), vehicle)
        configs = {
            name: PlatoonConfiguration.from_dict(c, name=name) for name, c in data.get("configs", {}).items()
        }
        pairs = [tuple(p) for p in data.get("pairs", [])]
        for a, b in pairs:
            for name in (a, b):
                if name not in configs:
                    raise ScenarioError(f"pair references unknown configuration {name!r}")
        obstacles = []
        for o in data.get("obstacles", []):
            missing = {"x", "y", "len", "w"} - set(o)
            if missing:
                raise ScenarioError(f"obstacle missing fields {sorted(missing)}")
            obstacles.append({k: float(v) for k, v in o.items()})
        sc = Scenario(
            road=road,
            vehicle=vehicle,
            fleet=fleet,
            limits=Limits.from_dict(data.get("limits")),
            planner=PlannerConfig.from_dict(data.get("planner")),
            follower=dict(data.get("follower", {})),
            configs=configs,
            pairs=pairs,
            rho_grid=[float(r) for r in data.get("rho_grid", Scenario().rho_grid)],
            max_entries=int(data.get("max_entries", 9)),
            obstacles=obstacles,
            origin_x=float(data.get("origin_x", 0.0)),
            v0=None if data.get("v0") is None else float(data["v0"]),
            x_reference=str(data.get("x_reference", "blend")),
            traffic=data.get("traffic"),
            name=str(data.get("name", "scenario")),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc
    if any(not 0 < r < 1 for r in sc.rho_grid):
        raise ScenarioError("rho_grid values must lie in (0, 1)")
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    sc = scenario_from_dict(data)
    if sc.traffic and not Path(sc.traffic).is_absolute():
        sc.traffic = str(path.parent / sc.traffic)
    return sc


def builtin_path(name: str) -> Path:
    """Path of a scenario or schedule file shipped with the package (``data/<name>.json``)."""
    path = Path(str(resources.files("platoon") / "data" / f"{name}.json"))
    if not path.exists():
        raise ScenarioError(f"no built-in file {name!r}")
    return path
