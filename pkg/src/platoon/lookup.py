"""Maneuver look-up table: keyed storage of precomputed reconfigurations and its JSON format."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import VehicleParams
from .formation import PlatoonConfiguration
from .planner import FleetTrajectory, ManeuverInfeasible, plan_maneuver

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_MAX_ENTRIES = 9


class KeyNotFound(KeyError):
    """The (ci, cf) pair was never registered in the table."""


@dataclass
class TableEntry:
    index: int
    rho: float
    trajectory: FleetTrajectory


@dataclass
class ManeuverTable:
    entries: dict = field(default_factory=dict)  # (ci_id, cf_id) -> list[TableEntry]
    configs: dict = field(default_factory=dict)  # config id -> PlatoonConfiguration
    warnings: list = field(default_factory=list)
    max_entries: int = DEFAULT_MAX_ENTRIES
    format_version: int = FORMAT_VERSION

    def register(self, cfg: PlatoonConfiguration) -> str:
        cid = cfg.config_id
        known = self.configs.get(cid)
        if known is None:
            self.configs[cid] = cfg
        elif tuple(map(str, known.ids())) != tuple(map(str, cfg.ids())):
            raise ValueError(f"configuration {cid} registered twice with different vehicle orders")
        return cid

    def resolve(self, key: str) -> str:
        """Accept a config id or a registered configuration name."""
        if key in self.configs:
            return key
        named = [cid for cid, c in self.configs.items() if c.name == key]
        if len(named) == 1:
            return named[0]
        raise KeyNotFound(f"unknown configuration {key!r}")

    def keys(self) -> list:
        return sorted(self.entries)


def query(table: ManeuverTable, ci_id: str, cf_id: str) -> list[TableEntry]:
    """Stored family for (ci, cf) in index order. Unknown pairs raise :class:`KeyNotFound`."""
    try:
        key = (table.resolve(ci_id), table.resolve(cf_id))
    except KeyNotFound:
        raise KeyNotFound(f"no table entry for ({ci_id}, {cf_id})") from None
    if key not in table.entries:
        raise KeyNotFound(f"no table entry for ({ci_id}, {cf_id})")
    return list(table.entries[key])


# ---------------------------------------------------------------------------
# building


def _plan_one(job):
    ci, cf, rho, scenario, cfg = job
    try:
        return plan_maneuver(ci, cf, scenario, cfg, rho=rho), None
    except ManeuverInfeasible as exc:
        return None, {"rho": rho, "step": exc.step_index, "reason": str(exc)}


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("PLATOON_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def build_table(pairs, rho_grid, scenario, cfg=None, max_entries: int | None = None,
                workers: int | None = None) -> ManeuverTable:
    """Plan every (ci, cf, rho) maneuver; infeasible ones are omitted and logged as warnings.

    Jobs may run in worker processes; results are merged in (pair, rho) order so
    the table does not depend on scheduling.
    """
    rhos = sorted(float(r) for r in rho_grid)
    if any(not 0.0 < r < 1.0 for r in rhos):
        raise ValueError("rho values must lie in (0, 1)")
    table = ManeuverTable(max_entries=max_entries or scenario.max_entries)
    jobs, slots = [], []
    for ci, cf in pairs:
        key = (table.register(ci), table.register(cf))
        table.entries.setdefault(key, [])
        # holding a formation does not depend on when the (empty) lane change happens
        grid = rhos[:1] if key[0] == key[1] else rhos
        for r in grid:
            jobs.append((ci, cf, r, scenario, cfg))
            slots.append(key)

    n_workers = workers or worker_count(len(jobs))
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_plan_one, jobs))
    else:
        results = [_plan_one(j) for j in jobs]

    for key, job, (traj, failure) in zip(slots, jobs, results):
        family = table.entries[key]
        if traj is None:
            table.warnings.append({"ci": key[0], "cf": key[1], **failure})
            log.warning("maneuver %s -> %s at rho=%.3g discarded: %s", key[0], key[1], job[2], failure["reason"])
            continue
        if len(family) >= table.max_entries:
            table.warnings.append({"ci": key[0], "cf": key[1], "rho": job[2], "step": None,
                                   "reason": f"table already holds {table.max_entries} entries"})
            continue
        family.append(TableEntry(len(family) + 1, job[2], traj))
    for key, family in table.entries.items():
        if not family:
            table.warnings.append({"ci": key[0], "cf": key[1], "rho": None, "step": None,
                                   "reason": "no feasible maneuver for any rho"})
            log.warning("pair %s -> %s has no feasible maneuver", *key)
    return table


# ---------------------------------------------------------------------------
# serialization (JSON floats use the shortest round-trip repr, so values survive exactly)


def trajectory_to_dict(traj: FleetTrajectory) -> dict:
    dt = traj.dt
    t = [k * dt for k in range(traj.T + 1)]
    vehicles = []
    for i, vid in enumerate(traj.vehicle_ids):
        S, U = traj.states[i], traj.inputs[i]
        p = traj.params[i]
        vehicles.append({
            "vehicle_id": vid,
            "params": {"len": p.len, "w": p.w, "lf": p.lf, "lr": p.lr},
            "t": t,
            "x": S[:, 0].tolist(),
            "y": S[:, 1].tolist(),
            "psi": S[:, 2].tolist(),
            "v": S[:, 3].tolist(),
            # inputs are applied on [t, t+1); the final state has none
            "a": U[:, 0].tolist() + [None],
            "delta": U[:, 1].tolist() + [None],
        })
    return {"vehicles": vehicles, "metadata": traj.metadata}


def trajectory_from_dict(d: dict) -> FleetTrajectory:
    ids, params, states, inputs = [], [], [], []
    for v in d["vehicles"]:
        ids.append(v["vehicle_id"])
        params.append(VehicleParams(**v["params"]))
        states.append(np.column_stack([v["x"], v["y"], v["psi"], v["v"]]).astype(float))
        inputs.append(np.column_stack([v["a"][:-1], v["delta"][:-1]]).astype(float))
    return FleetTrajectory(ids, params, np.array(states), np.array(inputs).reshape(len(ids), -1, 2),
                           dict(d.get("metadata", {})))


def table_to_dict(table: ManeuverTable) -> dict:
    return {
        "format_version": table.format_version,
        "max_entries": table.max_entries,
        "configs": {cid: cfg.to_dict() for cid, cfg in sorted(table.configs.items())},
        "entries": [
            {
                "ci": ci,
                "cf": cf,
                "maneuvers": [
                    {"index": e.index, "rho": e.rho, "trajectory": trajectory_to_dict(e.trajectory)}
                    for e in table.entries[(ci, cf)]
                ],
            }
            for ci, cf in table.keys()
        ],
        "warnings": table.warnings,
    }


def table_from_dict(d: dict) -> ManeuverTable:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported table format version {version!r}")
    table = ManeuverTable(max_entries=int(d.get("max_entries", DEFAULT_MAX_ENTRIES)),
                          warnings=list(d.get("warnings", [])))
    for cid, c in d["configs"].items():
        cfg = PlatoonConfiguration.from_dict(c)
        if cfg.config_id != cid:
            raise ValueError(f"configuration id {cid} does not match its content")
        table.configs[cid] = cfg
    for item in d["entries"]:
        family = [TableEntry(int(m["index"]), float(m["rho"]), trajectory_from_dict(m["trajectory"]))
                  for m in item["maneuvers"]]
        if [e.index for e in family] != list(range(1, len(family) + 1)):
            raise ValueError(f"entry ({item['ci']}, {item['cf']}) has non-contiguous indices")
        table.entries[(item["ci"], item["cf"])] = family
    return table


def save_table(table: ManeuverTable, path) -> None:
    Path(path).write_text(json.dumps(table_to_dict(table), indent=1, allow_nan=False) + "\n")


def load_table(path) -> ManeuverTable:
    return table_from_dict(json.loads(Path(path).read_text()))
