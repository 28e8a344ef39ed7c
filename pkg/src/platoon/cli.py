"""Command line: plan tables, select maneuvers, simulate the follower, audit traces, run the baseline.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import audit
from .baseline import BaselineConfig, ScheduleError, load_schedule, run_schedule
from .decision import InsufficientHorizon, TrafficError, decide, load_traffic
from .dynamics import ControlInput, VehicleParams, VehicleState, step
from .follower import FollowerConfig, FollowerError, follow_maneuver
from .formation import ConfigurationError
from .geometry import NumericalFailure
from .lookup import KeyNotFound, build_table, load_table, query, save_table
from .scenario import ScenarioError, load_scenario
from .trace import TraceError, read_trace, write_plot_data, write_trace

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("platoon")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[str, str]:
    if text.count(":") != 1:
        raise argparse.ArgumentTypeError("expected ci:cf")
    a, b = text.split(":")
    return a, b


def _finite(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def _print(obj) -> None:
    print(json.dumps(_finite(obj), indent=1, sort_keys=True))


# ---------------------------------------------------------------------------


def cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    pairs = [(sc.config(a), sc.config(b)) for a, b in sc.pairs]
    table = build_table(pairs, sc.rho_grid, sc)
    save_table(table, args.out)
    empty = []
    for ci, cf in sc.pairs:
        family = query(table, sc.config(ci).config_id, sc.config(cf).config_id)
        print(f"{ci} -> {cf}: {len(family)} maneuver(s), rho = {[e.rho for e in family]}")
        if not family:
            empty.append((ci, cf))
        if args.plot_data:
            for e in family:
                tr = e.trajectory
                write_plot_data(args.plot_data, tr.vehicle_ids, tr.states, tr.inputs, tr.dt,
                                prefix=f"{ci}_{cf}_{e.index}_")
    for w in table.warnings:
        print(f"warning: {w['ci']} -> {w['cf']} rho={w['rho']}: {w['reason']}", file=sys.stderr)
    return EXIT_INFEASIBLE if empty else EXIT_OK


def cmd_decide(args) -> int:
    table = load_table(args.table)
    shared = load_traffic(args.traffic)
    ci, cf = args.pair
    result = decide(ci, cf, table, shared, args.dmin)
    if not result.feasible:
        print("infeasible")
        return EXIT_INFEASIBLE
    print(f"selected index={result.index} rho={result.entry.rho!r}")
    return EXIT_OK


def _select(args, table):
    ci, cf = args.pair
    if args.index is not None:
        family = query(table, ci, cf)
        match = [e for e in family if e.index == args.index]
        if not match:
            raise KeyNotFound(f"no maneuver with index {args.index}")
        return match[0]
    if args.traffic:
        result = decide(ci, cf, table, load_traffic(args.traffic), args.dmin)
        return result.entry
    family = query(table, ci, cf)
    return family[0] if family else None


def completion_time(states, target_y, dt: float, tol: float = 0.1) -> float | None:
    """Earliest time from which every vehicle stays within ``tol`` of its final lateral target."""
    ok = np.all(np.abs(states[:, :, 1] - target_y[:, None]) <= tol, axis=0)
    bad = np.flatnonzero(~ok)
    if len(bad) == 0:
        return 0.0
    if bad[-1] == len(ok) - 1:
        return None
    return float((bad[-1] + 1) * dt)


def cmd_simulate(args) -> int:
    table = load_table(args.table)
    entry = _select(args, table)
    if entry is None:
        print("infeasible")
        return EXIT_INFEASIBLE
    traj = entry.trajectory
    fdict = {}
    limits = None
    if args.scenario:
        sc = load_scenario(args.scenario)
        fdict = dict(sc.follower)
        limits = sc.planner_limits()
    if args.rate:
        fdict["rate_hz"] = args.rate
        fdict.setdefault("horizon", 0.1)
    elif "rate_hz" not in fdict and "dt" not in fdict:
        # at the planner's own step the stored maneuver is exactly trackable
        fdict["dt"] = traj.dt
    cfg = FollowerConfig.from_dict(fdict, limits)
    runs = [follow_maneuver(traj, vid, cfg) for vid in traj.vehicle_ids]
    states = np.array([r.states for r in runs])
    inputs = np.array([r.inputs for r in runs])
    write_trace(args.out, traj.vehicle_ids, states, inputs, cfg.dt)
    if args.plot_data:
        write_plot_data(args.plot_data, traj.vehicle_ids, states, inputs, cfg.dt)
    summary = audit.summarize(states, traj.params, traj.obstacles())
    summary.update({
        "index": entry.index,
        "rho": entry.rho,
        "rate_hz": 1.0 / cfg.dt,
        "max_tracking_error": max(r.max_position_error for r in runs),
        "completion_time": completion_time(states, traj.states[:, -1, 1], cfg.dt),
    })
    _print(summary)
    return EXIT_OK


def _replay_error(traj) -> float:
    worst = 0.0
    for i in range(len(traj.vehicle_ids)):
        z = VehicleState.from_array(traj.states[i, 0])
        for t in range(traj.T):
            z = step(traj.params[i], z, ControlInput.from_array(traj.inputs[i, t]), traj.dt)
            worst = max(worst, float(np.max(np.abs(z.as_array() - traj.states[i, t + 1]))))
    return worst


def cmd_audit(args) -> int:
    reports = []
    if args.trace:
        ids, states, _, _ = read_trace(args.trace)
        sc = load_scenario(args.scenario) if args.scenario else None
        params = [sc.params_for(v) for v in ids] if sc else [VehicleParams()] * len(ids)
        obstacles = sc.obstacle_polytopes() if sc else []
        if args.dmin is None:
            raise ScenarioError("--dmin is required when auditing a trace")
        reports.append(("trace", ids, states, params, obstacles, args.dmin, None))
    else:
        table = load_table(args.table)
        for key in table.keys():
            for e in table.entries[key]:
                tr = e.trajectory
                d = float(tr.metadata["d_min"]) if args.dmin is None else args.dmin
                reports.append((f"{key[0]}->{key[1]}#{e.index}", tr.vehicle_ids, tr.states, tr.params,
                                tr.obstacles(), d, _replay_error(tr)))
    failed = False
    for name, ids, states, params, obstacles, d, replay in reports:
        bad = audit.fleet_violations(states, params, obstacles, d)
        for t, a, b, dist in bad:
            other = b if isinstance(b, str) else ids[b]
            print(f"{name}: violation t={t} pair={ids[a]}/{other} dist={dist:.6f} < {d}")
        replay_bad = replay is not None and replay > 1e-9
        if replay_bad:
            print(f"{name}: stored inputs do not reproduce stored states (max error {replay:.3e})")
        failed |= bool(bad) or replay_bad
        print(f"{name}: {'FAIL' if bad or replay_bad else 'PASS'}")
    return EXIT_INFEASIBLE if failed else EXIT_OK


def cmd_baseline(args) -> int:
    sc = load_scenario(args.scenario)
    schedule, data = load_schedule(args.schedule)
    cfg = BaselineConfig.from_dict(data.get("baseline"), sc.planner_limits())
    ci = sc.config(data["config"]) if "config" in data else sc.config(sc.pairs[0][0])
    v0 = sc.planner.v_max if sc.v0 is None else sc.v0
    initial = {v: np.array([x, y, 0.0, v0]) for v, (x, y) in sc.initial_positions(ci).items()}
    d_min = sc.planner.d_min if args.dmin is None else args.dmin
    tr = run_schedule(schedule, initial, sc.road, cfg, {v: sc.params_for(v) for v in initial}, d_min)
    write_trace(args.out, tr.vehicle_ids, tr.states, tr.inputs, cfg.dt)
    if args.plot_data:
        write_plot_data(args.plot_data, tr.vehicle_ids, tr.states, tr.inputs, cfg.dt)
    _print({"events": tr.metadata["events"], "audit": tr.metadata["audit"],
            "solver_failures": len(tr.metadata["solver_failures"])})
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="platoon", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("plan", help="precompute the maneuver table of a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", default="maneuvers.json")
    s.add_argument("--plot-data", dest="plot_data")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("decide", help="select the first maneuver clear of surrounding traffic")
    s.add_argument("--table", required=True)
    s.add_argument("--traffic", required=True)
    s.add_argument("--pair", required=True, type=_pair)
    s.add_argument("--dmin", type=float)
    s.set_defaults(func=cmd_decide)

    s = sub.add_parser("simulate", help="run the path follower on a stored maneuver")
    s.add_argument("--table", required=True)
    s.add_argument("--pair", required=True, type=_pair)
    s.add_argument("--index", type=int)
    s.add_argument("--traffic")
    s.add_argument("--dmin", type=float)
    s.add_argument("--scenario")
    s.add_argument("--rate", type=float, help="follower sampling rate in Hz")
    s.add_argument("--out", default="trace.csv")
    s.add_argument("--plot-data", dest="plot_data")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("audit", help="recompute footprint distances of a trace or table")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--trace")
    g.add_argument("--table")
    s.add_argument("--dmin", type=float)
    s.add_argument("--scenario")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("baseline", help="run a motion-primitive schedule")
    s.add_argument("--schedule", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--dmin", type=float)
    s.add_argument("--out", default="trace.csv")
    s.add_argument("--plot-data", dest="plot_data")
    s.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ConfigurationError, ScheduleError, TrafficError, TraceError, InsufficientHorizon,
            KeyNotFound, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, FollowerError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
