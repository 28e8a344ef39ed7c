"""Per-step trace CSV (t, vehicle_id, x, y, psi, v, a, delta) and per-panel plot data."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

COLUMNS = ["t", "vehicle_id", "x", "y", "psi", "v", "a", "delta"]


class TraceError(ValueError):
    pass


def _num(v) -> str:
    return repr(float(v))


def write_trace(path, vehicle_ids, states, inputs, dt: float) -> None:
    """One row per (step, vehicle); the final state row has empty input fields."""
    states, inputs = np.asarray(states), np.asarray(inputs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for t in range(states.shape[1]):
            for i, vid in enumerate(vehicle_ids):
                z = states[i, t]
                row = [_num(t * dt), vid, *(_num(c) for c in z[:4])]
                if t < inputs.shape[1]:
                    row += [_num(inputs[i, t, 0]), _num(inputs[i, t, 1])]
                else:
                    row += ["", ""]
                w.writerow(row)


def read_trace(path):
    """Returns (vehicle_ids, states (n, T+1, 4), inputs (n, T, 2), dt)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TraceError(str(exc)) from None
    if not rows or rows[0] != COLUMNS:
        raise TraceError(f"{path}: header must be {','.join(COLUMNS)}")
    ids, times, data = [], [], {}
    try:
        for r in rows[1:]:
            if len(r) != len(COLUMNS):
                raise TraceError(f"{path}: row has {len(r)} fields")
            t, vid = float(r[0]), r[1]
            if vid not in data:
                ids.append(vid)
                data[vid] = []
            if not times or t != times[-1]:
                times.append(t)
            a = float(r[6]) if r[6] else np.nan
            d = float(r[7]) if r[7] else np.nan
            data[vid].append([float(c) for c in r[2:6]] + [a, d])
    except ValueError as exc:
        raise TraceError(f"{path}: {exc}") from None
    lengths = {len(v) for v in data.values()}
    if len(lengths) > 1:
        raise TraceError(f"{path}: vehicles have different numbers of rows")
    arr = np.array([data[v] for v in ids]) if ids else np.zeros((0, 0, 6))
    dt = times[1] - times[0] if len(times) > 1 else 0.0
    return [_id(v) for v in ids], arr[:, :, :4], arr[:, :-1, 4:], dt


def _id(v: str):
    try:
        return int(v)
    except ValueError:
        return v


def write_plot_data(directory, vehicle_ids, states, inputs, dt: float, prefix: str = "") -> list[Path]:
    """Write one CSV per panel (x, y, psi, v, a, delta against t), one column per vehicle."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    states, inputs = np.asarray(states), np.asarray(inputs)
    panels = {"x": states[:, :, 0], "y": states[:, :, 1], "psi": states[:, :, 2], "v": states[:, :, 3],
              "a": inputs[:, :, 0], "delta": inputs[:, :, 1]}
    written = []
    for name, series in panels.items():
        path = out / f"{prefix}{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [str(v) for v in vehicle_ids])
            for t in range(series.shape[1]):
                w.writerow([_num(t * dt)] + [_num(series[i, t]) for i in range(series.shape[0])])
        written.append(path)
    return written
