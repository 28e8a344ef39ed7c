"""Independent safety audit: exact footprint distances recomputed from states."""

from __future__ import annotations

import numpy as np

from .geometry import footprint_from_pose, polytope_distance

DIST_TOL = 1e-4


def pair_distances(states, params, obstacles=()):
    """Yield (t, a, b, dist) for every vehicle pair and vehicle/obstacle pair.

    ``states`` has shape (n, T+1, >=3); obstacle partners are reported as ``"obs<k>"``.
    """
    states = np.asarray(states)
    n, steps = states.shape[0], states.shape[1]
    for t in range(steps):
        polys = [footprint_from_pose(*states[i, t, :3], params[i].len, params[i].w) for i in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                yield t, a, b, polytope_distance(polys[a], polys[b])[0]
            for k, P in enumerate(obstacles):
                yield t, a, f"obs{k}", polytope_distance(polys[a], P)[0]


def fleet_violations(states, params, obstacles, d_min: float, tol: float = DIST_TOL):
    return [(t, a, b, d) for t, a, b, d in pair_distances(states, params, obstacles) if d < d_min - tol]


def summarize(states, params, obstacles=()) -> dict:
    """Minimum inter-vehicle and obstacle clearance over a whole run."""
    min_pair, min_obs = np.inf, np.inf
    for _, _, b, d in pair_distances(states, params, obstacles):
        if isinstance(b, str):
            min_obs = min(min_obs, d)
        else:
            min_pair = min(min_pair, d)
    return {"min_pair_distance": float(min_pair), "min_obstacle_distance": float(min_obs)}


def steady_state_index(states, reference, threshold: float, window: int, start: int = 0):
    """First step >= ``start`` opening ``window`` consecutive steps with every vehicle's
    ``||z - z_ref||`` below ``threshold``; None if there is none."""
    states, reference = np.asarray(states), np.asarray(reference)
    err = np.linalg.norm(states - reference, axis=2).max(axis=0)
    below = err < threshold
    run = 0
    for t in range(start, len(below)):
        run = run + 1 if below[t] else 0
        if run == window:
            return t - window + 1
    return None
