"""Oriented polytope footprints, exact 2-D set distance and dual separation certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .dynamics import VehicleParams, VehicleState

INTERSECT_TOL = 1e-9


class NumericalFailure(RuntimeError):
    pass


class InvalidCertificate(ValueError):
    pass


@dataclass(frozen=True)
class OrientedPolytope:
    """Halfspace form {p : A p <= b}."""

    A: np.ndarray
    b: np.ndarray

    def contains(self, p, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ np.asarray(p) <= self.b + tol))

    def vertices(self) -> np.ndarray:
        """Counter-clockwise vertex list."""
        A, b = self.A, self.b
        m = len(b)
        pts = []
        for i in range(m):
            for j in range(i + 1, m):
                M = A[[i, j]]
                det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
                if abs(det) < 1e-12:
                    continue
                p = np.linalg.solve(M, b[[i, j]])
                if np.all(A @ p <= b + 1e-9 * (1.0 + np.abs(b))):
                    pts.append(p)
        if len(pts) < 3:
            raise NumericalFailure("polytope is empty, degenerate or unbounded")
        pts = np.unique(np.round(np.array(pts), 12), axis=0)
        c = pts.mean(axis=0)
        ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
        return pts[np.argsort(ang)]

    def area(self) -> float:
        v = self.vertices()
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def transformed(self, R: np.ndarray, t: np.ndarray) -> "OrientedPolytope":
        """Image under p -> R p + t for a rotation R."""
        A = self.A @ R.T
        return OrientedPolytope(A, self.b + A @ t)


def rotation(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def footprint_from_pose(x: float, y: float, psi: float, length: float, width: float) -> OrientedPolytope:
    Rt = rotation(psi).T
    A = np.vstack([Rt, -Rt])
    b = np.array([length / 2, width / 2, length / 2, width / 2]) + A @ np.array([x, y])
    return OrientedPolytope(A, b)


def footprint(z: VehicleState, params: VehicleParams) -> OrientedPolytope:
    return footprint_from_pose(z.x, z.y, z.psi, params.len, params.w)


def _point_segment(p, a, b):
    ab = b - a
    denom = ab @ ab
    t = 0.0 if denom == 0.0 else min(1.0, max(0.0, ((p - a) @ ab) / denom))
    q = a + t * ab
    return float(np.hypot(*(p - q))), q


def _segments_intersect(p1, p2, q1, q2):
    d = (p2[0] - p1[0]) * (q2[1] - q1[1]) - (p2[1] - p1[1]) * (q2[0] - q1[0])
    if abs(d) < 1e-15:
        return None
    r = q1 - p1
    t = (r[0] * (q2[1] - q1[1]) - r[1] * (q2[0] - q1[0])) / d
    u = (r[0] * (p2[1] - p1[1]) - r[1] * (p2[0] - p1[0])) / d
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        return p1 + t * (p2 - p1)
    return None


def _separation(V1, P2):
    """Largest separation of V1 from P2 along P2's facet normals."""
    A = P2.A
    norms = np.linalg.norm(A, axis=1)
    return np.max((np.min(V1 @ A.T, axis=0) - P2.b) / norms)


def polytope_distance(P1: OrientedPolytope, P2: OrientedPolytope):
    """Euclidean distance between two convex polygons and a pair of witness points.

    Exact: disjoint convex polygons attain their distance at a vertex/edge pair,
    and the facet normals of both polygons form a complete set of separating axes.
    """
    V1, V2 = P1.vertices(), P2.vertices()
    sep = max(_separation(V1, P2), _separation(V2, P1))
    if sep < INTERSECT_TOL:
        return 0.0, *_common_point(P1, P2, V1, V2)

    best = (math.inf, None, None)
    n1, n2 = len(V1), len(V2)
    for p in V1:
        for k in range(n2):
            d, q = _point_segment(p, V2[k], V2[(k + 1) % n2])
            if d < best[0]:
                best = (d, p.copy(), q)
    for q in V2:
        for k in range(n1):
            d, p = _point_segment(q, V1[k], V1[(k + 1) % n1])
            if d < best[0]:
                best = (d, p, q.copy())
    dist = best[0]
    if dist < INTERSECT_TOL:
        dist = 0.0
    return dist, best[1], best[2]


def _common_point(P1, P2, V1, V2):
    for p in V1:
        if P2.contains(p):
            return p.copy(), p.copy()
    for q in V2:
        if P1.contains(q):
            return q.copy(), q.copy()
    n1, n2 = len(V1), len(V2)
    for i in range(n1):
        for k in range(n2):
            x = _segments_intersect(V1[i], V1[(i + 1) % n1], V2[k], V2[(k + 1) % n2])
            if x is not None:
                return x, x.copy()
    # touching within tolerance: fall back to the nearest vertex/edge pair
    best = (math.inf, None)
    for p in V1:
        for k in range(n2):
            d, q = _point_segment(p, V2[k], V2[(k + 1) % n2])
            if d < best[0]:
                best = (d, (p.copy(), q))
    return best[1]


@dataclass(frozen=True)
class DualCertificate:
    lam: np.ndarray
    mu: np.ndarray
    s: np.ndarray


def certificate_residual(P1: OrientedPolytope, P2: OrientedPolytope, cert: DualCertificate) -> float:
    r1 = P1.A.T @ cert.lam + cert.s
    r2 = P2.A.T @ cert.mu - cert.s
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def dual_value(P1: OrientedPolytope, P2: OrientedPolytope, cert: DualCertificate,
               eq_tol: float = 1e-6, norm_tol: float = 1e-9) -> float:
    """Objective of the separation dual; a lower bound on the distance for feasible certificates."""
    lam, mu, s = (np.asarray(v, dtype=float) for v in (cert.lam, cert.mu, cert.s))
    if np.any(lam < -eq_tol) or np.any(mu < -eq_tol):
        raise InvalidCertificate("multipliers must be nonnegative")
    if np.linalg.norm(s) > 1.0 + norm_tol:
        raise InvalidCertificate(f"|s| = {np.linalg.norm(s)} exceeds 1")
    res = certificate_residual(P1, P2, DualCertificate(lam, mu, s))
    if res > eq_tol:
        raise InvalidCertificate(f"equality residual {res:.3g} exceeds {eq_tol}")
    return float(-P1.b @ lam - P2.b @ mu)


def optimal_certificate(P1: OrientedPolytope, P2: OrientedPolytope) -> DualCertificate:
    """A dual certificate attaining the primal distance (zero certificate when intersecting)."""
    dist, x, y = polytope_distance(P1, P2)
    m1, m2 = len(P1.b), len(P2.b)
    if dist == 0.0:
        return DualCertificate(np.zeros(m1), np.zeros(m2), np.zeros(2))
    s = (x - y) / dist
    lam = _active_multipliers(P1, x, -s)
    mu = _active_multipliers(P2, y, s)
    return DualCertificate(lam, mu, s)


def _active_multipliers(P: OrientedPolytope, point, target):
    slack = P.b - P.A @ point
    active = np.flatnonzero(slack <= 1e-7 * (1.0 + np.abs(P.b)))
    out = np.zeros(len(P.b))
    if len(active):
        coef, _ = nnls(P.A[active].T, target)
        out[active] = coef
    return out
