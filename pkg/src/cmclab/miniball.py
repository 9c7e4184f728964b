"""Exact minimal enclosing ball of a point cloud.

Welzl's algorithm is exact but quadratic-ish on adversarial orderings, so
large clouds are first reduced to their extreme points along a fixed set
of directions. The reduced solution is then verified against every input
point; any violator joins the candidate set and the solve repeats. Each
round adds a point of the true support set, so the loop terminates in at
most d + 2 rounds in practice.

Everything is seeded and ordered deterministically: the same cloud gives
the same ball, bit for bit.
"""

from __future__ import annotations

import numpy as np

_REDUCE_DIRECTIONS = 128
_SHUFFLE_SEED = 987654321


def _fixed_directions(d: int, count: int) -> np.ndarray:
    if d == 2:
        ang = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci sphere
    k = np.arange(count)
    z = 1.0 - (2 * k + 1.0) / count
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    ga = np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([r * np.cos(ga * k), r * np.sin(ga * k), z], axis=1)


def _ball_from_support(support: list[np.ndarray]):
    if not support:
        return np.zeros(1), -1.0
    pts = np.asarray(support)
    p0 = pts[0]
    if len(support) == 1:
        return p0.copy(), 0.0
    rows = 2.0 * (pts[1:] - p0)
    rhs = np.sum(pts[1:] ** 2, axis=1) - np.sum(p0**2)
    # least-norm solution handles affinely degenerate supports
    center, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    r = float(np.sqrt(np.max(np.sum((pts - center) ** 2, axis=1))))
    return center, r


def _welzl(points: np.ndarray) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(_SHUFFLE_SEED)
    order = rng.permutation(points.shape[0])
    pts = points[order]
    center, r = _ball_from_support([])
    support: list[np.ndarray] = []

    def fits(p, c, rad):
        return np.sum((p - c) ** 2) <= rad * rad * (1 + 1e-12) + 1e-24

    def solve(upto: int, sup: list[np.ndarray]):
        c, rad = _ball_from_support(sup)
        if len(sup) == points.shape[1] + 1:
            return c, rad
        for i in range(upto):
            if not fits(pts[i], c, rad):
                c, rad = solve(i, sup + [pts[i]])
        return c, rad

    return solve(pts.shape[0], support)


def minimal_enclosing_ball(points: np.ndarray) -> tuple[np.ndarray, float]:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("need a nonempty (m, d) point array")
    d = pts.shape[1]
    dirs = _fixed_directions(d, _REDUCE_DIRECTIONS)
    cand_idx = np.unique(np.argmax(pts @ dirs.T, axis=0))
    for _ in range(64):
        center, r = _welzl(pts[cand_idx])
        dist_sq = np.sum((pts - center) ** 2, axis=1)
        worst = int(np.argmax(dist_sq))
        if dist_sq[worst] <= r * r * (1 + 1e-10) + 1e-20:
            return center, float(np.sqrt(dist_sq[worst]))
        cand_idx = np.unique(np.append(cand_idx, worst))
    raise RuntimeError("enclosing ball verification failed to converge")
