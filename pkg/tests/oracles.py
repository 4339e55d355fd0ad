"""Independent reference computations used by the tests.

Nothing here calls the package's solvers: support functions of small
constraint sets are evaluated from their geometry, and minimizers are found by
exhaustive grid search.
"""

from __future__ import annotations

import itertools

import numpy as np


def q_box(a, caps):
    """Support function of the box ``|F_k| <= caps_k``."""
    return np.sum(np.abs(a) * caps, axis=-1)


def q_path3_l2(a1, a2, g0, g1, g2):
    """Support function of ``{|F1| <= g0, |F2| <= g2, F1^2 + F2^2 <= g1^2}``.

    The maximum of a linear function over this box-disc intersection lies at
    the disc point in the direction of ``a`` (if inside the box) or at a
    vertex of the intersection (box corner or box-edge/circle crossing).
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    cands = []
    norm = np.hypot(a1, a2)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(norm > 0, g1 * a1 / norm, 0.0)
        f2 = np.where(norm > 0, g1 * a2 / norm, 0.0)
    ok = (np.abs(f1) <= g0 + 1e-15) & (np.abs(f2) <= g2 + 1e-15)
    cands.append(np.where(ok, a1 * f1 + a2 * f2, -np.inf))
    e2 = min(g2, np.sqrt(max(g1 * g1 - g0 * g0, 0.0))) if g0 <= g1 else None
    e1 = min(g0, np.sqrt(max(g1 * g1 - g2 * g2, 0.0))) if g2 <= g1 else None
    pts = []
    if e2 is not None:
        pts += [(s * g0, t * e2) for s in (-1, 1) for t in (-1, 1)]
    if e1 is not None:
        pts += [(s * e1, t * g2) for s in (-1, 1) for t in (-1, 1)]
    # a disc smaller than both half-widths in one axis clips that axis to the disc
    pts += [(0.0, 0.0)]
    for p1, p2 in pts:
        if abs(p1) <= g0 + 1e-15 and abs(p2) <= g2 + 1e-15 and p1 * p1 + p2 * p2 <= g1 * g1 + 1e-12:
            cands.append(a1 * p1 + a2 * p2)
    return np.max(np.stack(np.broadcast_arrays(*cands)), axis=0)


def primal_values(X, reg, d, v, M=None, gamma=1.0):
    """``reg(X) + data + nullspace`` for a batch of points ``X`` (rows)."""
    X = np.atleast_2d(X)
    if M is None:
        r = X - d
        null = 0.0
    else:
        r = X @ M.T - d
        Z = np.eye(M.shape[1]) - np.linalg.pinv(M) @ M
        zx = X @ Z.T
        null = 0.5 * gamma * np.sum(zx * zx, axis=1)
    return reg(X) + 0.5 * np.sum(r * r / v, axis=1) + null


def grid_minimize(f, center, radius, n: int, final_step: float = 1e-4, points: int = 41,
                  zoom: float = 10.0, keep: int = 3):
    """Coarse-to-fine exhaustive search of a convex ``f`` over ``center +- radius``.

    Every level evaluates a full ``points^n`` grid; the next level covers
    ``+-keep`` cells around the best point with a ``zoom`` times finer step,
    until the step is at most ``final_step``. Returns ``(value, argmin)``.
    """
    center = np.asarray(center, dtype=float)
    step = 2.0 * radius / (points - 1)
    best_x, best_v = center, np.inf
    lo = center - radius
    count = points
    while True:
        axes = [lo[i] + step * np.arange(count) for i in range(n)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        vals = f(grid)
        k = int(np.argmin(vals))
        if vals[k] < best_v:
            best_v, best_x = float(vals[k]), grid[k]
        if step <= final_step * (1 + 1e-9):
            return best_v, best_x
        new_step = max(step / zoom, final_step)
        lo = best_x - keep * step
        count = int(round(2 * keep * step / new_step)) + 1
        step = new_step


def box_corners(n):
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
