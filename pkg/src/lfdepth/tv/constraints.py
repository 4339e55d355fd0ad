"""Per-vertex constraint sets on edge fields, their projections and support function.

The dual feasible set is ``B = {F : ||theta_q * F||_alpha <= G_q for every vertex q}``
where ``theta_q`` is supported on the edges incident to ``q``. Each edge touches
two vertices, so ``theta`` is stored as two edge arrays: the multiplier seen by
the head vertex and the one seen by the tail vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import PixelGraph

_BISECT_ITERS = 100
_ROOT_ITERS = 16
# A vector this close to its ball counts as inside. Projected vectors land on
# the sphere only up to rounding, so without the slack a second projection
# could rescale them again.
_INSIDE_SLACK = 1.0 + 8 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    bounds: np.ndarray
    alpha: float = 2.0
    theta_head: np.ndarray | None = None
    theta_tail: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha not in (2, np.inf):
            raise ValueError("alpha must be 2 or inf")
        bounds = np.asarray(self.bounds, dtype=float)
        if bounds.ndim != 1 or np.any(bounds < 0) or np.any(np.isnan(bounds)):
            raise ValueError("bounds must be a 1D array of values >= 0")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "alpha", float(self.alpha))
        for name in ("theta_head", "theta_tail"):
            t = getattr(self, name)
            if t is not None:
                t = np.asarray(t, dtype=float)
                if np.any(t < 0) or not np.all(np.isfinite(t)):
                    raise ValueError(f"{name} entries must be finite and >= 0")
                object.__setattr__(self, name, t)

    @property
    def uniform_theta(self) -> bool:
        return self.theta_head is None and self.theta_tail is None

    def thetas(self, graph: PixelGraph) -> tuple[np.ndarray, np.ndarray]:
        ones = np.ones(graph.m)
        th = ones if self.theta_head is None else self.theta_head
        tt = ones if self.theta_tail is None else self.theta_tail
        if th.shape != (graph.m,) or tt.shape != (graph.m,):
            raise ValueError("theta arrays must have one entry per edge")
        return th, tt

    def check(self, graph: PixelGraph) -> None:
        if self.bounds.shape != (graph.n,):
            raise ValueError(f"expected {graph.n} bounds, got {self.bounds.size}")
        self.thetas(graph)


def default_constraints(graph: PixelGraph, bounds, alpha: float = 2.0) -> ConstraintSet:
    """Indicator multipliers (every incident edge weighs 1)."""
    bounds = np.broadcast_to(np.asarray(bounds, dtype=float), (graph.n,)).copy()
    return ConstraintSet(bounds, alpha)


def _scale_factors(graph, cons, sq_head, sq_tail):
    """Radial factor per vertex for uniform-theta l2 balls."""
    norm = np.sqrt(np.bincount(graph.head, sq_head, minlength=graph.n)
                   + np.bincount(graph.tail, sq_tail, minlength=graph.n))
    G = cons.bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(norm > G * _INSIDE_SLACK, G / norm, 1.0)
    return s


def project_incident(vh: np.ndarray, vt: np.ndarray, graph: PixelGraph,
                     cons: ConstraintSet, vertices=None) -> tuple[np.ndarray, np.ndarray]:
    """Project every vertex's incident sub-vector onto its own ball.

    ``vh[k]`` is the value of edge ``k`` as seen by its head vertex, ``vt[k]``
    as seen by its tail vertex. Returns the projected pair. If ``vertices`` is
    given (boolean mask), only those vertices are projected.
    """
    th, tt = cons.thetas(graph)
    G = cons.bounds
    active = np.ones(graph.n, bool) if vertices is None else np.asarray(vertices, bool)
    ah, at = active[graph.head], active[graph.tail]

    if cons.alpha == np.inf:
        with np.errstate(divide="ignore"):
            ch = np.where(th > 0, G[graph.head] / th, np.inf)
            ct = np.where(tt > 0, G[graph.tail] / tt, np.inf)
        ph = np.where(ah, np.clip(vh, -ch, ch), vh)
        pt = np.where(at, np.clip(vt, -ct, ct), vt)
        return ph, pt

    wh, wt = th ** 2, tt ** 2
    if cons.uniform_theta:
        s = _scale_factors(graph, cons, vh ** 2, vt ** 2)
        s = np.where(active, s, 1.0)
        return vh * s[graph.head], vt * s[graph.tail]

    # general theta: p = v / (1 + mu * theta^2), mu >= 0 solves the secular equation
    def weighted_norm_sq(mu):
        rh = wh * vh ** 2 / (1.0 + mu[graph.head] * wh) ** 2
        rt = wt * vt ** 2 / (1.0 + mu[graph.tail] * wt) ** 2
        return (np.bincount(graph.head, rh, minlength=graph.n)
                + np.bincount(graph.tail, rt, minlength=graph.n))

    mu = np.zeros(graph.n)
    need = (weighted_norm_sq(mu) > (G * _INSIDE_SLACK) ** 2) & active
    zero_ball = need & (G == 0)
    solve = need & ~zero_ball
    if np.any(solve):
        # bracket: ||theta p||^2 <= sum(v^2 / theta^2 over theta>0) / mu^2
        inv = (np.bincount(graph.head, np.where(wh > 0, vh ** 2 / np.where(wh > 0, wh, 1), 0), minlength=graph.n)
               + np.bincount(graph.tail, np.where(wt > 0, vt ** 2 / np.where(wt > 0, wt, 1), 0), minlength=graph.n))
        lo = np.zeros(graph.n)
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = np.where(solve, np.sqrt(inv) / np.where(G > 0, G, 1.0), 0.0)
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            over = weighted_norm_sq(mid) > G ** 2
            lo = np.where(solve & over, mid, lo)
            hi = np.where(solve & ~over, mid, hi)
            if np.all((hi - lo)[solve] <= 1e-15 * np.maximum(hi[solve], 1e-300)):
                break
        mu = np.where(solve, hi, 0.0)
    mu_h, mu_t = mu[graph.head], mu[graph.tail]
    ph = np.where(ah, vh / (1.0 + mu_h * wh), vh)
    pt = np.where(at, vt / (1.0 + mu_t * wt), vt)
    zh, zt = zero_ball[graph.head], zero_ball[graph.tail]
    ph = np.where(zh & (wh > 0), 0.0, ph)
    pt = np.where(zt & (wt > 0), 0.0, pt)
    return ph, pt


def project_onto_Bq(F: np.ndarray, q: int, graph: PixelGraph, cons: ConstraintSet) -> np.ndarray:
    """Euclidean projection of the edge field ``F`` onto the single set ``B_q``."""
    F = np.asarray(F, dtype=float)
    mask = np.zeros(graph.n, bool)
    mask[q] = True
    ph, pt = project_incident(F, F, graph, cons, vertices=mask)
    out = F.copy()
    hq, tq = graph.head == q, graph.tail == q
    out[hq] = ph[hq]
    out[tq] = pt[tq]
    return out


def in_set(F: np.ndarray, graph: PixelGraph, cons: ConstraintSet, tol: float = 1e-12) -> bool:
    """Membership of ``F`` in the intersection ``B``."""
    return bool(np.all(vertex_norms(F, graph, cons) <= cons.bounds * (1 + tol) + tol))


def vertex_norms(F: np.ndarray, graph: PixelGraph, cons: ConstraintSet) -> np.ndarray:
    th, tt = cons.thetas(graph)
    if cons.alpha == np.inf:
        out = np.zeros(graph.n)
        np.maximum.at(out, graph.head, np.abs(th * F))
        np.maximum.at(out, graph.tail, np.abs(tt * F))
        return out
    return np.sqrt(np.bincount(graph.head, (th * F) ** 2, minlength=graph.n)
                   + np.bincount(graph.tail, (tt * F) ** 2, minlength=graph.n))


def make_feasible(F: np.ndarray, graph: PixelGraph, cons: ConstraintSet) -> np.ndarray:
    """Shrink ``F`` edge-wise into ``B`` (each edge scaled by its worse endpoint)."""
    norms = vertex_norms(F, graph, cons)
    G = cons.bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(norms > G, G / norms, 1.0)
    return F * np.minimum(s[graph.head], s[graph.tail])


def support_function(a: np.ndarray, graph: PixelGraph, cons: ConstraintSet,
                     tol: float = 1e-12, max_sweeps: int = 5000,
                     mu0: np.ndarray | None = None, return_info: bool = False):
    """``q_B(a) = sup_{F in B} <F, a>`` for the intersection of vertex balls.

    ``alpha = inf`` reduces to a box and is evaluated in closed form. For
    ``alpha = 2`` the value is the minimum of the smooth dual

        g(mu) = sum_k a_k^2 / (2 s_k(mu)) + sum_q mu_q G_q^2 / 2,
        s_k = mu_head theta_head_k^2 + mu_tail theta_tail_k^2,

    minimized by exact block-coordinate sweeps over the color classes (vertices
    of one color share no edge, so each block splits into 1D root finds). The
    returned value is the dual upper bound once it is within ``tol`` (relative)
    of the primal lower bound from a feasible field.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (graph.m,):
        raise ValueError("a must have one entry per edge")
    th, tt = cons.thetas(graph)
    G = cons.bounds

    if cons.alpha == np.inf:
        with np.errstate(divide="ignore"):
            ch = np.where(th > 0, G[graph.head] / np.where(th > 0, th, 1), np.inf)
            ct = np.where(tt > 0, G[graph.tail] / np.where(tt > 0, tt, 1), np.inf)
        c = np.minimum(ch, ct)
        absa = np.abs(a)
        if np.any(np.isinf(c) & (absa > 0)):
            val = np.inf
        else:
            val = float(np.sum(np.where(absa > 0, c * absa, 0.0)))
        return (val, {"gap": 0.0, "sweeps": 0, "mu": None}) if return_info else val

    wh, wt = th ** 2, tt ** 2
    # edges pinned to zero by a zero-radius ball contribute nothing
    pinned = ((G[graph.head] == 0) & (wh > 0)) | ((G[graph.tail] == 0) & (wt > 0))
    a2 = np.where(pinned, 0.0, a ** 2)
    live = a2 > 0
    if np.any(live & (wh == 0) & (wt == 0)):
        val = np.inf
        return (val, {"gap": 0.0, "sweeps": 0, "mu": None}) if return_info else val
    if not np.any(live):
        return (0.0, {"gap": 0.0, "sweeps": 0, "mu": np.zeros(graph.n)}) if return_info else 0.0

    head, tail, n = graph.head, graph.tail, graph.n
    mu = np.zeros(n) if mu0 is None else np.array(mu0, dtype=float)
    # start every vertex with its own radial solution when no warm start
    if mu0 is None:
        loc = np.bincount(head, wh * a2, minlength=n) + np.bincount(tail, wt * a2, minlength=n)
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(G > 0, np.sqrt(loc) / np.where(G > 0, G, 1), 0.0)

    def dual_value(mu):
        s = mu[head] * wh + mu[tail] * wt
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(live, a2 / (2 * s), 0.0)
        return float(np.sum(terms) + 0.5 * np.sum(mu * G ** 2))

    def primal_value(mu):
        s = mu[head] * wh + mu[tail] * wt
        with np.errstate(divide="ignore", invalid="ignore"):
            F = np.where(live & (s > 0), a / s, 0.0)
        F = np.where(pinned, 0.0, F)
        F = make_feasible(F, graph, cons)
        return float(F @ a)

    colors = graph.colors
    classes = [colors == c for c in range(graph.n_colors)]
    gp = G > 0
    upper = lower = np.nan
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        for cls in classes:
            # other-endpoint contribution per edge, seen from this class
            c_h = np.where(cls[head], mu[tail] * wt, 0.0)   # edges where head is in class
            c_t = np.where(cls[tail], mu[head] * wh, 0.0)
            e_h = cls[head] & live & (wh > 0)
            e_t = cls[tail] & live & (wt > 0)

            def S_and_slope(m_):
                dh = m_[head] * wh + c_h
                dt = m_[tail] * wt + c_t
                with np.errstate(divide="ignore", invalid="ignore"):
                    rh = np.where(e_h, wh * a2 / dh ** 2, 0.0)
                    rt = np.where(e_t, wt * a2 / dt ** 2, 0.0)
                    qh = np.where(e_h, rh * wh / dh, 0.0)
                    qt = np.where(e_t, rt * wt / dt, 0.0)
                S = np.bincount(head, rh, minlength=n) + np.bincount(tail, rt, minlength=n)
                Q = np.bincount(head, qh, minlength=n) + np.bincount(tail, qt, minlength=n)
                return S, Q

            s0, _ = S_and_slope(np.zeros(n))
            target = cls & gp & (s0 > G ** 2)
            bound = (np.bincount(head, np.where(e_h, a2 / np.where(wh > 0, wh, 1), 0), minlength=n)
                     + np.bincount(tail, np.where(e_t, a2 / np.where(wt > 0, wt, 1), 0), minlength=n))
            lo = np.zeros(n)
            hi = np.where(target, np.sqrt(bound) / np.where(gp, G, 1.0), 0.0)
            # safeguarded Newton on psi(mu) = S^-1/2 - 1/G, concave and increasing
            m_ = hi.copy()
            inv_g = np.where(gp, 1.0 / np.where(gp, G, 1.0), 0.0)
            for _ in range(_ROOT_ITERS):
                S, Q = S_and_slope(m_)
                with np.errstate(divide="ignore", invalid="ignore"):
                    psi = S ** -0.5 - inv_g
                    dpsi = Q * S ** -1.5
                lo = np.where(target & (psi < 0), m_, lo)
                hi = np.where(target & (psi >= 0), m_, hi)
                with np.errstate(divide="ignore", invalid="ignore"):
                    step = m_ - psi / dpsi
                # a step onto a bracket end is fine: the end may be the root itself
                bad = ~np.isfinite(step) | (step < lo) | (step > hi)
                nxt = np.where(psi == 0, m_, np.where(bad, 0.5 * (lo + hi), step))
                done = np.abs(nxt - m_) <= 1e-15 * np.maximum(np.abs(m_), 1e-300)
                m_ = np.where(target, nxt, 0.0)
                if np.all(done[target]):
                    break
            new = m_
            mu = np.where(cls & gp, new, mu)
        upper = dual_value(mu)
        lower = primal_value(mu)
        if upper - lower <= tol * max(1.0, abs(upper)):
            break
    if return_info:
        return upper, {"gap": upper - lower, "sweeps": sweep, "mu": mu}
    return upper

