"""Parallel proximal algorithm (PPXA) on the constrained dual problem.

The objective ``phi(F) + sum_q iota_{B_q}(F)`` is split into the smooth block
``phi`` and one block per group of vertex constraints. Vertices inside one
group share no edge, so the group's projection is the independent projection
of each member's incident sub-vector. With ``blocks="vertex"`` every vertex is
its own group; with ``blocks="color"`` the groups are the color classes of the
graph.

Each block keeps a full auxiliary edge vector ``y_q``. An edge is only touched
by the smooth block and by the groups of its two endpoints; every other group
applies the identity to it, and since all ``y_q`` start equal those untouched
copies stay equal to one shared background vector. The state is therefore four
edge vectors regardless of the number of blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constraints import project_incident
from .problem import TVProblem, primal_objective, prox_phi, recover_primal

log = logging.getLogger(__name__)


@dataclass
class SolverTrace:
    residual_norms: list[float] = field(default_factory=list)
    primal_objective: list[float] = field(default_factory=list)
    iterations_run: int = 0

    def as_rows(self):
        """``(iteration, residual_norm, primal_objective)`` rows, 1-based."""
        objs = self.primal_objective or [float("nan")] * len(self.residual_norms)
        return [(i + 1, r, o) for i, (r, o) in enumerate(zip(self.residual_norms, objs))]


def _block_groups(problem: TVProblem, blocks: str) -> tuple[np.ndarray, int]:
    g = problem.graph
    if blocks == "vertex":
        return np.arange(g.n), g.n
    if blocks == "color":
        return g.colors, g.n_colors
    raise ValueError(f"unknown block layout {blocks!r}")


def ppxa_solve(problem: TVProblem, lam: float = 0.5, max_iter: int = 300, omega=None,
               relax: float = 1.5, stop_tol: float = 1e-4, blocks: str = "color",
               track_objective: bool = False, objective_tol: float = 1e-3,
               objective_every: int = 1,
               cg_rtol: float = 1e-8, cg_maxiter: int = 500):
    """Run PPXA and return the dual field ``F`` and a :class:`SolverTrace`.

    Parameters
    ----------
    lam : float
        Proximal step, ``> 0``. Block ``q`` uses ``lam / omega_q``.
    omega : array_like, optional
        Block weights, smooth block first, then one per group; must be in
        ``(0, 1]`` and sum to 1. Uniform by default.
    relax : float
        Relaxation in ``(0, 2)``.
    stop_tol : float
        Stop once the relative change ``||F_{i+1} - F_i|| / ||F||`` drops
        below this value. ``0`` always runs ``max_iter`` iterations.
    track_objective : bool
        Record the primal objective of the recovered primal iterate. Its
        regularizer is itself an inner optimization (``objective_tol`` is
        its relative duality gap), so on large graphs it dominates the cost;
        ``objective_every`` evaluates it only every k-th iteration (and at
        the last one), recording NaN in between.
    """
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError("lam must be in (0, inf)")
    if not 0 < relax < 2:
        raise ValueError("relax must be in (0, 2)")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if objective_every < 1:
        raise ValueError("objective_every must be >= 1")
    graph = problem.graph
    group, k = _block_groups(problem, blocks)
    if omega is None:
        omega = np.full(k + 1, 1.0 / (k + 1))
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (k + 1,):
        raise ValueError(f"omega needs {k + 1} weights (smooth block + {k} groups)")
    if np.any(omega <= 0) or np.any(omega > 1) or abs(omega.sum() - 1) > 1e-9:
        raise ValueError("omega entries must lie in (0, 1] and sum to 1")

    trace = SolverTrace()
    m = graph.m
    if m == 0:
        trace.iterations_run = 0
        return np.zeros(0), trace

    w_phi = omega[0]
    w_h = omega[1:][group[graph.head]]
    w_t = omega[1:][group[graph.tail]]
    w_bg = np.clip(1.0 - w_phi - w_h - w_t, 0.0, None)
    has_bg = bool(np.any(w_bg > 1e-15))

    y_phi = np.zeros(m)
    y_h = np.zeros(m)
    y_t = np.zeros(m)
    y_bg = np.zeros(m)
    F = np.zeros(m)
    p_phi = None
    mu = None
    step_phi = lam / w_phi

    for it in range(max_iter):
        p_phi = prox_phi(y_phi, step_phi, problem, x0=p_phi, rtol=cg_rtol, maxiter=cg_maxiter)
        p_h, p_t = project_incident(y_h, y_t, graph, problem.constraints)
        P = w_phi * p_phi + w_h * p_h + w_t * p_t
        if has_bg:
            P += w_bg * y_bg
        twoP_F = 2.0 * P - F
        y_phi += relax * (twoP_F - p_phi)
        y_h += relax * (twoP_F - p_h)
        y_t += relax * (twoP_F - p_t)
        if has_bg:
            y_bg += relax * (twoP_F - y_bg)
        F_new = F + relax * (P - F)

        denom = max(np.linalg.norm(F), np.linalg.norm(F_new), np.finfo(float).tiny)
        res = float(np.linalg.norm(F_new - F) / denom)
        F = F_new
        trace.residual_norms.append(res)
        last = res < stop_tol or it + 1 == max_iter
        if track_objective:
            if (it + 1) % objective_every == 0 or last:
                x = recover_primal(F, problem)
                val, mu = primal_objective(x, problem, tol=objective_tol, mu0=mu, return_mu=True)
            else:
                val = float("nan")
            trace.primal_objective.append(val)
        trace.iterations_run = it + 1
        if res < stop_tol:
            log.debug("ppxa stopped at iteration %d, residual %.3e", it + 1, res)
            break
    return F, trace
