"""Refine an initial disparity map with the dual-constrained TV model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lightfield import DisparityField
from .constraints import ConstraintSet
from .graph import build_grid_graph
from .ppxa import SolverTrace, ppxa_solve
from .problem import TVProblem, recover_primal


@dataclass(frozen=True)
class RefineParams:
    lam: float = 0.5
    max_iter: int = 300
    relax: float = 1.5
    nu: float = 1.0
    g0: float = 0.3
    beta: float = 5.0
    alpha: float = 2.0
    stop_tol: float = 1e-4
    min_confidence: float = 0.1
    track_objective: bool = False
    objective_every: int = 10

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("lam must be in (0, inf)")
        if not 0 < self.relax < 2:
            raise ValueError("relax must be in (0, 2)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.nu > 0:
            raise ValueError("nu must be > 0")
        if not self.g0 >= 0:
            raise ValueError("g0 must be >= 0")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if self.alpha not in (2, np.inf):
            raise ValueError("alpha must be 2 or inf")
        if not self.stop_tol >= 0:
            raise ValueError("stop_tol must be >= 0")
        if not 0 < self.min_confidence <= 1:
            raise ValueError("min_confidence must lie in (0, 1]")


def guide_gradient_magnitude(guide: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude of a 2D image."""
    g = np.asarray(guide, dtype=float)
    gy = np.gradient(g, axis=0) if g.shape[0] > 1 else np.zeros_like(g)
    gx = np.gradient(g, axis=1) if g.shape[1] > 1 else np.zeros_like(g)
    return np.hypot(gx, gy)


def vertex_bounds(guide: np.ndarray, g0: float) -> np.ndarray:
    """``G_i = g0 * (1 - clamp(|grad guide|, 0, 1))``: less smoothing across image edges."""
    return g0 * (1.0 - np.clip(guide_gradient_magnitude(guide), 0.0, 1.0))


def fidelity_diagonal(confidence: np.ndarray, nu: float, min_confidence: float = 0.1) -> np.ndarray:
    """``V = nu / max(confidence, min_confidence)``.

    ``V`` divides the data term, so a confident pixel (small ``V``) is held
    close to its observation and a low-confidence pixel is regularized harder.
    """
    return nu / np.maximum(np.asarray(confidence, dtype=float), min_confidence)


def build_refine_problem(initial: DisparityField, guide: np.ndarray,
                         params: RefineParams = RefineParams()) -> TVProblem:
    guide = np.asarray(guide, dtype=float)
    if guide.ndim == 3 and guide.shape[2] == 1:
        guide = guide[..., 0]
    if guide.shape != initial.disparity.shape:
        raise ValueError(f"guide shape {guide.shape} does not match disparity {initial.disparity.shape}")
    h, w = guide.shape
    graph = build_grid_graph(w, h, guide=guide, beta=params.beta)
    cons = ConstraintSet(vertex_bounds(guide, params.g0).ravel(), alpha=params.alpha)
    d = np.where(np.isfinite(initial.disparity), initial.disparity, 0.0)
    v = fidelity_diagonal(initial.confidence, params.nu, params.min_confidence)
    return TVProblem(graph, cons, d.ravel(), v.ravel())


def refine_disparity(initial: DisparityField, guide: np.ndarray,
                     params: RefineParams = RefineParams()) -> tuple[DisparityField, SolverTrace]:
    """Run PPXA on the dual problem and return the recovered primal map.

    Confidence and validity are carried through unchanged. A single-pixel map
    has no edges and is returned as is.
    """
    if initial.disparity.size < 2:
        return initial, SolverTrace()
    problem = build_refine_problem(initial, guide, params)
    F, trace = ppxa_solve(problem, lam=params.lam, max_iter=params.max_iter, relax=params.relax,
                          stop_tol=params.stop_tol, track_objective=params.track_objective,
                          objective_every=params.objective_every)
    x = recover_primal(F, problem).reshape(initial.disparity.shape)
    return DisparityField(x, confidence=initial.confidence, valid_mask=initial.valid_mask), trace
