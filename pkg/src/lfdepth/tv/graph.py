"""Weighted pixel graphs and their signed incidence operator."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class PixelGraph:
    """Undirected weighted graph with a fixed orientation per edge.

    Edge ``k`` joins ``head[k]`` and ``tail[k]``. The incidence operator ``W``
    has ``+sqrt(w)`` in the head column and ``-sqrt(w)`` in the tail column of
    row ``k``, so ``W @ x`` is the weighted graph gradient and ``W.T @ F`` its
    adjoint.
    """

    n: int
    head: np.ndarray
    tail: np.ndarray
    weights: np.ndarray
    colors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        head = np.ascontiguousarray(self.head, dtype=np.intp)
        tail = np.ascontiguousarray(self.tail, dtype=np.intp)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if not (head.shape == tail.shape == weights.shape) or head.ndim != 1:
            raise ValueError("head, tail and weights must be 1D arrays of equal length")
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if head.size:
            if head.min() < 0 or tail.min() < 0 or max(head.max(), tail.max()) >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(head == tail):
                raise ValueError("self-loops are not allowed")
            if np.any(~(weights > 0)) or not np.all(np.isfinite(weights)):
                raise ValueError("edge weights must be finite and > 0")
            lo, hi = np.minimum(head, tail), np.maximum(head, tail)
            keys = lo.astype(np.int64) * self.n + hi
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edges are not allowed")
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "weights", weights)
        if self.colors is None:
            object.__setattr__(self, "colors", greedy_coloring(self.n, head, tail))
        else:
            colors = np.asarray(self.colors, dtype=np.intp)
            if colors.shape != (self.n,) or np.any(colors[head] == colors[tail]):
                raise ValueError("colors must be a proper vertex coloring")
            object.__setattr__(self, "colors", colors)

    @property
    def m(self) -> int:
        return int(self.head.size)

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        rows = np.repeat(np.arange(self.m), 2)
        cols = np.column_stack([self.head, self.tail]).ravel()
        vals = np.column_stack([self.sqrt_weights, -self.sqrt_weights]).ravel()
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.m, self.n))

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.head, minlength=self.n) + np.bincount(self.tail, minlength=self.n)

    @property
    def n_colors(self) -> int:
        return int(self.colors.max()) + 1 if self.n else 0

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Apply ``W``: vertex values to weighted edge differences."""
        x = np.asarray(x, dtype=float)
        return self.sqrt_weights * (x[self.head] - x[self.tail])

    def grad_t(self, F: np.ndarray) -> np.ndarray:
        """Apply ``W.T``: edge values to vertex divergence-like sums."""
        F = np.asarray(F, dtype=float) * self.sqrt_weights
        return np.bincount(self.head, F, minlength=self.n) - np.bincount(self.tail, F, minlength=self.n)

    def incident_edges(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        """Edges with ``q`` as head, and edges with ``q`` as tail."""
        return np.flatnonzero(self.head == q), np.flatnonzero(self.tail == q)


def greedy_coloring(n: int, head: np.ndarray, tail: np.ndarray) -> np.ndarray:
    """Proper vertex coloring, smallest free color first in vertex order."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in zip(head.tolist(), tail.tolist()):
        adj[a].append(b)
        adj[b].append(a)
    colors = np.full(n, -1, dtype=np.intp)
    for v in range(n):
        used = {colors[u] for u in adj[v] if colors[u] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[v] = c
    return colors


def graph_from_edges(n: int, edges, weights=None) -> PixelGraph:
    """Build a graph from ``(head, tail)`` pairs; weights default to 1."""
    edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
    w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=float)
    return PixelGraph(n, edges[:, 0], edges[:, 1], w)


def build_grid_graph(width: int, height: int, guide=None, beta: float = 0.0) -> PixelGraph:
    """4-connected grid on a ``height x width`` image, row-major vertex order.

    Edge weights are ``exp(-beta * (I_i - I_j)**2)`` with ``I`` taken from
    ``guide``; ``beta = 0`` (or no guide) gives unit weights.
    """
    if width < 1 or height < 1 or width * height < 2:
        raise ValueError("grid needs at least two pixels")
    idx = np.arange(width * height).reshape(height, width)
    head = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    tail = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    if guide is None or beta == 0:
        weights = np.ones(head.size)
    else:
        g = np.asarray(guide, dtype=float)
        if g.shape != (height, width):
            raise ValueError(f"guide shape {g.shape} does not match grid {(height, width)}")
        g = g.ravel()
        weights = np.exp(-beta * (g[head] - g[tail]) ** 2)
        # keep weights strictly positive for extreme contrasts
        weights = np.maximum(weights, np.finfo(float).tiny)
    yy, xx = np.divmod(np.arange(width * height), width)
    return PixelGraph(width * height, head, tail, weights, colors=(xx + yy) % 2)
