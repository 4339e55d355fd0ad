"""The dual-constrained TV problem, its smooth dual term and primal recovery.

Primal::

    min_x  q_B(W x) + 1/2 (M x - D)^T V^{-1} (M x - D) + gamma/2 ||Z x||^2

Dual (``Gamma = (M^T V^{-1} M + gamma Z)^{-1}``, ``r = M^T V^{-1} D``)::

    min_{F in B}  phi(F) = 1/2 F^T W Gamma W^T F - F^T W Gamma r

with the primal recovered as ``x = Gamma (r - W^T F)``. For ``M = I`` this is
``Gamma = V`` and ``x = D - V W^T F``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import LinearOperator, cg

from ..errors import NumericalError
from .constraints import ConstraintSet, support_function
from .graph import PixelGraph


class ConvergenceError(NumericalError):
    """An inner iterative solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class TVProblem:
    graph: PixelGraph
    constraints: ConstraintSet
    d_obs: np.ndarray
    v_diag: np.ndarray
    m_op: np.ndarray | None = None
    gamma_reg: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.d_obs, dtype=float).ravel()
        v = np.broadcast_to(np.asarray(self.v_diag, dtype=float), d.shape).copy()
        if np.any(~(v > 0)) or not np.all(np.isfinite(v)):
            raise ValueError("fidelity matrix V must be positive definite (v_diag > 0)")
        if not np.all(np.isfinite(d)):
            raise ValueError("observations must be finite")
        if not self.gamma_reg > 0:
            raise ValueError("gamma_reg must be > 0")
        if self.m_op is None:
            if d.size != self.graph.n:
                raise ValueError(f"d_obs has {d.size} entries, graph has {self.graph.n} vertices")
        else:
            M = np.asarray(self.m_op, dtype=float)
            if M.shape != (d.size, self.graph.n):
                raise ValueError(f"M must be {(d.size, self.graph.n)}, got {M.shape}")
            object.__setattr__(self, "m_op", M)
        self.constraints.check(self.graph)
        object.__setattr__(self, "d_obs", d)
        object.__setattr__(self, "v_diag", v)

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def z_op(self) -> np.ndarray | None:
        """Orthogonal projector onto the nullspace of ``M`` (``None`` means 0)."""
        if self.m_op is None:
            return None
        M = self.m_op
        return np.eye(self.n) - np.linalg.pinv(M) @ M

    @cached_property
    def _gamma_factor(self):
        M, Z = self.m_op, self.z_op
        A = M.T @ (M / self.v_diag[:, None]) + self.gamma_reg * Z
        return la.cho_factor(0.5 * (A + A.T))

    @cached_property
    def data_rhs(self) -> np.ndarray:
        """``M^T V^{-1} D``."""
        r = self.d_obs / self.v_diag
        return r if self.m_op is None else self.m_op.T @ r

    def apply_gamma(self, v: np.ndarray) -> np.ndarray:
        if self.m_op is None:
            return self.v_diag * v
        return la.cho_solve(self._gamma_factor, v)

    def gamma_matrix(self) -> np.ndarray:
        """Dense ``Gamma``; for diagnostics on small problems."""
        return np.column_stack([self.apply_gamma(e) for e in np.eye(self.n)])

    def dual_hessian_apply(self, F: np.ndarray) -> np.ndarray:
        """``W Gamma W^T F``."""
        g = self.graph
        return g.grad(self.apply_gamma(g.grad_t(F)))

    @cached_property
    def dual_linear(self) -> np.ndarray:
        """``W Gamma r`` so that ``grad phi(F) = W Gamma W^T F - W Gamma r``."""
        return self.graph.grad(self.apply_gamma(self.data_rhs))

    def phi(self, F: np.ndarray) -> float:
        F = np.asarray(F, dtype=float)
        return float(0.5 * F @ self.dual_hessian_apply(F) - F @ self.dual_linear)


def prox_phi(F: np.ndarray, lam: float, problem: TVProblem, x0: np.ndarray | None = None,
             rtol: float = 1e-8, maxiter: int = 500) -> np.ndarray:
    """``argmin_G lam*phi(G) + 1/2 ||G - F||^2`` by conjugate gradients.

    Solves ``(I + lam W Gamma W^T) G = F + lam W Gamma r``.
    """
    if not lam > 0:
        raise ValueError("lam must be > 0")
    F = np.asarray(F, dtype=float)
    m = F.size
    if m == 0:
        return F.copy()
    b = F + lam * problem.dual_linear
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(m)
    op = LinearOperator((m, m), matvec=lambda v: v + lam * problem.dual_hessian_apply(v), dtype=float)
    G, info = cg(op, b, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter)
    res = np.linalg.norm(op.matvec(G) - b) / bnorm
    if info != 0 and res > rtol:
        raise ConvergenceError(f"CG did not converge in {maxiter} iterations", res)
    return G


def recover_primal(F_hat: np.ndarray, problem: TVProblem) -> np.ndarray:
    """``x = Gamma (M^T V^{-1} D - W^T F)``."""
    return problem.apply_gamma(problem.data_rhs - problem.graph.grad_t(F_hat))


def primal_objective(x: np.ndarray, problem: TVProblem, tol: float = 1e-12,
                     mu0: np.ndarray | None = None, return_mu: bool = False):
    """Primal value ``q_B(Wx) + data term + nullspace term``.

    ``mu0``/``return_mu`` pass the support-function multipliers through so a
    sequence of nearby evaluations can be warm-started.
    """
    x = np.asarray(x, dtype=float)
    g = problem.graph
    reg, mu = 0.0, None
    if g.m:
        reg, info = support_function(g.grad(x), g, problem.constraints, tol=tol, mu0=mu0,
                                     return_info=True)
        mu = info["mu"]
    Mx = x if problem.m_op is None else problem.m_op @ x
    r = Mx - problem.d_obs
    data = 0.5 * float(r @ (r / problem.v_diag))
    null = 0.0
    if problem.z_op is not None:
        Zx = problem.z_op @ x
        null = 0.5 * problem.gamma_reg * float(Zx @ Zx)
    val = reg + data + null
    return (val, mu) if return_mu else val
