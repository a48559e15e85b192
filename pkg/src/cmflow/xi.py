"""Weighting vector xi with int x exp(-xi.x) / f dx = 0.

The moment map is the gradient of the strictly convex potential
Phi(xi) = int exp(-xi.x) / f dx, so the root is found by Newton's method on
Phi with Armijo backtracking.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sphere import SphereGrid


class XiSolveError(RuntimeError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass
class XiResult:
    xi: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    phi_history: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"xi": [float(v) for v in self.xi], "residual_norm": self.residual_norm,
                "iterations": self.iterations, "converged": self.converged}


def _active_axes(grid: SphereGrid) -> np.ndarray:
    # axisymmetric fields only see the polar component
    return np.array([2]) if grid.mode == "axisym" else np.arange(grid.n)


def potential(xi, f, grid: SphereGrid) -> float:
    return float(np.dot(grid.weights, np.exp(-(grid.x @ xi)) / f))


def solve_xi(f, grid: SphereGrid, tol: float = 1e-10, max_iter: int = 100) -> XiResult:
    """Newton iteration from xi = 0.

    ``residual_norm`` is |int x e^{-xi.x}/f| / Phi(xi), which is invariant under
    f -> c f, so the stopping rule does not depend on the scale of f.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,) or not np.all(f > 0):
        raise ValueError("f must be positive with one value per grid node")
    axes = _active_axes(grid)
    X = grid.x[:, axes]
    wf = grid.weights / f
    xi = np.zeros(len(axes))

    def parts(z):
        q = wf * np.exp(-(X @ z))
        phi = float(q.sum())
        grad = -(q @ X)
        hess = (X * q[:, None]).T @ X
        return q, phi, grad, hess

    q, phi, grad, hess = parts(xi)
    history = [phi]
    it = 0
    while True:
        res = float(np.linalg.norm(grad)) / phi
        if res < tol:
            full = np.zeros(grid.n)
            full[axes] = xi
            return XiResult(full, res, it, True, history)
        if it >= max_iter:
            full = np.zeros(grid.n)
            full[axes] = xi
            raise XiSolveError(f"no convergence in {max_iter} iterations, residual {res:.3e}", last=full)
        p = -np.linalg.solve(hess, grad)
        slope = float(grad @ p)
        alpha = 1.0
        Xp = X @ p
        while True:
            # Phi(xi + alpha p) - Phi(xi) without cancellation, so the test stays meaningful near the root
            decrease = float(np.dot(q, np.expm1(-alpha * Xp)))
            if decrease <= 1e-4 * alpha * slope or alpha < 1e-12:
                break
            alpha *= 0.5
        if decrease >= 0:
            full = np.zeros(grid.n)
            full[axes] = xi
            raise XiSolveError(f"line search stalled at residual {res:.3e}", last=full)
        xi = xi + alpha * p
        q, phi, grad, hess = parts(xi)
        history.append(phi)
        it += 1
