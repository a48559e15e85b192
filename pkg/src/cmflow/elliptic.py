"""Stationary solutions of sigma_k(Hess h + h I) = 1/f_eff.

Two independent routes: an exact Fourier division on the circle (k = 1) and a
damped Newton iteration on the same discrete operator the flow uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import SupportField, curvature_matrix, principal_radii
from .sphere import SphereGrid, covariant_hessian, moment
from .symfunc import sigma_matrix, sigma_partial


class UnsolvableError(ValueError):
    def __init__(self, message, moments=None):
        super().__init__(message)
        self.moments = moments


class NewtonFailure(RuntimeError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass(eq=False)
class EllipticSolution:
    h: SupportField
    residual_sup: float
    method: str
    iterations: int = 0
    converged: bool = True
    history: list | None = None

    def as_dict(self) -> dict:
        return {"method": self.method, "residual_sup": self.residual_sup, "iterations": self.iterations,
                "converged": self.converged, "grid": self.h.grid.to_dict(),
                "values": [float(v) for v in self.h.h]}


def residual(h: np.ndarray, grid: SphereGrid, k: int, f_eff: np.ndarray) -> np.ndarray:
    W = curvature_matrix(SupportField(h, grid))
    return sigma_matrix(W, k) - 1.0 / f_eff


def fourier_solve_circle(f, grid: SphereGrid, symbol: str = "exact") -> EllipticSolution:
    """Solve h'' + h = 1/f by dividing Fourier coefficients.

    ``symbol="exact"`` divides by 1 - m^2; ``symbol="stencil"`` divides by the
    symbol of the discrete second difference, so the result solves the discrete
    equation to round-off.
    """
    if grid.mode != "circle":
        raise ValueError("fourier_solve_circle needs a circle grid")
    f = np.asarray(f, dtype=float)
    N = grid.size
    g = 1.0 / f
    G = np.fft.fft(g) / N
    first = np.array([G[1], G[-1]])
    if np.max(np.abs(first)) > 1e-8:
        raise UnsolvableError(f"first Fourier modes of 1/f are {np.abs(first).max():.3e}, not below 1e-8",
                              moments=moment(g, grid))
    m = np.fft.fftfreq(N, 1.0 / N)
    if symbol == "exact":
        denom = 1.0 - m**2
    elif symbol == "stencil":
        dphi = 2 * np.pi / N
        denom = 1.0 - (1 - np.cos(m * dphi)) / (1 - np.cos(dphi))
    else:
        raise ValueError(f"unknown symbol {symbol!r}")
    H = np.zeros_like(G)
    ok = np.abs(np.abs(m) - 1) > 0.5
    H[ok] = G[ok] / denom[ok]
    h = np.real(np.fft.ifft(H * N))
    res = residual(h, grid, 1, f)
    return EllipticSolution(SupportField(h, grid), float(np.max(np.abs(res))), "fourier_circle")


def linearized_operator(h: np.ndarray, grid: SphereGrid, k: int) -> sp.csr_matrix:
    """Sparse matrix of u -> sum_ij sigma_k^{ij}(W) (Hess_ij u + u delta_ij)."""
    W = curvature_matrix(SupportField(h, grid))
    P = np.asarray(sigma_partial(W, k))
    hs = grid.ops["hess"]
    d = len(hs)
    A = sp.diags(np.trace(P, axis1=1, axis2=2))
    for a in range(d):
        for b in range(d):
            A = A + sp.diags(P[:, a, b]) @ hs[a][b]
    return A.tocsr()


def _is_admissible(h, grid, k) -> bool:
    W = curvature_matrix(SupportField(h, grid))
    if not np.all(principal_radii(W)[:, 0] > 0):
        return False
    return all(np.all(sigma_matrix(W, i) > 0) for i in range(1, k + 1))


def newton_solve(h_init: SupportField, f_eff, k: int, tol: float = 1e-8, max_iter: int = 50,
                 moment_tol: float = 1e-6) -> EllipticSolution:
    """Damped Newton on sigma_k(W(h)) - 1/f_eff.

    Each update is constrained to be weight-orthogonal to the linear functions
    (the translation kernel) through a bordered system, whose multipliers also
    absorb the small discrete solvability defect.
    """
    grid = h_init.grid
    f_eff = np.asarray(f_eff, dtype=float)
    mom = moment(1.0 / f_eff, grid)
    if np.linalg.norm(mom) > moment_tol:
        raise UnsolvableError(f"moment of 1/f_eff is {np.linalg.norm(mom):.3e}, above {moment_tol}", moments=mom)
    h = h_init.h.copy()
    if not _is_admissible(h, grid, k):
        raise NewtonFailure("initial guess is not strictly convex", last=h_init)
    X = grid.linear_basis()
    m = X.shape[1]
    B = sp.csr_matrix(X)
    Bt = sp.csr_matrix((X * grid.weights[:, None]).T)
    R = residual(h, grid, k, f_eff)
    rn = float(np.max(np.abs(R)))
    history = [rn]
    it = 0
    while rn >= tol and it < max_iter:
        A = linearized_operator(h, grid, k)
        K = sp.bmat([[A, B], [Bt, None]], format="csc")
        sol = spsolve(K, np.r_[-R, np.zeros(m)])
        dh = sol[:grid.size]
        alpha = 1.0
        while True:
            trial = h + alpha * dh
            if _is_admissible(trial, grid, k):
                R_t = residual(trial, grid, k, f_eff)
                rn_t = float(np.max(np.abs(R_t)))
                if rn_t < rn:
                    break
            alpha *= 0.5
            if alpha < 1e-10:
                raise NewtonFailure(f"damping failed at iteration {it}, residual {rn:.3e}",
                                    last=SupportField(h, grid))
        h, R, rn = trial, R_t, rn_t
        history.append(rn)
        it += 1
    return EllipticSolution(SupportField(h, grid), rn, "damped_newton", it, rn < tol, history)


def condition_ii(f, grid: SphereGrid, k: int) -> tuple[bool, float]:
    """Whether Hess f^{1/k} + f^{1/k} I >= 0 at every node; returns (flag, min eigenvalue)."""
    g = np.asarray(f, dtype=float) ** (1.0 / k)
    M = covariant_hessian(g, grid)
    idx = np.arange(grid.d)
    M[:, idx, idx] += g[:, None]
    lo = float(np.min(principal_radii(M)[:, 0]))
    return lo >= 0, lo
