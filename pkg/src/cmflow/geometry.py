"""Body-level quantities computed from a sampled support function."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from math import gamma, pi

import numpy as np
from scipy.optimize import linprog

from .sphere import SphereGrid, covariant_hessian, gradient_vectors, integrate, moment, second_moment
from .symfunc import sigma_matrix


class GammaConeError(ValueError):
    """The curvature matrix left the Garding cone at some node."""


class RadiiError(RuntimeError):
    """Linear program for the inner/outer radius failed."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(eq=False)
class SupportField:
    h: np.ndarray
    grid: SphereGrid

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        if self.h.shape != (self.grid.size,):
            raise ValueError(f"support values of shape {self.h.shape} do not match grid size {self.grid.size}")

    def scaled(self, s: float) -> "SupportField":
        return SupportField(s * self.h, self.grid)

    def translated(self, c) -> "SupportField":
        return SupportField(self.h + self.grid.linear(c), self.grid)


@dataclass
class BodyMetrics:
    r: float
    R: float
    steiner: np.ndarray
    quermass: float
    sigma_min: float
    sigma_max: float
    lambda_max: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["steiner"] = [float(v) for v in self.steiner]
        return d


def unit_ball_volume(n: int) -> float:
    return pi ** (n / 2) / gamma(n / 2 + 1)


def curvature_matrix(field: SupportField) -> np.ndarray:
    """W = Hess h + h I at every node, shape (N, d, d)."""
    W = covariant_hessian(field.h, field.grid)
    idx = np.arange(field.grid.d)
    W[:, idx, idx] += field.h[:, None]
    return W


def principal_radii(W: np.ndarray) -> np.ndarray:
    """Eigenvalues of W per node, ascending, shape (N, d)."""
    if W.shape[-1] == 1:
        return W[..., 0].copy()
    if W.shape[-1] == 2:
        a, b, c = W[:, 0, 0], W[:, 1, 1], W[:, 0, 1]
        mean = 0.5 * (a + b)
        rad = np.hypot(0.5 * (a - b), c)
        return np.stack([mean - rad, mean + rad], axis=1)
    return np.linalg.eigvalsh(W)


def sigma_field(W: np.ndarray, k: int) -> np.ndarray:
    return np.asarray(sigma_matrix(W, k))


def is_strictly_convex(W: np.ndarray, k: int, margin: float = 0.0) -> bool:
    """Every node in the Garding cone with smallest principal radius > margin."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    lam = principal_radii(W)
    if not np.all(lam[:, 0] > margin):
        return False
    for i in range(1, k + 1):
        if not np.all(sigma_matrix(W, i) > 0):
            return False
    return True


def steiner_point(field: SupportField) -> np.ndarray:
    """Steiner point, normalised by the discrete second-moment matrix.

    The continuous normaliser is the unit-ball volume times the identity; the
    discrete moment matrix equals it up to quadrature error and makes the
    point exactly equivariant under translations h -> h + c.x.
    """
    grid = field.grid
    M = grid.ops.get("moment_matrix")
    if M is None:
        M = grid.ops["moment_matrix"] = second_moment(np.ones(grid.size), grid)
    rhs = moment(field.h, grid)
    if grid.mode == "axisym":
        return np.array([0.0, 0.0, rhs[2] / M[2, 2]])
    return np.linalg.solve(M, rhs)


def _lp_radius(h, X, outer: bool):
    m = X.shape[1]
    # variables (z, t)
    if outer:
        # min t  s.t.  h_i - z.x_i <= t
        A = np.hstack([-X, -np.ones((len(h), 1))])
        b = -h
        c = np.r_[np.zeros(m), 1.0]
    else:
        # max t  s.t.  h_i - z.x_i >= t
        A = np.hstack([X, np.ones((len(h), 1))])
        b = h
        c = np.r_[np.zeros(m), -1.0]
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * (m + 1), method="highs-ds")
    if res.status != 0:
        raise RadiiError(f"radius LP failed: {res.message}", best=res.x)
    z = res.x[:m]
    slack = h - X @ z
    return (slack.max() if outer else slack.min()), z


def radii(field: SupportField) -> tuple[float, float]:
    """(inradius r, circumradius R) over all centres, solved as linear programs.

    R = min_z max_x (h - z.x) and r = max_z min_x (h - z.x).  For axisymmetric
    grids the optimal centre lies on the axis.
    """
    grid = field.grid
    X = grid.x[:, 2:3] if grid.mode == "axisym" else grid.x
    R, _ = _lp_radius(field.h, X, outer=True)
    r, _ = _lp_radius(field.h, X, outer=False)
    return float(r), float(R)


def quermassintegral(field: SupportField, k: int) -> float:
    """(1/(k+1)) * integral of h sigma_k(W)."""
    W = curvature_matrix(field)
    sig = [sigma_matrix(W, i) for i in range(1, k + 1)]
    inside = np.all([s > 0 for s in sig], axis=0)
    if not np.all(inside):
        raise GammaConeError(f"W leaves Gamma_{k} at {int(np.sum(~inside))} nodes")
    return integrate(field.h * sig[-1], field.grid) / (k + 1)


def necessary_condition_residual(field: SupportField, k: int) -> np.ndarray:
    """Integral of x sigma_k(W); vanishes for closed bodies."""
    W = curvature_matrix(field)
    return moment(sigma_matrix(W, k), field.grid)


def boundary_points(field: SupportField) -> np.ndarray:
    """Inverse Gauss map F(x) = grad h + h x, shape (N, n)."""
    return gradient_vectors(field.h, field.grid) + field.h[:, None] * field.grid.x


def body_metrics(field: SupportField, k: int, with_radii: bool = True) -> BodyMetrics:
    W = curvature_matrix(field)
    lam = principal_radii(W)
    sig = sigma_matrix(W, k)
    if with_radii:
        r, R = radii(field)
    else:
        r = R = float("nan")
    q = integrate(field.h * sig, field.grid) / (k + 1)
    return BodyMetrics(r=r, R=R, steiner=steiner_point(field), quermass=float(q),
                       sigma_min=float(np.min(sig)), sigma_max=float(np.max(sig)),
                       lambda_max=float(np.max(lam)))
