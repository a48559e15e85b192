"""Grids on S^1 and S^2 and covariant difference operators.

Three layouts are supported:

``circle``   N equispaced angles on S^1 (ambient dimension 2).
``axisym``   N cell-centred colatitudes; fields are independent of longitude.
``latlong``  Ntheta x Nphi cell-centred colatitude/longitude nodes.

Fields are flat float arrays with one value per node (latlong is row-major in
colatitude).  Every stencil is a "chord" stencil, i.e. scaled so that it is
exact on constants and on restrictions of linear functions x.e.  As a result
W(h) = Hess h + h I is exactly translation invariant on the discrete level,
and the Laplacian is symmetric with respect to the quadrature weights.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DEFAULT_RESOLUTION = {"circle": (256,), "axisym": (256,), "latlong": (96, 192)}
MIN_NODES_PER_CIRCLE = 8


class GridError(ValueError):
    """Invalid or too coarse grid specification."""


def _periodic(n: int, offsets: dict[int, float]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for j in range(n):
        for off, v in offsets.items():
            rows.append(j)
            cols.append((j + off) % n)
            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(eq=False)
class SphereGrid:
    mode: str
    resolution: tuple
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    ops: dict = field(repr=False, default_factory=dict)

    @property
    def n(self) -> int:
        """Ambient dimension."""
        return 2 if self.mode == "circle" else 3

    @property
    def d(self) -> int:
        return self.n - 1

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def spec(self) -> str:
        return f"{self.mode}:" + "x".join(str(r) for r in self.resolution)

    @property
    def spacing(self) -> float:
        """Angular spacing of the finest direction."""
        if self.mode == "circle":
            return 2 * np.pi / self.resolution[0]
        return np.pi / self.resolution[0]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "resolution": list(self.resolution)}

    # -- construction -------------------------------------------------
    @classmethod
    def circle(cls, n: int = 256) -> "SphereGrid":
        if n < MIN_NODES_PER_CIRCLE:
            raise GridError(f"circle grid needs >= {MIN_NODES_PER_CIRCLE} nodes, got {n}")
        dphi = 2 * np.pi / n
        phi = dphi * np.arange(n)
        x = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        w = np.full(n, dphi)
        d1 = _periodic(n, {1: 1.0, -1: -1.0}) / (2 * np.sin(dphi))
        d2 = _periodic(n, {1: 1.0, 0: -2.0, -1: 1.0}) / (2 * (1 - np.cos(dphi)))
        ops = {"d1": d1, "hess": [[d2.tocsr()]]}
        return cls("circle", (n,), np.full(n, np.pi / 2), phi, x, w, ops)

    @classmethod
    def axisym(cls, n: int = 256) -> "SphereGrid":
        if n < MIN_NODES_PER_CIRCLE:
            raise GridError(f"axisym grid needs >= {MIN_NODES_PER_CIRCLE} rings, got {n}")
        theta, w_ring, dth, dtheta, lap_t = _colatitude_ops(n)
        s, c = np.sin(theta), np.cos(theta)
        x = np.stack([s, np.zeros(n), c], axis=1)
        w = 2 * np.pi * w_ring
        cot = sp.diags(c / s)
        h_tt = (lap_t - cot @ dtheta).tocsr()
        h_pp = (cot @ dtheta).tocsr()
        zero = sp.csr_matrix((n, n))
        ops = {"dtheta": dtheta.tocsr(), "dphi": zero, "lap": lap_t.tocsr(),
               "hess": [[h_tt, zero], [zero, h_pp]]}
        return cls("axisym", (n,), theta, np.zeros(n), x, w, ops)

    @classmethod
    def latlong(cls, ntheta: int = 96, nphi: int = 192) -> "SphereGrid":
        if nphi < MIN_NODES_PER_CIRCLE or ntheta < MIN_NODES_PER_CIRCLE // 2:
            raise GridError(f"latlong grid {ntheta}x{nphi} is too coarse")
        if nphi % 2:
            raise GridError("latlong grid needs an even number of longitudes")
        theta1, w_ring, _, _, _ = _colatitude_ops(ntheta)
        dphi = 2 * np.pi / nphi
        phi1 = dphi * np.arange(nphi)
        th, ph = np.meshgrid(theta1, phi1, indexing="ij")
        th, ph = th.ravel(), ph.ravel()
        s, c = np.sin(th), np.cos(th)
        x = np.stack([s * np.cos(ph), s * np.sin(ph), c], axis=1)
        w = np.repeat(w_ring * dphi, nphi)

        N = ntheta * nphi
        half = nphi // 2

        def idx(i, j):
            return i * nphi + (j % nphi)

        rows, cols, vals = [], [], []
        inv2 = 1.0 / (2 * np.sin(np.pi / ntheta))
        for i in range(ntheta):
            for j in range(nphi):
                r = idx(i, j)
                up = idx(i + 1, j) if i + 1 < ntheta else idx(ntheta - 1, j + half)
                dn = idx(i - 1, j) if i > 0 else idx(0, j + half)
                rows += [r, r]
                cols += [up, dn]
                vals += [inv2, -inv2]
        dtheta = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

        eye_t = sp.identity(ntheta, format="csr")
        eye_p = sp.identity(nphi, format="csr")
        d1p = _periodic(nphi, {1: 1.0, -1: -1.0}) / (2 * np.sin(dphi))
        d2p = _periodic(nphi, {1: 1.0, 0: -2.0, -1: 1.0}) / (2 * (1 - np.cos(dphi)))
        dphi_op = sp.kron(eye_t, d1p, format="csr")
        dphiphi = sp.kron(eye_t, d2p, format="csr")
        _, _, _, _, lap_t1 = _colatitude_ops(ntheta)
        lap_t = sp.kron(lap_t1, eye_p, format="csr")

        inv_s = sp.diags(1 / s)
        cot = sp.diags(c / s)
        h_tt = (lap_t - cot @ dtheta).tocsr()
        h_pp = (inv_s @ inv_s @ dphiphi + cot @ dtheta).tocsr()
        h_tp = (inv_s @ (dtheta @ dphi_op - cot @ dphi_op)).tocsr()
        lap = (lap_t + inv_s @ inv_s @ dphiphi).tocsr()
        ops = {"dtheta": dtheta, "dphi": dphi_op, "lap": lap,
               "hess": [[h_tt, h_tp], [h_tp, h_pp]]}
        return cls("latlong", (ntheta, nphi), th, ph, x, w, ops)

    @classmethod
    def from_spec(cls, spec: str) -> "SphereGrid":
        """Parse ``circle:256``, ``axisym:128``, ``latlong:96x192`` (resolution optional)."""
        m = re.fullmatch(r"\s*(circle|axisym|latlong)\s*(?::\s*(\d+)(?:x(\d+))?)?\s*", spec)
        if not m:
            raise GridError(f"cannot parse grid spec {spec!r}")
        mode, a, b = m.groups()
        res = DEFAULT_RESOLUTION[mode]
        if a is not None:
            res = (int(a),) if mode != "latlong" else (int(a), int(b) if b else 2 * int(a))
        if mode != "latlong" and b is not None:
            raise GridError(f"{mode} grid takes a single resolution")
        return getattr(cls, mode)(*res)

    @classmethod
    def from_dict(cls, d: dict) -> "SphereGrid":
        return getattr(cls, d["mode"])(*d["resolution"])

    # -- geometry helpers ----------------------------------------------
    def frame(self) -> np.ndarray:
        """Orthonormal tangent frame, shape (N, d, n): rows e_theta, e_phi."""
        if self.mode == "circle":
            return np.stack([-self.x[:, 1], self.x[:, 0]], axis=1)[:, None, :]
        s, c = np.sin(self.theta), np.cos(self.theta)
        cp, spp = np.cos(self.phi), np.sin(self.phi)
        e_t = np.stack([c * cp, c * spp, -s], axis=1)
        e_p = np.stack([-spp, cp, np.zeros_like(s)], axis=1)
        return np.stack([e_t, e_p], axis=1)

    def linear(self, e) -> np.ndarray:
        """Restriction of x -> e.x to the grid."""
        return self.x @ np.asarray(e, dtype=float)

    def zonal_coordinate(self) -> np.ndarray:
        """x_n (cos of colatitude); cos(phi) on the circle."""
        return self.x[:, -1] if self.mode != "circle" else self.x[:, 0]

    def linear_basis(self) -> np.ndarray:
        """Columns spanning the restrictions of linear functions representable on the grid."""
        if self.mode == "axisym":
            return self.x[:, 2:3]
        return self.x


def _colatitude_ops(n: int):
    """Cell-centred colatitudes, ring areas per unit longitude and 1-D operators.

    Returns (theta, ring_weight, dth, dtheta, lap_theta) where lap_theta is the
    conservative finite-volume form of (1/sin)(sin u')', scaled to be exact on
    cos(theta) and sin(theta).  Ghost values across a pole reflect the field
    (axisymmetric fields are even through the pole).
    """
    dth = np.pi / n
    theta = (np.arange(n) + 0.5) * dth
    faces = np.arange(n + 1) * dth
    cf = np.cos(faces)
    ring = cf[:-1] - cf[1:]  # integral of sin over the cell
    sf = np.sin(faces)
    sf[0] = sf[-1] = 0.0

    inv2 = 1.0 / (2 * np.sin(dth))
    up = np.minimum(np.arange(n) + 1, n - 1)
    dn = np.maximum(np.arange(n) - 1, 0)
    rows = np.r_[np.arange(n), np.arange(n)]
    dtheta = sp.csr_matrix((np.r_[np.full(n, inv2), np.full(n, -inv2)],
                            (rows, np.r_[up, dn])), shape=(n, n))

    scale = 1.0 / (ring * np.sin(dth))
    main = -(sf[1:] + sf[:-1]) * scale
    upper = sf[1:-1] * scale[:-1]
    lower = sf[1:-1] * scale[1:]
    lap = sp.diags([main, upper, lower], [0, 1, -1], format="csr")
    return theta, ring, dth, dtheta, lap


def spherical_gradient(h, grid: SphereGrid) -> np.ndarray:
    """Frame components of the spherical gradient, shape (N, d)."""
    h = np.asarray(h, dtype=float)
    if grid.mode == "circle":
        return (grid.ops["d1"] @ h)[:, None]
    g_t = grid.ops["dtheta"] @ h
    g_p = (grid.ops["dphi"] @ h) / np.sin(grid.theta)
    return np.stack([g_t, g_p], axis=1)


def gradient_vectors(h, grid: SphereGrid) -> np.ndarray:
    """Spherical gradient as ambient vectors, shape (N, n)."""
    comps = spherical_gradient(h, grid)
    return np.einsum("na,nai->ni", comps, grid.frame())


def covariant_hessian(h, grid: SphereGrid) -> np.ndarray:
    """Orthonormal-frame covariant Hessian of the round metric, shape (N, d, d)."""
    h = np.asarray(h, dtype=float)
    if h.shape != (grid.size,):
        raise GridError(f"field of shape {h.shape} does not match grid with {grid.size} nodes")
    hs = grid.ops["hess"]
    d = len(hs)
    out = np.empty((grid.size, d, d))
    for a in range(d):
        for b in range(a, d):
            out[:, a, b] = hs[a][b] @ h
            if b != a:
                out[:, b, a] = out[:, a, b]
    return out


def laplacian(h, grid: SphereGrid) -> np.ndarray:
    if grid.mode == "circle":
        return grid.ops["hess"][0][0] @ h
    return grid.ops["lap"] @ h


def integrate(g, grid: SphereGrid) -> float:
    """Quadrature of a scalar field over the sphere; fixed summation order."""
    return float(np.dot(grid.weights, np.asarray(g, dtype=float)))


def moment(g, grid: SphereGrid) -> np.ndarray:
    """Vector integral of x g(x) over the sphere (length n)."""
    g = np.asarray(g, dtype=float)
    if grid.mode == "axisym":
        return np.array([0.0, 0.0, float(np.dot(grid.weights, grid.x[:, 2] * g))])
    return (grid.weights * g) @ grid.x


def second_moment(g, grid: SphereGrid) -> np.ndarray:
    """Matrix integral of x x^T g(x) over the sphere."""
    g = np.asarray(g, dtype=float)
    wg = grid.weights * g
    if grid.mode == "axisym":
        s2 = float(np.dot(wg, grid.x[:, 0] ** 2))
        return np.diag([s2 / 2, s2 / 2, float(np.dot(wg, grid.x[:, 2] ** 2))])
    return np.einsum("n,ni,nj->ij", wg, grid.x, grid.x)
