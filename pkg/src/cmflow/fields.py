"""Built-in densities f and initial support functions, parsed from short specs.

f specs::

    constant:c
    exponential:vx,vy[,vz]          f = exp(v.x)
    exponential:c@vx,vy[,vz]        f = c exp(v.x)
    harmonic:eps@m[;eps@m...]       1/f = 1 + sum eps cos(m phi) on the circle,
                                    1/f = 1 + sum eps P_m(x_n) on the sphere
    file:path                       tabulated node values (JSON)

h0 specs::

    ball:rho[@cx,cy,cz]
    ellipsoid:a,b                   semi-axes a (equatorial / x) and b (polar / y)
    axial:c,eps,p                   h = c (1 + eps x_n^p)
    file:path
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.special import eval_legendre

from .sphere import SphereGrid


class FieldSpecError(ValueError):
    """Unparseable or invalid field specification."""


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise FieldSpecError(f"expected comma-separated numbers, got {text!r}") from exc


def _pad(v: list[float], n: int) -> np.ndarray:
    if len(v) > n:
        raise FieldSpecError(f"vector {v} has more than {n} components")
    return np.array(v + [0.0] * (n - len(v)))


def load_node_values(path: str | Path, grid: SphereGrid) -> np.ndarray:
    """Read ``{"grid": {...}, "values": [...]}`` and check it was sampled on ``grid``."""
    p = Path(path)
    if not p.exists():
        raise FieldSpecError(f"file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FieldSpecError(f"{p} is not valid JSON: {exc}") from exc
    g = data.get("grid")
    if g is None or g.get("mode") != grid.mode or list(g.get("resolution", [])) != list(grid.resolution):
        raise FieldSpecError(f"{p} was written for grid {g}, not {grid.to_dict()}")
    vals = np.asarray(data.get("values"), dtype=float)
    if vals.shape != (grid.size,) or not np.all(np.isfinite(vals)):
        raise FieldSpecError(f"{p} must hold {grid.size} finite values")
    return vals


def harmonic_terms(spec: str) -> list[tuple[float, int]]:
    terms = []
    for part in spec.split(";"):
        if not part.strip():
            continue
        try:
            eps, m = part.split("@")
            terms.append((float(eps), int(m)))
        except ValueError as exc:
            raise FieldSpecError(f"harmonic term must look like eps@m, got {part!r}") from exc
    if not terms:
        raise FieldSpecError("harmonic spec needs at least one eps@m term")
    return terms


def zonal_harmonic(grid: SphereGrid, m: int) -> np.ndarray:
    """cos(m phi) on the circle, Legendre P_m(x_n) on the sphere."""
    if grid.mode == "circle":
        return np.cos(m * grid.phi)
    return eval_legendre(m, grid.x[:, 2])


def build_f(spec: str, grid: SphereGrid) -> np.ndarray:
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    if kind == "constant":
        c = _floats(arg)
        if len(c) != 1:
            raise FieldSpecError("constant:c takes one number")
        f = np.full(grid.size, c[0])
    elif kind == "exponential":
        c = 1.0
        if "@" in arg:
            cs, arg = arg.split("@", 1)
            c = _floats(cs)[0]
        v = _pad(_floats(arg), grid.n)
        f = c * np.exp(grid.x @ v)
    elif kind == "harmonic":
        inv = np.ones(grid.size)
        for eps, m in harmonic_terms(arg):
            inv += eps * zonal_harmonic(grid, m)
        if np.any(inv <= 0):
            raise FieldSpecError(f"harmonic spec {spec!r} makes 1/f non-positive")
        f = 1.0 / inv
    elif kind == "file":
        f = load_node_values(arg, grid)
    else:
        raise FieldSpecError(f"unknown f family {kind!r}")
    if not np.all(f > 0) or not np.all(np.isfinite(f)):
        raise FieldSpecError(f"f spec {spec!r} is not positive and finite")
    return f


def build_h0(spec: str, grid: SphereGrid) -> np.ndarray:
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    if kind == "ball":
        rho_s, _, c_s = arg.partition("@")
        rho = _floats(rho_s)
        if len(rho) != 1 or rho[0] <= 0:
            raise FieldSpecError("ball:rho needs one positive radius")
        h = rho[0] + (grid.x @ _pad(_floats(c_s), grid.n) if c_s else 0.0)
    elif kind == "ellipsoid":
        ab = _floats(arg)
        if len(ab) != 2 or min(ab) <= 0:
            raise FieldSpecError("ellipsoid:a,b needs two positive semi-axes")
        a, b = ab
        if grid.mode == "circle":
            h = np.sqrt(a**2 * grid.x[:, 0] ** 2 + b**2 * grid.x[:, 1] ** 2)
        else:
            h = np.sqrt(a**2 * (grid.x[:, 0] ** 2 + grid.x[:, 1] ** 2) + b**2 * grid.x[:, 2] ** 2)
    elif kind == "axial":
        vals = _floats(arg)
        if len(vals) != 3:
            raise FieldSpecError("axial:c,eps,p takes three numbers")
        c, eps, p = vals
        h = c * (1.0 + eps * grid.zonal_coordinate() ** int(p))
    elif kind == "file":
        h = load_node_values(arg, grid)
    else:
        raise FieldSpecError(f"unknown h0 family {kind!r}")
    h = np.broadcast_to(np.asarray(h, dtype=float), (grid.size,)).copy()
    if not np.all(h > 0):
        raise FieldSpecError(f"h0 spec {spec!r} is not positive")
    return h
