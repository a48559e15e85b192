"""Batch checks of quantitative bounds on synthetic bodies and recorded runs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import eval_legendre

from .geometry import (SupportField, boundary_points, curvature_matrix, is_strictly_convex, principal_radii,
                       radii)
from .sphere import SphereGrid


def chou_wang_bound(n: int) -> float:
    return 4 * math.sqrt(2) * n**6


@dataclass
class CheckReport:
    name: str
    population: int
    worst: float
    bound: float
    passed: bool
    offending: dict | None = None
    seed: int | None = None
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"schema": 1, "check": self.name, "population": self.population, "worst": self.worst,
                "bound": self.bound, "passed": self.passed, "offending": self.offending, "seed": self.seed,
                "details": self.details}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o)}")


def summary_table(reports) -> str:
    rows = [("check", "population", "worst", "bound", "pass")]
    for r in reports:
        rows.append((r.name, str(r.population), f"{r.worst:.6g}", f"{r.bound:.6g}", "yes" if r.passed else "NO"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)


# -- random bodies ------------------------------------------------------

def _random_harmonic(grid: SphereGrid, degree: int, rng: np.random.Generator) -> np.ndarray:
    if grid.mode == "circle":
        a, b = rng.standard_normal(2)
        p = a * np.cos(degree * grid.phi) + b * np.sin(degree * grid.phi)
    elif grid.mode == "axisym":
        p = eval_legendre(degree, grid.x[:, 2])
    else:
        p = np.zeros(grid.size)
        for mono in combinations_with_replacement(range(3), degree):
            p += rng.standard_normal() * np.prod(grid.x[:, list(mono)], axis=1)
    return p / np.max(np.abs(p))


def random_body(grid: SphereGrid, rng: np.random.Generator, amplitude: float = 0.1, max_degree: int = 4,
                margin: float = 0.1, max_tries: int = 1000) -> np.ndarray:
    """h = 1 + sum_l eps_l P_l with P_l of degree l (sup-normalised), redrawn until W >= margin."""
    for _ in range(max_tries):
        h = np.ones(grid.size)
        for degree in range(1, max_degree + 1):
            h += rng.uniform(-amplitude, amplitude) * _random_harmonic(grid, degree, rng)
        W = curvature_matrix(SupportField(h, grid))
        if is_strictly_convex(W, grid.d, margin):
            return h
    raise RuntimeError(f"no admissible body in {max_tries} draws")


def random_bodies(grid: SphereGrid, count: int, seed: int, **kw) -> list[SupportField]:
    rng = np.random.default_rng(seed)
    return [SupportField(random_body(grid, rng, **kw), grid) for _ in range(count)]


def ellipsoid_field(a: float, b: float, grid: SphereGrid) -> SupportField:
    x = grid.x
    if grid.mode == "circle":
        h = np.sqrt(a**2 * x[:, 0] ** 2 + b**2 * x[:, 1] ** 2)
    else:
        h = np.sqrt(a**2 * (x[:, 0] ** 2 + x[:, 1] ** 2) + b**2 * x[:, 2] ** 2)
    return SupportField(h, grid)


def eccentric_ellipsoids(grid: SphereGrid, ratios=(1, 2, 5, 10, 20)) -> list[SupportField]:
    out = []
    for q in ratios:
        out.append(ellipsoid_field(float(q), 1.0, grid))
        if q != 1:
            out.append(ellipsoid_field(1.0, float(q), grid))
    return out


# -- checks -------------------------------------------------------------

def chou_wang_ratio(body: SupportField) -> tuple[float, float, float, float]:
    """(R^2 / (r lambda_max), r, R, lambda_max)."""
    r, R = radii(body)
    lam = float(np.max(principal_radii(curvature_matrix(body))))
    return R * R / (r * lam), r, R, lam


def check_chou_wang(bodies, seed: int | None = None) -> CheckReport:
    if not bodies:
        raise ValueError("empty population")
    n = bodies[0].grid.n
    bound = chou_wang_bound(n)
    worst, worst_info = -np.inf, None
    for i, body in enumerate(bodies):
        ratio, r, R, lam = chou_wang_ratio(body)
        if ratio > worst:
            worst, worst_info = ratio, {"index": i, "ratio": ratio, "r": r, "R": R, "lambda_max": lam,
                                        "grid": body.grid.spec}
    passed = bool(worst <= bound)
    return CheckReport("chou_wang", len(bodies), float(worst), bound, passed,
                       offending=None if passed else worst_info, seed=seed,
                       details={"worst_body": worst_info})


def _meridional_closed_form(a, b, theta):
    return a**2 * b**2 / (a**2 * np.sin(theta) ** 2 + b**2 * np.cos(theta) ** 2) ** 1.5


def _ellipse_errors(a, b, grid: SphereGrid):
    body = ellipsoid_field(a, b, grid)
    W = curvature_matrix(body)
    th = grid.theta
    err_radius = float(np.max(np.abs(W[:, 0, 0] - _meridional_closed_form(a, b, th))))
    x = grid.x
    hx = body.h
    y_exact = np.stack([a**2 * x[:, 0], a**2 * x[:, 1], b**2 * x[:, 2]], axis=1) / hx[:, None]
    err_map = float(np.max(np.abs(boundary_points(body) - y_exact)))
    return err_radius, err_map, W, y_exact


def check_ellipsoid_formulas(a: float, b: float, grid: SphereGrid) -> CheckReport:
    """Closed-form curvature and boundary-map formulas of a rotationally symmetric ellipsoid.

    (a) discrete meridional radius vs closed form, second order under refinement;
    (b) discrete boundary map grad h + h x vs its closed form, second order;
    (c) the lower-bound chain on the maximal principal radius, pointwise.
    """
    if a <= 0 or b <= 0:
        raise ValueError("semi-axes must be positive")
    if grid.mode != "axisym":
        raise ValueError("ellipsoid formulas are checked on an axisymmetric grid")
    fine = SphereGrid.axisym(2 * grid.resolution[0])
    e_rad, e_map, W, y = _ellipse_errors(a, b, grid)
    e_rad2, e_map2, _, _ = _ellipse_errors(a, b, fine)

    def order_ok(e1, e2):
        return e1 < 1e-10 or e2 <= e1 / 3

    th = grid.theta
    yn = y[:, 2]
    yp = np.hypot(y[:, 0], y[:, 1])
    merid = _meridional_closed_form(a, b, th)
    first = (b**4 + (a**2 - b**2) * yn**2) ** 1.5 / (a * b**4)
    second = yp**3 * b**2 / a**4
    yn_formula = b**2 * np.abs(np.cos(th)) / np.sqrt(a**2 * np.sin(th) ** 2 + b**2 * np.cos(th) ** 2)
    cos_formula = a * np.abs(yn) / np.sqrt(b**4 + (a**2 - b**2) * yn**2)
    bound_lhs = (b**4 + (a**2 - b**2) * yn**2) / b**4
    bound_rhs = yp**2 / a**2 + (a**2 - yp**2) / b**2
    scale = max(a, b, a**2 / b, b**2 / a) ** 3
    slack = 1e-8 * scale
    lam_exact = np.maximum(merid, _parallel_closed_form(a, b, th))
    lam_disc = principal_radii(W)[:, -1]
    chain = {
        "closed_form_first_bound": float(np.max(first - lam_exact)),
        "first_ge_second": float(np.max(second - first)),
        "normal_height_identity": float(np.max(np.abs(np.abs(yn) - yn_formula))),
        "normal_cosine_identity": float(np.max(np.abs(np.abs(np.cos(th)) - cos_formula))),
        "radius_bound_identity": float(np.max(np.abs(bound_lhs - bound_rhs))),
        "radius_bound_inequality": float(np.max(yp**2 / a**2 - bound_lhs)),
    }
    chain_ok = all(v <= slack for v in chain.values())
    disc_margin = 1e-6 + e_rad
    disc_gap = float(np.max(first - lam_disc))
    passed = bool(order_ok(e_rad, e_rad2) and order_ok(e_map, e_map2) and chain_ok and disc_gap <= disc_margin)
    worst = max(chain.values())
    return CheckReport("ellipsoid_formulas", grid.size, worst, slack, passed,
                       offending=None if passed else {"a": a, "b": b},
                       details={"a": a, "b": b, "grid": grid.spec,
                                "meridional_error": [e_rad, e_rad2], "boundary_map_error": [e_map, e_map2],
                                "chain": chain, "discrete_bound_gap": disc_gap,
                                "discrete_margin": disc_margin})


def _parallel_closed_form(a, b, theta):
    # second principal radius of a surface of revolution: h + cot(theta) h_theta
    q = a**2 * np.sin(theta) ** 2 + b**2 * np.cos(theta) ** 2
    return a**2 / np.sqrt(q)


def check_run_estimates(outcome) -> CheckReport:
    """Bounds monitored along a recorded run.

    Asserts positivity of r and sigma_k and that r lambda_max / R^2 stays above
    1 / (4 sqrt 2 n^6); constants without explicit values are only reported.
    """
    snaps = outcome.snapshots
    if len(snaps) < 2:
        raise ValueError("run needs at least two snapshots")
    n = outcome.final.h.grid.n
    if any(s["r"] is None for s in snaps):
        raise ValueError("run was recorded without radii")
    r = np.array([s["r"] for s in snaps])
    R = np.array([s["R"] for s in snaps])
    lam = np.array([s["lambda_max"] for s in snaps])
    smin = np.array([s["sigma_min"] for s in snaps])
    smax = np.array([s["sigma_max"] for s in snaps])
    zeta = np.array([s["steiner"] for s in snaps])
    chain = r * lam / R**2
    floor = 1.0 / chou_wang_bound(n)
    z0 = float(np.linalg.norm(zeta[0]))
    drift = float(np.max(np.linalg.norm(zeta - zeta[0], axis=1)))
    R0 = float(R[0])
    details = {"sigma_min": float(smin.min()), "sigma_max": float(smax.max()), "r_min": float(r.min()),
               "chain_min": float(chain.min()), "chain_floor": floor,
               "lambda_growth_ratio": float(np.max(lam / (1 + R0) ** 1.5)),
               "inradius_ratio_min": float(np.min(r * (1 + R0) ** 1.5 / R**2)),
               "steiner_drift": drift, "steiner_norm_max": float(np.max(np.linalg.norm(zeta, axis=1))),
               "steiner_norm_initial": z0, "snapshots": len(snaps)}
    passed = bool(r.min() > 0 and smin.min() > 0 and chain.min() > floor)
    return CheckReport("run_estimates", len(snaps), float(chain.min()), floor, passed,
                       offending=None if passed else {"snapshot": int(np.argmin(chain))}, details=details)
