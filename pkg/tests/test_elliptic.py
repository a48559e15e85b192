import numpy as np
import pytest

from cmflow.elliptic import (NewtonFailure, UnsolvableError, condition_ii, fourier_solve_circle, linearized_operator,
                             newton_solve, residual)
from cmflow.fields import build_f
from cmflow.geometry import SupportField
from cmflow.sphere import SphereGrid
from cmflow.symfunc import binom
from cmflow.verify import random_bodies
from cmflow.xi import solve_xi


def test_fourier_constant():
    g = SphereGrid.circle(64)
    sol = fourier_solve_circle(np.ones(g.size), g)
    np.testing.assert_allclose(sol.h.h, 1.0, atol=1e-14)
    assert sol.residual_sup < 1e-13


def test_fourier_second_harmonic():
    g = SphereGrid.circle(128)
    eps = 0.3
    f = 1 / (1 + eps * np.cos(2 * g.phi))
    sol = fourier_solve_circle(f, g)
    np.testing.assert_allclose(sol.h.h, 1 - eps / 3 * np.cos(2 * g.phi), atol=1e-13)
    assert sol.method == "fourier_circle"


def test_fourier_rejects_first_harmonic():
    g = SphereGrid.circle(64)
    with pytest.raises(UnsolvableError) as exc:
        fourier_solve_circle(build_f("harmonic:0.2@1", g), g)
    assert exc.value.moments is not None


def test_fourier_unknown_symbol():
    g = SphereGrid.circle(16)
    with pytest.raises(ValueError):
        fourier_solve_circle(np.ones(16), g, symbol="spectral")


def test_newton_matches_fourier_stencil_solution():
    g = SphereGrid.circle(256)
    f = build_f("harmonic:0.3@2;0.1@3", g)
    ref = fourier_solve_circle(f, g, symbol="stencil")
    assert ref.residual_sup < 1e-12
    sol = newton_solve(SupportField(np.ones(g.size), g), f, 1)
    assert sol.converged
    assert np.abs(sol.h.h - ref.h.h).max() < 1e-8


def test_newton_axisym_ball():
    g = SphereGrid.axisym(64)
    sol = newton_solve(SupportField(np.full(g.size, 1.1), g), np.ones(g.size), 2)
    assert sol.converged and np.abs(sol.h.h - 1).max() < 1e-8
    assert sol.history[-1] < sol.history[0]


@pytest.mark.parametrize("spec,k", [("axisym:48", 2), ("axisym:48", 1), ("circle:64", 1)])
def test_newton_weighted_ball(spec, k):
    g = SphereGrid.from_spec(spec)
    c = 2.0
    v = [0.4, 0.1] if g.mode == "circle" else [0, 0, 0.4]
    f = c * np.exp(g.x @ np.array(v))
    xi = solve_xi(f, g).xi
    f_eff = f * np.exp(g.x @ xi)
    sol = newton_solve(SupportField(np.ones(g.size), g), f_eff, k)
    expected = (binom(g.d, k) * c) ** (-1 / k)
    assert sol.converged and np.abs(sol.h.h - expected).max() < 1e-8


def test_newton_moment_precondition():
    g = SphereGrid.axisym(32)
    with pytest.raises(UnsolvableError):
        newton_solve(SupportField(np.ones(g.size), g), np.exp(g.x[:, 2]), 2)


def test_newton_rejects_nonconvex_start():
    g = SphereGrid.circle(32)
    with pytest.raises(NewtonFailure):
        newton_solve(SupportField(0.1 + np.cos(3 * g.phi), g), np.ones(g.size), 1)


def test_linearization_against_finite_differences():
    g = SphereGrid.latlong(32, 64)
    body = random_bodies(g, 1, seed=1)[0]
    f = np.ones(g.size)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.size)
    L = linearized_operator(body.h, g, 2) @ u
    best = np.inf
    for eps in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        fd = (residual(body.h + eps * u, g, 2, f) - residual(body.h - eps * u, g, 2, f)) / (2 * eps)
        best = min(best, np.abs(fd - L).max() / np.abs(L).max())
    assert best < 1e-6


def test_condition_ii():
    g = SphereGrid.circle(128)
    ok, lo = condition_ii(np.ones(g.size), g, 1)
    assert ok and lo == pytest.approx(1.0)
    ok, lo = condition_ii(np.exp(5 * g.x[:, 0]), g, 1)
    assert not ok and lo < 0


def test_solution_document():
    g = SphereGrid.circle(16)
    doc = fourier_solve_circle(np.ones(16), g).as_dict()
    assert doc["grid"] == g.to_dict() and len(doc["values"]) == 16
