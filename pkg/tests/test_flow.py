import numpy as np
import pytest
from scipy.integrate import solve_ivp

from cmflow.elliptic import fourier_solve_circle, newton_solve
from cmflow.fields import build_f
from cmflow.flow import (ConvexityFault, FlowConfig, FlowConfigError, FlowState, effective_density, functional_J,
                         run, speed, step, theta_bisection, w11_at, w11_diagnostic)
from cmflow.geometry import SupportField, steiner_point
from cmflow.sphere import SphereGrid, covariant_hessian
from cmflow.symfunc import binom
from cmflow.verify import random_bodies


def ball(g, rho=1.0):
    return SupportField(np.full(g.size, float(rho)), g)


@pytest.fixture(scope="module")
def ax():
    return SphereGrid.axisym(32)


def test_speed_of_balls(ax):
    cfg = FlowConfig(k=2, f=np.ones(ax.size))
    assert np.abs(speed(ball(ax), cfg)).max() < 1e-12
    np.testing.assert_allclose(speed(ball(ax, 1.7), cfg), 2 * np.log(1.7), atol=1e-12)


def test_speed_vanishes_on_circle_solution():
    errs = []
    for n in (64, 128, 256):
        g = SphereGrid.circle(n)
        f = build_f("harmonic:0.3@2", g)
        sol = fourier_solve_circle(f, g)
        errs.append(np.abs(speed(sol.h, FlowConfig(k=1, f=f))).max())
    assert errs[1] <= errs[0] / 3 and errs[2] <= errs[1] / 3
    g = SphereGrid.circle(256)
    f = build_f("harmonic:0.3@2", g)
    assert np.abs(speed(fourier_solve_circle(f, g, symbol="stencil").h, FlowConfig(k=1, f=f))).max() < 1e-12


def test_speed_convexity_fault():
    g = SphereGrid.circle(32)
    with pytest.raises(ConvexityFault):
        speed(SupportField(g.x[:, 0].copy(), g), FlowConfig(k=1, f=np.ones(g.size)))


def test_functional_on_balls(ax):
    cfg = FlowConfig(k=2, f=np.ones(ax.size))
    rhos = np.linspace(0.5, 1.5, 41)
    J = [functional_J(ball(ax, r), cfg) for r in rhos]
    np.testing.assert_allclose(J, -4 * np.pi * rhos**3 / 3 + 4 * np.pi * rhos, rtol=1e-12)
    assert rhos[int(np.argmax(J))] == pytest.approx(1.0)
    # J restricted to balls has a critical point at the steady radius; it is a maximum along dilations
    assert J[20] > J[19] and J[20] > J[21]


@pytest.mark.parametrize("spec", ["circle:64", "axisym:48", "latlong:24x48"])
def test_functional_translation_invariance(spec):
    g = SphereGrid.from_spec(spec)
    body = random_bodies(g, 1, seed=2)[0] if spec != "latlong:24x48" else ball(g, 1.2)
    cfg = FlowConfig(k=g.d, f=np.ones(g.size))
    c = [0, 0, 0.2] if g.mode == "axisym" else [0.1, -0.2, 0.05][: g.n]
    assert functional_J(body.translated(c), cfg) == pytest.approx(functional_J(body, cfg), abs=1e-9)


def test_functional_translation_invariance_latlong_k1():
    g = SphereGrid.latlong(24, 48)
    body = random_bodies(g, 1, seed=2)[0]
    cfg = FlowConfig(k=1, f=np.ones(g.size))
    assert functional_J(body.translated([0.1, -0.2, 0.05]), cfg) == pytest.approx(functional_J(body, cfg), abs=1e-9)


def test_functional_domain_error():
    from cmflow.geometry import GammaConeError
    g = SphereGrid.circle(32)
    with pytest.raises(GammaConeError):
        functional_J(SupportField(g.x[:, 0].copy(), g), FlowConfig(k=1, f=np.ones(g.size)))


def _state(h, cfg, dt):
    return FlowState(t=0.0, h=h, last_dt=0.0, J=functional_J(h, cfg), speed_sup=0.0, dt_next=dt)


def test_steady_state_step(ax):
    cfg = FlowConfig(k=2, f=np.ones(ax.size))
    new = step(_state(ball(ax), cfg, 1e-3), cfg)
    assert np.abs(new.h.h - 1).max() < 1e-14
    assert new.t == pytest.approx(1e-3)


@pytest.mark.parametrize("spec,k,m", [("axisym:32", 2, 1.0), ("axisym:32", 1, 0.7), ("circle:64", 1, 1.3)])
def test_ball_step_local_error_third_order(spec, k, m):
    g = SphereGrid.from_spec(spec)
    C = binom(g.d, k)
    rho0 = 1.2

    def exact(dt):
        sol = solve_ivp(lambda t, r: np.log(C * r**k * m), (0, dt), [rho0], rtol=1e-13, atol=1e-15)
        return sol.y[0, -1]

    errs = []
    for dt in (0.02, 0.01):
        cfg = FlowConfig(k=k, f=np.full(g.size, m), dt_max=dt, cfl=1e6)
        new = step(_state(ball(g, rho0), cfg, dt), cfg)
        assert new.last_dt == pytest.approx(dt)
        errs.append(abs(new.h.h.mean() - exact(dt)))
    assert errs[0] / errs[1] > 6


def test_run_converges_immediately_on_steady_ball(ax):
    out = run(ball(ax), FlowConfig(k=2, f=np.ones(ax.size)))
    assert out.classification == "converged" and out.steps == 0


def test_run_shrinks_for_large_density(ax):
    M = 10.0
    cfg = FlowConfig(k=2, f=np.full(ax.size, M), theta=0.2, early_classify=False)
    out = run(ball(ax), cfg)
    assert out.classification == "shrank"
    assert out.reason == "min h below shrink_floor"
    assert out.final.h.h.min() < 0.05 * 0.2
    # scalar ODE shrinks as well
    assert np.log(0.2**2 * M) < 0


def test_run_expands_for_small_density(ax):
    m = 0.1
    cfg = FlowConfig(k=2, f=np.full(ax.size, m), theta=5.0, early_classify=False)
    out = run(ball(ax), cfg)
    assert out.classification == "expanded"
    assert out.reason == "max h above expand_ceiling"
    assert np.log(25 * m) > 0


def test_early_classification_matches_thresholds(ax):
    for theta, expected in ((0.8, "shrank"), (1.25, "expanded")):
        slow = run(ball(ax), FlowConfig(k=2, f=np.ones(ax.size), theta=theta, early_classify=False))
        fast = run(ball(ax), FlowConfig(k=2, f=np.ones(ax.size), theta=theta))
        assert slow.classification == fast.classification == expected
        assert fast.steps < slow.steps


def test_run_stalls_on_max_steps(ax):
    h0 = SupportField(1 + 0.1 * ax.x[:, 2] ** 2, ax)
    out = run(h0, FlowConfig(k=2, f=np.ones(ax.size), max_steps=3, early_classify=False))
    assert out.classification == "stalled" and out.steps == 3


def test_invalid_configs(ax):
    with pytest.raises(FlowConfigError):
        run(ball(ax), FlowConfig(k=3, f=np.ones(ax.size)))
    with pytest.raises(FlowConfigError):
        run(ball(ax), FlowConfig(k=2, f=np.ones(ax.size), shrink_floor=2.0))
    with pytest.raises(FlowConfigError):
        run(ball(ax), FlowConfig(k=2, f=np.ones(ax.size), weighted=True))
    with pytest.raises(FlowConfigError):
        run(ball(ax), FlowConfig(k=2, f=np.ones(ax.size), dt_min=1.0, dt_max=0.1))


def test_monotone_functional_and_gradient_consistency():
    g = SphereGrid.circle(128)
    f = build_f("harmonic:0.3@2", g)
    h0 = SupportField(1 + 0.05 * np.cos(3 * g.phi), g)
    out = run(h0, FlowConfig(k=1, f=f, theta=0.95, snapshot_every=1, snapshot_radii=False, max_steps=400))
    assert out.j_violations() == 0
    assert out.rejections.get("functional", 0) == 0
    snaps = out.snapshots
    errs = []
    for a, b in zip(snaps[1:-2], snaps[2:-1]):
        fd = (b["J"] - a["J"]) / (b["t"] - a["t"])
        mid = 0.5 * (a["dJdt"] + b["dJdt"])
        errs.append(abs(fd - mid) / (abs(mid) + 1e-12))
    assert max(errs) < 5e-2


@pytest.mark.parametrize("spec,k", [("axisym:64", 2), ("circle:128", 1)])
def test_ball_trajectory_matches_ode(spec, k):
    g = SphereGrid.from_spec(spec)
    m, rho0 = 1.0, 1.1
    C = binom(g.d, k)
    cfg = FlowConfig(k=k, f=np.full(g.size, m), max_time=1.0, dt_max=2e-3, early_classify=False,
                     snapshot_every=5, snapshot_radii=False)
    out = run(ball(g, rho0), cfg)
    assert out.final.t == pytest.approx(1.0)
    t = np.array([s["t"] for s in out.snapshots])
    rho = np.array([s["h_max"] for s in out.snapshots])
    sol = solve_ivp(lambda t, r: np.log(C * r**k * m), (0, 1), [rho0], t_eval=t, rtol=1e-12, atol=1e-14)
    assert np.abs(rho - sol.y[0]).max() < 1e-4


def test_bisection_finds_unit_ball(ax):
    res = theta_bisection(ball(ax), FlowConfig(k=2, f=np.ones(ax.size)), 0.5, 2.0)
    lo, hi = res.window
    assert lo <= 1.0 <= hi or res.converged
    assert hi - lo < 1e-3 * lo or res.converged
    assert abs(res.theta_star - 1.0) < 1e-3


def test_bisection_circle_unit():
    g = SphereGrid.circle(64)
    res = theta_bisection(ball(g), FlowConfig(k=1, f=np.ones(g.size)), 0.7, 1.6)
    assert abs(res.theta_star - 1.0) < 1e-3


def test_bisection_precondition(ax):
    with pytest.raises(FlowConfigError, match="expanded"):
        theta_bisection(ball(ax), FlowConfig(k=2, f=np.ones(ax.size)), 1.5, 2.0)


def test_bisection_parallel_probes(ax):
    h0 = SupportField(1 + 0.05 * ax.x[:, 2] ** 2, ax)
    cfg = FlowConfig(k=2, f=np.ones(ax.size), snapshot_radii=False)
    res = theta_bisection(h0, cfg, 0.5, 2.0, rel_window=1e-2, jobs=2)
    lo, hi = res.window
    assert lo < res.theta_star < hi or res.converged
    assert len(res.probes) > 2


def test_weighted_limit_is_predicted_ball(ax):
    c, v = 2.0, np.array([0, 0, 0.4])
    f = c * np.exp(ax.x @ v)
    cfg = FlowConfig(k=2, f=f, weighted=True, xi=-v, tol_converge=1e-5)
    h0 = SupportField(1 + 0.05 * ax.x[:, 2] ** 3, ax)
    res = theta_bisection(h0, cfg, 0.3, 1.5, rel_window=1e-9)
    assert res.converged
    h = res.outcome.final.h
    centred = h.h - ax.x @ steiner_point(h)
    expected = (1 / c) ** 0.5 * binom(2, 2) ** -0.5
    assert np.abs(centred - expected).max() < 1e-4
    polished = newton_solve(h, effective_density(cfg, ax), 2)
    assert polished.converged and np.abs(polished.h.h - h.h).max() < 10 * cfg.tol_converge
    z = np.array([s["steiner"] for s in res.outcome.snapshots])
    assert np.all(np.linalg.norm(z, axis=1) <= np.linalg.norm(z[0]) + 1)


def test_w11_examples(ax):
    cfg = FlowConfig(k=2, f=np.ones(ax.size))
    assert w11_diagnostic(ball(ax), cfg) == pytest.approx(0.0, abs=1e-12)
    assert w11_diagnostic(ball(ax, 1.5), cfg) == pytest.approx(2 * np.log(1.5), abs=1e-12)


def test_w11_linear_log_density():
    g = SphereGrid.latlong(24, 48)
    f = np.exp(g.x[:, 2])
    cfg = FlowConfig(k=2, f=f)
    H = covariant_hessian(np.log(f), g)
    np.testing.assert_allclose(H, -g.x[:, 2, None, None] * np.eye(2), atol=1e-10)
    equator = int(np.argmin(np.abs(g.x[:, 2])))
    for direction in ([1, 0], [0, 1], [1, 1]):
        assert w11_at(ball(g), cfg, equator, direction) == pytest.approx(0.0, abs=1e-10)
