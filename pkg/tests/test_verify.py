import copy
import json
import math

import numpy as np
import pytest

from cmflow.flow import FlowConfig, run
from cmflow.geometry import SupportField, curvature_matrix, is_strictly_convex, principal_radii
from cmflow.sphere import SphereGrid
from cmflow.verify import (chou_wang_bound, chou_wang_ratio, check_chou_wang, check_ellipsoid_formulas,
                           check_run_estimates, eccentric_ellipsoids, ellipsoid_field, random_bodies, summary_table)


def test_bound_values():
    assert chou_wang_bound(2) == pytest.approx(4 * math.sqrt(2) * 64)
    assert chou_wang_bound(3) == pytest.approx(4 * math.sqrt(2) * 729)


def test_ball_ratio_is_one():
    for g in (SphereGrid.circle(64), SphereGrid.axisym(32), SphereGrid.latlong(16, 32)):
        ratio, r, R, lam = chou_wang_ratio(SupportField(np.full(g.size, 1.3), g))
        assert ratio == pytest.approx(1.0, abs=1e-9)
        assert r == pytest.approx(1.3) and R == pytest.approx(1.3) and lam == pytest.approx(1.3)


def test_random_bodies_deterministic_and_admissible():
    g = SphereGrid.latlong(16, 32)
    a = random_bodies(g, 20, seed=9)
    b = random_bodies(g, 20, seed=9)
    assert all(np.array_equal(x.h, y.h) for x, y in zip(a, b))
    for body in a:
        W = curvature_matrix(body)
        assert is_strictly_convex(W, 2, 0.1)
        assert np.abs(body.h - 1).max() <= 0.4 + 1e-12


def test_random_bodies_are_resolution_independent():
    coarse = random_bodies(SphereGrid.axisym(32), 3, seed=4)
    fine = random_bodies(SphereGrid.axisym(64), 3, seed=4)
    # nodes of the coarse grid sit between pairs of fine nodes; compare the smooth function through its mean
    for c, f in zip(coarse, fine):
        assert c.h.mean() == pytest.approx(f.h.mean(), abs=5e-3)


def test_check_chou_wang_small_population():
    g = SphereGrid.latlong(16, 32)
    rep = check_chou_wang(random_bodies(g, 10, seed=1), seed=1)
    assert rep.passed and rep.population == 10 and rep.worst > 0.5
    doc = json.loads(rep.to_json())
    assert doc["schema"] == 1 and doc["seed"] == 1 and doc["offending"] is None
    assert "chou_wang" in summary_table([rep])
    with pytest.raises(ValueError):
        check_chou_wang([])


def test_eccentric_population():
    bodies = eccentric_ellipsoids(SphereGrid.axisym(64))
    assert len(bodies) == 9
    rep = check_chou_wang(bodies)
    assert rep.passed and rep.worst > 1


@pytest.mark.parametrize("a,b", [(2, 1), (1, 3), (10, 1), (1, 1)])
def test_ellipsoid_formulas(a, b):
    rep = check_ellipsoid_formulas(a, b, SphereGrid.axisym(128))
    assert rep.passed, rep.details


def test_ellipsoid_meridional_radius_second_order():
    errs = [check_ellipsoid_formulas(3, 1, SphereGrid.axisym(n)).details["meridional_error"][0] for n in (64, 128)]
    assert errs[1] < errs[0] / 3


def test_ellipsoid_bad_inputs():
    with pytest.raises(ValueError):
        check_ellipsoid_formulas(0, 1, SphereGrid.axisym(16))
    with pytest.raises(ValueError):
        check_ellipsoid_formulas(2, 1, SphereGrid.latlong(8, 16))


def test_ellipsoid_field_radii():
    g = SphereGrid.circle(256)
    W = curvature_matrix(ellipsoid_field(2.0, 1.0, g))
    lam = principal_radii(W)[:, 0]
    assert lam.max() == pytest.approx(4.0, rel=1e-3) and lam.min() == pytest.approx(0.5, rel=1e-3)


@pytest.fixture(scope="module")
def short_run():
    g = SphereGrid.axisym(32)
    h0 = SupportField(1 + 0.1 * g.x[:, 2] ** 2, g)
    return run(h0, FlowConfig(k=2, f=np.ones(g.size), theta=0.95, snapshot_every=5, max_steps=200))


def test_run_estimates(short_run):
    rep = check_run_estimates(short_run)
    assert rep.passed
    assert rep.details["sigma_min"] > 0 and rep.details["r_min"] > 0
    assert rep.worst > rep.bound


def test_run_estimates_flags_bad_snapshot(short_run):
    bad = copy.copy(short_run)
    bad.snapshots = [dict(s) for s in short_run.snapshots]
    bad.snapshots[1]["r"] = -1.0
    rep = check_run_estimates(bad)
    assert not rep.passed and rep.offending is not None


def test_run_estimates_needs_radii():
    g = SphereGrid.axisym(16)
    out = run(SupportField(np.full(g.size, 0.9), g),
              FlowConfig(k=2, f=np.ones(g.size), snapshot_radii=False, snapshot_every=1, early_classify=False,
                         max_steps=3))
    with pytest.raises(ValueError):
        check_run_estimates(out)
