"""Covariance, eigenspace, and volume-radius estimators.

References are analytic: the cube and cross-polytope second moments have
closed forms, cube and l1-ball volumes are exact, and projections are checked
against hand-computable bodies.
"""

import numpy as np
import pytest

from geonoise.body import PolytopeHandle
from geonoise.estimates import (estimate_covariance, estimate_volume_radius,
                                project_query, top_eigenspace_projection)
from geonoise.query import (QueryMatrix, hypercube_query,
                            random_bernoulli_query, sensitivity)
from geonoise.rng import RngStream
from geonoise.sampling import GridWalkConfig


def _skewed_query(d, scale, rng):
    entries = rng.integers(0, 2, size=(d, 8 * d)) * 2.0 - 1.0
    entries[1:] /= scale
    return QueryMatrix(entries)


def test_covariance_cube_matches_analytic():
    cube = PolytopeHandle(hypercube_query(2))
    cov = estimate_covariance(cube, RngStream(401).generator(),
                              samples=60_000, sampler="rejection")
    # E x_i x_j over the square: (1/3) I
    assert np.all(np.abs(cov.matrix - np.eye(2) / 3.0) <= 0.02 / 3.0)
    assert cov.samples == 60_000
    assert cov.mean_ok


def test_covariance_cross_matches_analytic():
    cross = PolytopeHandle(QueryMatrix(np.eye(2)))
    cov = estimate_covariance(cross, RngStream(402).generator(),
                              samples=60_000, sampler="rejection")
    assert np.all(np.abs(cov.matrix - np.eye(2) / 6.0) <= 0.03 / 6.0)


def test_covariance_eigensystem_is_sorted_and_orthonormal():
    cube = PolytopeHandle(hypercube_query(3))
    cov = estimate_covariance(cube, RngStream(403).generator(),
                              samples=5000, sampler="rejection")
    assert np.all(np.diff(cov.eigenvalues) <= 1e-15)
    V = cov.eigenvectors
    assert np.allclose(V.T @ V, np.eye(3), atol=1e-9)
    recon = V @ np.diag(cov.eigenvalues) @ V.T
    assert np.allclose(recon, cov.matrix, atol=1e-12)


def test_covariance_flags_biased_sampler():
    cube = PolytopeHandle(hypercube_query(2))

    def shifted(count):
        return RngStream(404).generator().uniform(0.0, 1.0, size=(count, 2))

    cov = estimate_covariance(cube, RngStream(405).generator(),
                              samples=2000, sampler=shifted)
    assert not cov.mean_ok
    assert cov.mean_norm > 0.5


def test_covariance_detects_skewed_spectrum():
    # needle body: unit spread along the first axis, 1/16 along the rest;
    # the second-moment spectrum must separate by at least d^2
    d = 4
    query = _skewed_query(d, 16.0, RngStream(406).generator())
    handle = PolytopeHandle(query)
    cfg = GridWalkConfig(beta=0.25, steps=1200)
    cov = estimate_covariance(handle, RngStream(407).generator(),
                              samples=2048, walk_config=cfg)
    assert cov.eigenvalues[0] / cov.eigenvalues[1] >= d * d
    assert cov.mean_ok


def test_covariance_validation():
    cube = PolytopeHandle(hypercube_query(2))
    with pytest.raises(ValueError):
        estimate_covariance(cube, RngStream(408).generator(), samples=1)
    with pytest.raises(ValueError):
        estimate_covariance(cube, RngStream(408).generator(),
                            samples=100, sampler="magic")

    def bad_shape(count):
        return np.zeros((count, 3))

    with pytest.raises(ValueError):
        estimate_covariance(cube, RngStream(408).generator(),
                            samples=100, sampler=bad_shape)


def test_projection_identity_and_axis():
    cube = PolytopeHandle(hypercube_query(2))
    cov = estimate_covariance(cube, RngStream(409).generator(),
                              samples=4000, sampler="rejection")
    P, U = top_eigenspace_projection(cov, 2)
    assert np.allclose(P, np.eye(2), atol=1e-8)
    assert U.shape == (2, 2)
    with pytest.raises(ValueError):
        top_eigenspace_projection(cov, 0)
    with pytest.raises(ValueError):
        top_eigenspace_projection(cov, 3)


def test_projection_finds_long_axis():
    # rectangle [-1,1] x [-1/4,1/4]: top eigenvector is the first axis
    entries = np.array([[1.0, 1.0, -1.0, -1.0],
                        [0.25, -0.25, 0.25, -0.25]])
    handle = PolytopeHandle(QueryMatrix(entries))
    cov = estimate_covariance(handle, RngStream(410).generator(),
                              samples=8000, sampler="rejection")
    P, U = top_eigenspace_projection(cov, 1)
    assert abs(U[0, 0]) >= 0.99
    assert np.allclose(P, P @ P, atol=1e-8)
    assert np.allclose(P, P.T, atol=1e-8)
    assert np.allclose(P, np.diag([1.0, 0.0]), atol=0.02)


def test_project_query_basic_and_isometry():
    cube = hypercube_query(2)
    same = project_query(cube, np.eye(2))
    np.testing.assert_allclose(same.entries, cube.entries)

    row = project_query(cube, np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(row.entries, cube.entries[:1])

    rng = RngStream(411).generator()
    B, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    proj = project_query(cube, B)
    x = rng.standard_normal(4)
    want = B @ B.T @ (cube.entries @ x)
    got = B @ (proj.entries @ x)
    assert np.allclose(got, want, atol=1e-9)


def test_project_query_relaxes_entry_bound():
    cube = hypercube_query(2)
    diag = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
    proj = project_query(cube, diag)
    assert not proj.bounded
    assert proj.entries.max() > 1.0
    assert np.isclose(sensitivity(proj), np.sqrt(2.0))
    with pytest.raises(ValueError):
        project_query(cube, np.array([[1.0], [1.0]]))
    with pytest.raises(ValueError):
        project_query(cube, np.eye(3))


def test_volume_radius_cube_exact():
    for d in (2, 3):
        est = estimate_volume_radius(PolytopeHandle(hypercube_query(d)),
                                     RngStream(412 + d).generator(), 20_000)
        assert abs(est.radius - 2.0) <= 0.04
        assert est.ci_low <= 2.0 <= est.ci_high or np.isclose(est.radius, 2.0)


def test_volume_radius_l1_balls():
    # vol(B1^d) = 2^d/d!
    cross2 = PolytopeHandle(QueryMatrix(np.eye(2)))
    est2 = estimate_volume_radius(cross2, RngStream(415).generator(), 40_000)
    want2 = np.sqrt(2.0)
    assert abs(est2.radius - want2) <= 0.05 * want2
    # CI is a 95% interval around the estimate; check structure, not luck
    assert est2.ci_low <= est2.radius <= est2.ci_high
    assert est2.ci_high - est2.ci_low <= 0.05 * want2

    cross3 = PolytopeHandle(QueryMatrix(np.eye(3)))
    est3 = estimate_volume_radius(cross3, RngStream(416).generator(), 60_000)
    want3 = (8.0 / 6.0) ** (1.0 / 3.0)
    assert abs(est3.radius - want3) <= 0.05 * want3
    assert est3.ci_low <= est3.radius <= est3.ci_high
    assert 0 < est3.hits < est3.trials


def test_volume_radius_random_queries_stay_above_floor():
    # dense random workloads keep vol^(1/d) above c*sqrt(log(n/d)/d)
    d, n = 6, 512
    floor = 0.5 * np.sqrt(np.log(n / d) / d)
    for seed in (417, 418, 419):
        query = random_bernoulli_query(d, n, RngStream(seed).generator())
        est = estimate_volume_radius(PolytopeHandle(query),
                                     RngStream(seed + 100).generator(), 30_000)
        assert est.radius >= floor


def test_volume_radius_degenerate_axis():
    handle = PolytopeHandle(QueryMatrix(np.array([[1.0, -1.0],
                                                  [0.0, 0.0]])))
    est = estimate_volume_radius(handle, RngStream(420).generator(), 1000)
    assert est.radius == 0.0
    assert est.hits == 0


def test_volume_radius_validation():
    with pytest.raises(ValueError):
        estimate_volume_radius(PolytopeHandle(hypercube_query(2)),
                               RngStream(421).generator(), 50)
    with pytest.raises(ValueError):
        estimate_volume_radius(PolytopeHandle(QueryMatrix(np.eye(12))),
                               RngStream(421).generator(), 1000)
    with pytest.raises(ValueError):
        estimate_volume_radius(PolytopeHandle(hypercube_query(2), inflate=True),
                               RngStream(421).generator(), 1000)


def test_projected_volume_exceeds_inscribed_ball():
    # projecting the square onto its first axis gives [-1,1]: the projected
    # volume radius (2) must stay above the inscribed-ball radius (1)
    proj = project_query(hypercube_query(2), np.array([[1.0], [0.0]]))
    est = estimate_volume_radius(PolytopeHandle(proj),
                                 RngStream(422).generator(), 5000)
    assert est.radius >= 1.0


def test_isodet_identity_cube_smoke():
    # det(M)^(1/d) / vol^(2/d) = 1/12 for the cube
    d = 2
    cube = PolytopeHandle(hypercube_query(d))
    cov = estimate_covariance(cube, RngStream(423).generator(),
                              samples=40_000, sampler="rejection")
    vol = estimate_volume_radius(cube, RngStream(424).generator(), 20_000)
    ratio = np.linalg.det(cov.matrix) ** (1.0 / d) / vol.radius ** 2
    assert abs(ratio - 1.0 / 12.0) <= 0.1 / 12.0
