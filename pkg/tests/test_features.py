import math

import numpy as np
import pytest

from pointshape import (
    NeighborIndex,
    PointCloud,
    SigmoidParams,
    classify,
    covariance,
    degeneracy_threshold,
    eigenvalues_sym3,
    entropy_error,
    features_LPS,
    generate_synthetic,
    is_degenerate,
    neighborhood_weights,
)
from pointshape.features import eigh_sym3_batch, eigvals_sym3_batch, features_from_eigs
from pointshape.knn import NeighborList
from pointshape.weights import WeightMap
from conftest import naive_covariance, random_rotation, random_unit_vectors

PI = math.pi
LN3 = math.log(3.0)


def _neighborhood(points, center=0):
    members = np.arange(len(points))
    members[0], members[center] = members[center], members[0]
    return NeighborList(center=center, members=np.roll(np.arange(len(points)), 0), k=len(points) - 1)


def _direct(points, normals, members, center, a, b):
    cloud = PointCloud(points, normals)
    nl = NeighborList(center=center, members=np.asarray(members), k=len(members) - 1)
    wm = neighborhood_weights(cloud, nl, SigmoidParams(a, b))
    return cloud, nl, wm


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

def test_covariance_collinear_triple():
    pts = np.array([[0.0, 0, 0], [-1, 0, 0], [1, 0, 0]])
    normals = np.tile([0.0, 0, 1], (3, 1))
    cloud, nl, wm = _direct(pts, normals, [0, 1, 2], 0, PI, PI)
    C = covariance(cloud, nl, wm)
    np.testing.assert_allclose(C, np.diag([2.0, 0, 0]), atol=1e-15)


def test_covariance_square_plus_center():
    pts = np.array([[0.0, 0, 0], [1, 1, 0], [1, -1, 0], [-1, 1, 0], [-1, -1, 0]])
    normals = np.tile([0.0, 0, 1], (5, 1))
    cloud, nl, wm = _direct(pts, normals, [0, 1, 2, 3, 4], 0, PI, PI)
    C = covariance(cloud, nl, wm)
    np.testing.assert_allclose(C, np.diag([4.0, 4.0, 0]), atol=1e-15)


def test_covariance_zero_when_all_weights_zero():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    normals = np.array([[0.0, 0, 1], [0, 0, -1], [0, 0, -1]])
    cloud, nl, wm = _direct(pts, normals, [0, 1, 2], 0, 0.0, 0.0)
    C = covariance(cloud, nl, wm)
    np.testing.assert_array_equal(C, np.zeros((3, 3)))


def test_covariance_matches_naive_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(3, 25))
        pts = rng.normal(size=(n, 3)) * rng.uniform(0.1, 10)
        normals = random_unit_vectors(rng, n)
        members = np.arange(n)
        cloud = PointCloud(pts, normals)
        nl = NeighborList(center=0, members=members, k=n - 1)
        a, b = np.sort(rng.uniform(0, PI, size=2))
        wm = neighborhood_weights(cloud, nl, SigmoidParams(float(a), float(b)))
        C = covariance(cloud, nl, wm)
        ref = naive_covariance(pts, members, 0, wm.weights)
        scale = max(np.abs(ref).max(), 1e-30)
        assert np.abs(C - ref).max() <= 1e-12 * scale


def test_covariance_psd(rng):
    for _ in range(500):
        n = int(rng.integers(3, 15))
        pts = rng.normal(size=(n, 3))
        normals = random_unit_vectors(rng, n)
        cloud = PointCloud(pts, normals)
        nl = NeighborList(center=0, members=np.arange(n), k=n - 1)
        wm = neighborhood_weights(cloud, nl, SigmoidParams(PI / 6, PI / 2))
        C = covariance(cloud, nl, wm)
        lam = eigvals_sym3_batch(C[None])[0]
        assert lam[2] >= -1e-12 * max(np.trace(C), 1e-30)


def test_covariance_rejects_mismatched_weights():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    cloud = PointCloud(pts, np.tile([0.0, 0, 1], (3, 1)))
    nl = NeighborList(center=0, members=np.array([0, 1, 2]), k=2)
    wm = WeightMap(center=0, indices=np.array([0, 2, 1]), weights=np.ones(3))
    with pytest.raises(ValueError):
        covariance(cloud, nl, wm)


def test_covariance_rotation_equivariance(rng):
    pts = rng.normal(size=(12, 3))
    normals = random_unit_vectors(rng, 12)
    cloud = PointCloud(pts, normals)
    nl = NeighborList(center=0, members=np.arange(12), k=11)
    wm = neighborhood_weights(cloud, nl, SigmoidParams(PI / 3, PI))
    C = covariance(cloud, nl, wm)

    R = random_rotation(rng)
    cloud_r = PointCloud(pts @ R.T, normals @ R.T)
    wm_r = neighborhood_weights(cloud_r, nl, SigmoidParams(PI / 3, PI))
    C_r = covariance(cloud_r, nl, wm_r)
    np.testing.assert_allclose(C_r, R @ C @ R.T, atol=1e-9 * max(1.0, np.abs(C).max()))

    lam = eigvals_sym3_batch(C[None])[0]
    lam_r = eigvals_sym3_batch(C_r[None])[0]
    np.testing.assert_allclose(lam_r, lam, rtol=1e-9, atol=1e-12 * np.trace(C))


def test_scaling_leaves_features_invariant(rng):
    pts = rng.normal(size=(10, 3))
    normals = random_unit_vectors(rng, 10)
    cloud = PointCloud(pts, normals)
    nl = NeighborList(center=0, members=np.arange(10), k=9)
    wm = neighborhood_weights(cloud, nl, SigmoidParams(PI / 2, PI))
    C = covariance(cloud, nl, wm)
    s = 7.25
    cloud_s = PointCloud(pts * s, normals)
    wm_s = neighborhood_weights(cloud_s, nl, SigmoidParams(PI / 2, PI))
    C_s = covariance(cloud_s, nl, wm_s)
    lam = eigvals_sym3_batch(C[None])[0]
    lam_s = eigvals_sym3_batch(C_s[None])[0]
    np.testing.assert_allclose(lam_s, lam * s * s, rtol=1e-9)
    f = features_from_eigs(lam)
    f_s = features_from_eigs(lam_s)
    np.testing.assert_allclose(f_s, f, atol=1e-9)
    assert abs(entropy_error(f_s) - entropy_error(f)) <= 1e-9


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------

def test_eigenvalues_diagonal():
    vals, vecs = eigenvalues_sym3(np.diag([2.0, 0.0, 0.0]))
    np.testing.assert_array_equal(vals, [2.0, 0.0, 0.0])
    np.testing.assert_allclose(np.abs(vecs.T @ vecs), np.eye(3), atol=1e-12)


def test_eigenvalues_identity():
    vals, _ = eigenvalues_sym3(np.eye(3))
    np.testing.assert_allclose(vals, np.ones(3), atol=1e-15)


def test_eigenvalues_known_spectrum(rng):
    R = random_rotation(rng)
    M = R @ np.diag([5.0, 2.0, 1.0]) @ R.T
    vals, vecs = eigenvalues_sym3(M)
    np.testing.assert_allclose(vals, [5.0, 2.0, 1.0], rtol=1e-9)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(M @ vecs, vecs * vals[None, :], atol=1e-9 * 5)


def test_eigenvalues_match_numpy_oracle(rng):
    for trial in range(300):
        if trial % 3 == 0:
            lam_true = np.sort(10.0 ** rng.uniform(-6, 6, size=3))[::-1]
        elif trial % 3 == 1:
            v = 10.0 ** rng.uniform(-3, 3)
            lam_true = np.array([v, v, v * rng.uniform(0, 1)])
        else:
            v = 10.0 ** rng.uniform(-3, 3)
            lam_true = np.array([v, v * rng.uniform(0, 1), 0.0])
        R = random_rotation(rng)
        M = (R * lam_true[None, :]) @ R.T
        M = 0.5 * (M + M.T)
        vals, vecs = eigenvalues_sym3(M)
        ref = np.linalg.eigvalsh(M)[::-1]
        scale = max(abs(ref[0]), abs(ref[2]), 1e-300)
        assert np.abs(vals - ref).max() <= 1e-9 * scale
        assert np.abs(vecs.T @ vecs - np.eye(3)).max() <= 1e-9
        assert np.abs(M @ vecs - vecs * vals[None, :]).max() <= 1e-8 * scale


def test_eigenvalues_batch_matches_single(rng):
    mats = []
    for _ in range(64):
        A = rng.normal(size=(3, 3))
        mats.append(A @ A.T)
    M = np.array(mats)
    batch = eigvals_sym3_batch(M)
    for i in range(64):
        single, _ = eigenvalues_sym3(M[i])
        np.testing.assert_allclose(batch[i], single, rtol=1e-12, atol=1e-12 * np.trace(M[i]))


def test_eigh_batch_quality(rng):
    A = rng.normal(size=(200, 3, 3))
    M = np.einsum("mab,mcb->mac", A, A)
    vals, vecs = eigh_sym3_batch(M)
    resid = np.einsum("mab,mbj->maj", M, vecs) - vecs * vals[:, None, :]
    scale = np.abs(M).reshape(200, 9).max(axis=1)
    assert (np.abs(resid).reshape(200, 9).max(axis=1) <= 1e-9 * scale).all()
    gram = np.einsum("mcj,mck->mjk", vecs, vecs) - np.eye(3)
    assert np.abs(gram).max() <= 1e-9


def test_eigenvalues_zero_matrix():
    vals, vecs = eigenvalues_sym3(np.zeros((3, 3)))
    np.testing.assert_array_equal(vals, np.zeros(3))
    np.testing.assert_array_equal(vecs, np.eye(3))


def test_eigenvalues_rejects_asymmetric():
    M = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(ValueError):
        eigenvalues_sym3(M)


def test_eigenvalues_negative_clamp():
    # PSD up to rounding: a tiny negative eigenvalue is clamped to zero
    M = np.diag([1.0, 1e-13, -1e-13])
    vals, _ = eigenvalues_sym3(M)
    assert vals[2] == 0.0


# ---------------------------------------------------------------------------
# dimensionality features + entropy
# ---------------------------------------------------------------------------

def test_features_extreme_cases():
    np.testing.assert_allclose(features_LPS([2.5, 0, 0]), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(features_LPS([2.5, 2.5, 2.5]), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(features_LPS([2.5, 2.5, 0]), [0, 1, 0], atol=1e-15)


def test_features_thirds():
    np.testing.assert_allclose(features_LPS([3.0, 2.0, 1.0]), [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_features_degenerate_input():
    with pytest.raises(ValueError):
        features_LPS([0.0, 0.0, 0.0])


def test_entropy_zero_families():
    for rho in (1e-6, 1.0, 1e6):
        for lam in ([rho, 0, 0], [rho, rho, 0], [rho, rho, rho]):
            assert entropy_error(features_LPS(lam)) <= 1e-12


def test_entropy_maximum():
    assert abs(entropy_error(features_LPS([3.0, 2.0, 1.0])) - LN3) <= 1e-12


def test_entropy_half_half():
    assert abs(entropy_error([0.5, 0.5, 0.0]) - math.log(2.0)) <= 1e-15


def test_entropy_bounds(rng):
    f = rng.dirichlet(np.ones(3), size=100_000)
    e = entropy_error(f)
    assert (e >= 0.0).all()
    assert (e <= LN3 + 1e-12).all()


# ---------------------------------------------------------------------------
# degeneracy + classification
# ---------------------------------------------------------------------------

def test_is_degenerate_examples():
    assert is_degenerate([0.0, 0.0, 0.0])
    assert is_degenerate([1e-30, 0.0, 0.0], eps_abs=1e-24)
    assert not is_degenerate([2.0, 0.0, 0.0], eps_abs=1e-24)


def test_degeneracy_threshold_scales_with_cloud():
    cloud = generate_synthetic("plane", 25, spacing=1.0)
    eps1 = degeneracy_threshold(cloud)
    big = PointCloud(cloud.points * 1000.0, cloud.normals)
    assert abs(degeneracy_threshold(big) - eps1 * 1e6) <= 1e-9 * eps1 * 1e6


def test_classify_examples():
    assert classify([1.0, 0.0, 0.0]) == "linear"
    assert classify([0.2, 0.7, 0.1]) == "planar"
    assert classify([0.1, 0.2, 0.7]) == "scattered"
    assert classify([0.4, 0.4, 0.2]) == "linear"  # tie-break order
    assert classify([0.3, 0.35, 0.35]) == "planar"


# ---------------------------------------------------------------------------
# non-degeneracy property (paper claim, small sample; full run in acceptance)
# ---------------------------------------------------------------------------

def test_nondegenerate_with_open_upper_threshold(rng):
    from pointshape.optimizer import default_grid

    grid = default_grid()
    for _ in range(200):
        n = int(rng.integers(3, 12))
        pts = rng.normal(size=(n, 3))
        normals = random_unit_vectors(rng, n)
        cloud = PointCloud(pts, normals)
        nl = NeighborList(center=0, members=np.arange(n), k=n - 1)
        for a in grid.A:
            wm = neighborhood_weights(cloud, nl, SigmoidParams(a, PI))
            C = covariance(cloud, nl, wm)
            assert np.trace(C) > 0.0
