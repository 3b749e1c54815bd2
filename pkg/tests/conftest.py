"""Shared oracles: brute-force implementations the fast paths are checked against."""

import numpy as np
import pytest


def brute_knn(points, i, k):
    """k nearest others of point i by (squared distance, index); O(n log n)."""
    d2 = ((points - points[i]) ** 2).sum(axis=1)
    idx = np.arange(len(points))
    d2 = d2.astype(np.float64)
    d2[i] = np.inf
    order = np.lexsort((idx, d2))
    return order[:k]


def naive_covariance(points, members, center, weights):
    """Double-loop weighted covariance; barycenter over all members."""
    bary = np.zeros(3)
    for j in members:
        bary += points[j]
    bary /= len(members)
    C = np.zeros((3, 3))
    for j, w in zip(members, weights):
        if j == center:
            continue
        d = points[j] - bary
        for a in range(3):
            for b in range(3):
                C[a, b] += w * d[a] * d[b]
    return C


def random_rotation(rng):
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diagonal(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
