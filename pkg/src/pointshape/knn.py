"""k-nearest-neighbor queries with deterministic tie handling.

A neighborhood of size k is the query point itself plus its k nearest
other points (so it holds k+1 indices). Distance ties are broken by the
smaller point index, which keeps sweep outputs reproducible on gridded
data where equal distances are the norm, not the exception.

The index is a scipy cKDTree snapshot; candidate lists from the tree are
re-ranked by exact (squared distance, index) order, and a ball re-query
resolves the rare case where ties straddle the candidate horizon.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud

_PAD = 8  # extra candidates fetched per query to absorb boundary ties


@dataclass
class NeighborList:
    """Neighborhood of one point: `members[0]` is the center itself,
    followed by its k nearest others sorted by (distance, index)."""

    center: int
    members: np.ndarray
    k: int


class NeighborIndex:
    """Immutable acceleration structure over one cloud snapshot."""

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise ValueError("cannot index an empty cloud")
        self.cloud = cloud
        self.points = cloud.points
        self.n = len(cloud)
        self.tree = cKDTree(self.points)

    # -- internals ---------------------------------------------------------

    def _exact_row(self, i: int, k: int, dk: float) -> np.ndarray:
        """Exhaustive (d^2, index) selection inside the tie radius."""
        p = self.points[i]
        r = float(np.sqrt(dk)) * (1.0 + 1e-9) + 1e-300
        cand = np.asarray(self.tree.query_ball_point(p, r), dtype=np.int64)
        d2 = ((self.points[cand] - p) ** 2).sum(axis=1)
        d2[cand == i] = np.inf
        order = np.lexsort((cand, d2))
        return cand[order[:k]]

    def neighbors_of(self, rows: np.ndarray, k: int) -> np.ndarray:
        """(len(rows), k) array of neighbor indices (self excluded),
        each row sorted by (squared distance, index)."""
        rows = np.asarray(rows, dtype=np.int64)
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > self.n - 1:
            raise ValueError(f"k={k} exceeds n-1={self.n - 1}")
        kq = min(self.n, k + 1 + _PAD)
        _, cand = self.tree.query(self.points[rows], k=kq)
        cand = cand.reshape(len(rows), kq).astype(np.int64)

        diff = self.points[cand] - self.points[rows][:, None, :]
        d2 = np.einsum("mjc,mjc->mj", diff, diff)
        d2[cand == rows[:, None]] = np.inf

        # lexicographic (d2, index): stable sort by index, then by distance
        by_idx = np.argsort(cand, axis=1, kind="stable")
        cand = np.take_along_axis(cand, by_idx, axis=1)
        d2 = np.take_along_axis(d2, by_idx, axis=1)
        by_d = np.argsort(d2, axis=1, kind="stable")
        cand = np.take_along_axis(cand, by_d, axis=1)
        d2 = np.take_along_axis(d2, by_d, axis=1)

        out = cand[:, :k].copy()
        if kq < self.n:
            # candidate horizon: anything beyond it is at least d2[:, -1] away
            boundary = d2[:, k - 1]
            horizon = d2[:, -1]
            unsafe = boundary * (1.0 + 1e-9) >= horizon
            for m in np.nonzero(unsafe)[0]:
                out[m] = self._exact_row(int(rows[m]), k, float(boundary[m]))
        return out

    # -- public surface ----------------------------------------------------

    def knn(self, i: int, k: int) -> NeighborList:
        """Neighborhood of point i: itself plus its k nearest others."""
        if not 0 <= i < self.n:
            raise IndexError(f"point index {i} out of range [0, {self.n})")
        nbr = self.neighbors_of(np.array([i]), k)[0]
        members = np.concatenate([[i], nbr])
        return NeighborList(center=i, members=members, k=k)

    def knn_all(self, k: int) -> np.ndarray:
        """Neighbor indices for every point: (n, k), self excluded."""
        return self.neighbors_of(np.arange(self.n), k)


def build(cloud: PointCloud) -> NeighborIndex:
    return NeighborIndex(cloud)


def mean_knn_distance(cloud: PointCloud, index: NeighborIndex = None, m: int = 6) -> float:
    """Mean distance from every point to each of its m nearest others.

    This is the model-unit length scale used to express noise amplitudes.
    """
    n = len(cloud)
    if n <= m:
        raise ValueError(f"need more than m={m} points, got {n}")
    idx = index if index is not None else NeighborIndex(cloud)
    nbr = idx.knn_all(m)
    diff = cloud.points[nbr] - cloud.points[:, None, :]
    dist = np.sqrt(np.einsum("mjc,mjc->mj", diff, diff))
    return float(dist.sum() / (n * m))
