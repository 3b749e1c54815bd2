"""Per-point grid search for the best (a, b, k) weighting triple.

Every point gets the admissible-triple argmin of the classification
entropy, with degenerate evaluations (all-zero covariance) treated as
+inf. Ties resolve lexicographically (a, then b, then k ascending), so
outputs are reproducible and independent of execution order.

The sweep kernel is vectorized over blocks of points; `evaluate_point`
runs the same kernel on a single row, so a sweep cell and a direct
evaluation agree bit-for-bit.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .features import (
    classify,
    degeneracy_threshold,
    entropy_error,
    eigvals_sym3_batch,
    features_from_eigs,
)
from .geometry import PointCloud
from .knn import NeighborIndex
from .weights import SigmoidParams, weights_from_cos

_CHUNK = 512


@dataclass(frozen=True)
class ParameterGrid:
    """Sorted angle candidates A, B (radians, [0, pi]) and neighbor counts K."""

    A: tuple
    B: tuple
    K: tuple

    def __post_init__(self):
        object.__setattr__(self, "A", tuple(sorted(float(a) for a in self.A)))
        object.__setattr__(self, "B", tuple(sorted(float(b) for b in self.B)))
        object.__setattr__(self, "K", tuple(sorted(int(k) for k in self.K)))
        if not self.A or not self.B or not self.K:
            raise ValueError("grid axes must be non-empty")
        for v in self.A + self.B:
            if not 0.0 <= v <= math.pi:
                raise ValueError(f"grid angle {v!r} outside [0, pi]")
        if self.K[0] < 1:
            raise ValueError("neighbor counts must be >= 1")
        if not self.admissible_pairs():
            raise ValueError("grid admits no (a, b) pair with a <= b")

    def admissible_pairs(self) -> list:
        """(a, b) combinations with a <= b, in lexicographic order."""
        return [(a, b) for a in self.A for b in self.B if a <= b]


def default_grid() -> ParameterGrid:
    """Seven evenly spread angles for both thresholds, k from 6 to 20."""
    angles = (
        0.0,
        math.pi / 6.0,
        math.pi / 3.0,
        math.pi / 2.0,
        2.0 * math.pi / 3.0,
        5.0 * math.pi / 6.0,
        math.pi,
    )
    return ParameterGrid(A=angles, B=angles, K=tuple(range(6, 21)))


@dataclass
class PointOptimum:
    """Winning triple for one point, plus the degeneracy bookkeeping.

    e_star is +inf and lps/label are None when every admissible triple
    degenerated; pair_all_degenerate[p] is True when admissible pair p
    degenerated for every k in the grid.
    """

    index: int
    a_star: float
    b_star: float
    k_star: int
    e_star: float
    lps: np.ndarray | None
    label: str | None
    all_degenerate: bool
    pair_all_degenerate: np.ndarray


# ---------------------------------------------------------------------------
# sweep kernel
# ---------------------------------------------------------------------------

def _chunk_errors(points, normals, centers, nbrs, pairs, K, eps_abs):
    """Entropy values and eigenvalue stacks for a block of points.

    centers: (m,) point indices; nbrs: (m, max(K)) neighbor indices sorted
    by (distance, index). Returns E (m, n_pairs, n_k) with +inf marking
    degenerate cells, and lams (m, n_pairs, n_k, 3).
    """
    m = len(centers)
    n_pairs = len(pairs)
    n_k = len(K)
    pos_c = points[centers]
    pos_n = points[nbrs]
    dots = np.clip(
        np.einsum("mc,mjc->mj", normals[centers], normals[nbrs]), -1.0, 1.0
    )
    w_all = [weights_from_cos(SigmoidParams(a, b), dots) for (a, b) in pairs]

    E = np.empty((m, n_pairs, n_k))
    lams = np.empty((m, n_pairs, n_k, 3))
    for ki, k in enumerate(K):
        sub = pos_n[:, :k, :]
        bary = (pos_c + sub.sum(axis=1)) / (k + 1.0)
        d = sub - bary[:, None, :]
        outer = np.einsum("mja,mjb->mjab", d, d)
        for pi in range(n_pairs):
            C = np.einsum("mj,mjab->mab", w_all[pi][:, :k], outer)
            tr = C[:, 0, 0] + C[:, 1, 1] + C[:, 2, 2]
            lam = eigvals_sym3_batch(C)
            e = entropy_error(features_from_eigs(lam))
            E[:, pi, ki] = np.where(tr <= eps_abs, np.inf, e)
            lams[:, pi, ki] = lam
    return E, lams


def _reduce_chunk(E, lams, centers, pairs, K) -> list:
    """Turn a chunk's error cube into PointOptimum records."""
    n_k = len(K)
    flat = E.reshape(len(centers), -1)
    best = np.argmin(flat, axis=1)  # first occurrence wins on ties
    pair_deg = np.isinf(E).all(axis=2)
    out = []
    for r, i in enumerate(centers):
        pi, ki = divmod(int(best[r]), n_k)
        e = float(E[r, pi, ki])
        if math.isinf(e):
            out.append(
                PointOptimum(
                    index=int(i),
                    a_star=pairs[0][0],
                    b_star=pairs[0][1],
                    k_star=K[0],
                    e_star=math.inf,
                    lps=None,
                    label=None,
                    all_degenerate=True,
                    pair_all_degenerate=pair_deg[r].copy(),
                )
            )
            continue
        lps = features_from_eigs(lams[r, pi, ki])
        out.append(
            PointOptimum(
                index=int(i),
                a_star=pairs[pi][0],
                b_star=pairs[pi][1],
                k_star=int(K[ki]),
                e_star=e,
                lps=lps,
                label=classify(lps),
                all_degenerate=False,
                pair_all_degenerate=pair_deg[r].copy(),
            )
        )
    return out


def _run_chunks(n, threads, work):
    """Apply `work(lo, hi)` over contiguous row blocks, optionally threaded.

    Block boundaries are fixed by _CHUNK, not by thread count, and every
    computation is row-local, so results do not depend on `threads`.
    """
    spans = [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda s: work(*s), spans))
    else:
        for lo, hi in spans:
            work(lo, hi)


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------

def evaluate_point(
    cloud: PointCloud, index: NeighborIndex, i: int, a: float, b: float, k: int
) -> float:
    """Classification entropy of point i under one (a, b, k) choice.

    Returns +inf when the weighted covariance degenerates to zero.
    """
    SigmoidParams(a, b)  # validates admissibility
    nbrs = index.neighbors_of(np.array([i]), k)
    eps = degeneracy_threshold(cloud)
    E, _ = _chunk_errors(
        cloud.points, cloud.normals, np.array([i]), nbrs, [(a, b)], [k], eps
    )
    return float(E[0, 0, 0])


def optimize_point(
    cloud: PointCloud, index: NeighborIndex, i: int, grid: ParameterGrid
) -> PointOptimum:
    """Grid argmin for a single point."""
    kmax = max(grid.K)
    if kmax > len(cloud) - 1:
        raise ValueError(f"max grid k={kmax} exceeds n-1={len(cloud) - 1}")
    nbrs = index.neighbors_of(np.array([i]), kmax)
    eps = degeneracy_threshold(cloud)
    pairs = grid.admissible_pairs()
    E, lams = _chunk_errors(
        cloud.points, cloud.normals, np.array([i]), nbrs, pairs, grid.K, eps
    )
    return _reduce_chunk(E, lams, np.array([i]), pairs, grid.K)[0]


def optimize_cloud(
    cloud: PointCloud,
    grid: ParameterGrid = None,
    threads: int = 1,
    index: NeighborIndex = None,
):
    """Grid argmin for every point; returns (optima, run manifest).

    Results are ordered by point index and independent of thread count.
    The cloud is expected to be deduplicated with oriented normals.
    """
    if grid is None:
        grid = default_grid()
    t0 = time.perf_counter()
    n = len(cloud)
    idx = index if index is not None else NeighborIndex(cloud)
    kmax = max(grid.K)
    if kmax > n - 1:
        raise ValueError(f"max grid k={kmax} exceeds n-1={n - 1}")
    nbrs_all = idx.knn_all(kmax)
    eps = degeneracy_threshold(cloud)
    pairs = grid.admissible_pairs()

    results: list = [None] * n

    def work(lo, hi):
        centers = np.arange(lo, hi)
        E, lams = _chunk_errors(
            cloud.points, cloud.normals, centers, nbrs_all[lo:hi], pairs, grid.K, eps
        )
        for opt in _reduce_chunk(E, lams, centers, pairs, grid.K):
            results[opt.index] = opt

    _run_chunks(n, threads, work)

    manifest = {
        "grid": {"A": list(grid.A), "B": list(grid.B), "K": list(grid.K)},
        "cloud_sha256": cloud.content_hash(),
        "n_points": n,
        "threads": threads,
        "elapsed_s": time.perf_counter() - t0,
    }
    return results, manifest


def evaluate_cloud(
    cloud: PointCloud,
    index: NeighborIndex,
    a: float,
    b: float,
    k: int,
    threads: int = 1,
):
    """Entropy and features for every point at one fixed (a, b, k).

    Returns (E, lps): E is (n,) with +inf marking degenerate points, lps
    is (n, 3) with zeros on degenerate rows.
    """
    SigmoidParams(a, b)
    n = len(cloud)
    nbrs_all = index.knn_all(k)
    eps = degeneracy_threshold(cloud)
    E = np.empty(n)
    lps = np.empty((n, 3))

    def work(lo, hi):
        e, lam = _chunk_errors(
            cloud.points,
            cloud.normals,
            np.arange(lo, hi),
            nbrs_all[lo:hi],
            [(a, b)],
            [k],
            eps,
        )
        E[lo:hi] = e[:, 0, 0]
        lps[lo:hi] = features_from_eigs(lam[:, 0, 0, :])

    _run_chunks(n, threads, work)
    return E, lps


def fixed_pair_errors(
    cloud: PointCloud,
    index: NeighborIndex,
    K,
    a: float,
    b: float,
    threads: int = 1,
) -> np.ndarray:
    """Per-point entropy at a fixed (a, b), minimized over k only.

    +inf where every k degenerates. Shares the sweep kernel, so values
    agree bit-for-bit with the corresponding optimize_cloud cells.
    """
    SigmoidParams(a, b)
    n = len(cloud)
    K = tuple(sorted(int(k) for k in K))
    if max(K) > n - 1:
        raise ValueError(f"max k={max(K)} exceeds n-1={n - 1}")
    nbrs_all = index.knn_all(max(K))
    eps = degeneracy_threshold(cloud)
    out = np.empty(n)

    def work(lo, hi):
        E, _ = _chunk_errors(
            cloud.points,
            cloud.normals,
            np.arange(lo, hi),
            nbrs_all[lo:hi],
            [(a, b)],
            K,
            eps,
        )
        out[lo:hi] = E[:, 0, :].min(axis=1)

    _run_chunks(n, threads, work)
    return out


# ---------------------------------------------------------------------------
# per-point CSV export
# ---------------------------------------------------------------------------

def write_optima_csv(path, cloud: PointCloud, optima) -> None:
    """One row per point: position, winning triple, entropy, features, class."""
    lines = ["index,x,y,z,a_star,b_star,k_star,E,L,P,S,class,all_degenerate"]
    for opt in optima:
        p = cloud.points[opt.index]
        if opt.all_degenerate:
            e_txt, lps_txt, label = "inf", "nan,nan,nan", "degenerate"
        else:
            e_txt = f"{opt.e_star:.9g}"
            lps_txt = ",".join(f"{v:.9g}" for v in opt.lps)
            label = opt.label
        lines.append(
            f"{opt.index},{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},"
            f"{opt.a_star:.9g},{opt.b_star:.9g},{opt.k_star},"
            f"{e_txt},{lps_txt},{label},{str(opt.all_degenerate).lower()}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
