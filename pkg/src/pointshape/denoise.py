"""Normal-direction noise, normal filtering, and MSE evaluation.

The filtering stage votes each normal against its neighbors: a sharp
cut-off on normal agreement selects the voters, their outer products form
a tensor, and the normal is projected onto the eigenspace of the
dominant tensor eigenvalues. In adaptive mode every point re-selects its
neighborhood size around the default before each iteration by minimizing
the classification entropy of the neighborhood.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .features import (
    _jacobi3,
    _vector_for,
    degeneracy_threshold,
    eigh_sym3_batch,
    eigvals_sym3_batch,
    entropy_error,
    features_from_eigs,
)
from .geometry import PointCloud, TriangleMesh, compute_vertex_normals
from .knn import NeighborIndex, mean_knn_distance


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian displacement along the normal; sigma = factor * mean spacing."""

    factor: float
    seed: int

    def __post_init__(self):
        if self.factor < 0:
            raise ValueError("noise factor must be >= 0")


@dataclass(frozen=True)
class FilterConfig:
    """Normal-filter parameters.

    p: iteration count; tau: eigenvalue keep-threshold relative to the
    largest; rho: inner-product cut-off for voting; k_default: base
    neighborhood size; halfwidth: adaptive search radius around it.
    """

    p: int = 150
    tau: float = 0.95
    rho: float = 0.3
    k_default: int = 15
    halfwidth: int = 10

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must be in (-1, 1)")
        if self.halfwidth < 0:
            raise ValueError("halfwidth must be >= 0")


def add_normal_noise(cloud: PointCloud, spec: NoiseSpec) -> PointCloud:
    """Displace each point along its normal by N(0, (factor * l)^2).

    l is the mean distance to the six nearest neighbors. Each offset is a
    pure function of (seed, point index): the i-th counter-based Philox
    word feeds an inverse-CDF transform, so serial and parallel runs (and
    re-runs) agree bit-exactly. Normals are left untouched.
    """
    n = len(cloud)
    if n < 7:
        raise ValueError("need at least 7 points to estimate the mean spacing")
    sigma = spec.factor * mean_knn_distance(cloud, m=6)
    raw = np.random.Philox(key=spec.seed).random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    delta = sigma * ndtri(u)
    return PointCloud(
        cloud.points + delta[:, None] * cloud.normals, cloud.normals.copy()
    )


def reestimate_normals(points, reference_normals, k: int = 12, agree: float = 0.5) -> np.ndarray:
    """Plane-fit normals from (noisy) positions, one point at a time.

    Stand-in for the normals a meshed pipeline would read off its noisy
    mesh: the `reference_normals` play the role of the mesh connectivity,
    restricting each fit to the k-nearest neighbors whose reference
    normal agrees with the point's own (inner product > `agree`) and
    fixing the sign of the result. Points with fewer than 3 agreeing
    neighbors fall back to the unrestricted neighborhood.
    """
    points = np.asarray(points, dtype=np.float64)
    ref = np.asarray(reference_normals, dtype=np.float64)
    idx = NeighborIndex(PointCloud(points, ref))
    nbr = idx.knn_all(k)
    dots = np.einsum("mc,mjc->mj", ref, ref[nbr])
    out = np.empty_like(points)
    for i in range(len(points)):
        sel = nbr[i][dots[i] > agree]
        if len(sel) < 3:
            sel = nbr[i]
        patch = np.vstack([points[i][None, :], points[sel]])
        cen = patch - patch.mean(axis=0)
        _, vecs = eigh_sym3_batch(cen.T @ cen)
        v = vecs[:, 2]  # least-variance direction
        out[i] = v if float(np.dot(v, ref[i])) >= 0.0 else -v
    return out


def mse(truth, test) -> float:
    """Mean squared Euclidean deviation between two normal fields."""
    a = np.asarray(truth, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.einsum("mc,mc->m", d, d).mean())


# ---------------------------------------------------------------------------
# normal filtering
# ---------------------------------------------------------------------------

def _entropy_over_k(outer, cum_pos, rel, dots, K, rho, eps_abs):
    """Classification entropy per candidate k, from one shared prefix pass.

    rel: (n, kmax, 3) neighbor positions relative to each center; outer
    their per-neighbor outer products; cum_pos the cumsum of rel along the
    neighbor axis. Voting weights are the sharp cut-off at angle
    arccos(rho), i.e. weight 1 iff dot >= rho.
    """
    w = (dots >= rho).astype(np.float64)
    cw = np.cumsum(w, axis=1)
    cwp = np.cumsum(w[:, :, None] * rel, axis=1)
    cwpp = np.cumsum(w[:, :, None, None] * outer, axis=1)

    n = rel.shape[0]
    E = np.empty((n, len(K)))
    for ki, k in enumerate(K):
        sw = cw[:, k - 1]
        swp = cwp[:, k - 1]
        swpp = cwpp[:, k - 1]
        bary = cum_pos[:, k - 1] / (k + 1.0)  # center sits at the local origin
        C = (
            swpp
            - bary[:, :, None] * swp[:, None, :]
            - swp[:, :, None] * bary[:, None, :]
            + sw[:, None, None] * (bary[:, :, None] * bary[:, None, :])
        )
        tr = C[:, 0, 0] + C[:, 1, 1] + C[:, 2, 2]
        lam = eigvals_sym3_batch(C)
        e = entropy_error(features_from_eigs(lam))
        E[:, ki] = np.where(tr <= eps_abs, np.inf, e)
    return E


def _threshold_projectors(T: np.ndarray, tau: float) -> np.ndarray:
    """Projector onto the span of eigenvectors with eigenvalue >= tau * max.

    Only the needed eigenvector is extracted: keeping one eigenvalue needs
    the top eigenvector, keeping two needs the bottom one (project out its
    complement), keeping all three is the identity. Ill-conditioned rows
    (clustered eigenvalues at the threshold) fall back to Jacobi.
    """
    m = len(T)
    vals = eigvals_sym3_batch(T)
    lam1 = vals[:, 0]
    keep2 = vals[:, 1] >= tau * lam1
    keep3 = vals[:, 2] >= tau * lam1
    proj = np.empty((m, 3, 3))
    bad = np.zeros(m, dtype=bool)

    all_kept = keep3
    proj[all_kept] = np.eye(3)

    top_only = ~keep2
    if top_only.any():
        sub = T[top_only]
        v, n2 = _vector_for(sub, lam1[top_only])
        res = np.abs(np.einsum("mab,mb->ma", sub, v) - lam1[top_only][:, None] * v)
        ok = (n2 > 0.0) & (res.max(axis=1) <= 1e-10 * np.maximum(lam1[top_only], 1e-300))
        proj[top_only] = v[:, :, None] * v[:, None, :]
        idx = np.nonzero(top_only)[0]
        bad[idx[~ok]] = True

    two_kept = keep2 & ~keep3
    if two_kept.any():
        sub = T[two_kept]
        lam3 = vals[two_kept, 2]
        v, n2 = _vector_for(sub, lam3)
        res = np.abs(np.einsum("mab,mb->ma", sub, v) - lam3[:, None] * v)
        ok = (n2 > 0.0) & (
            res.max(axis=1) <= 1e-10 * np.maximum(lam1[two_kept], 1e-300)
        )
        proj[two_kept] = np.eye(3) - v[:, :, None] * v[:, None, :]
        idx = np.nonzero(two_kept)[0]
        bad[idx[~ok]] = True

    for i in np.nonzero(bad)[0]:
        v_i, vec_i = _jacobi3(T[i])
        kept = v_i >= tau * v_i[0]
        cols = vec_i[:, kept]
        proj[i] = cols @ cols.T
    return proj


def filter_normals(cloud: PointCloud, config: FilterConfig, mode: str = "fixed") -> np.ndarray:
    """Run `config.p` voting iterations and return the filtered normals.

    mode "fixed" uses k_default neighbors everywhere; "adaptive" lets each
    point pick k within k_default +- halfwidth (entries below 3 or above
    n-1 are dropped) by least classification entropy, re-chosen before
    every iteration on the current normals. Points whose votes all vanish
    fall back to the default neighborhood with equal weights. Updates read
    the previous iteration's normals, so sweep order is immaterial.
    """
    if mode not in ("fixed", "adaptive"):
        raise ValueError(f"unknown mode {mode!r}")
    n = len(cloud)
    k_def = min(max(config.k_default, 3), n - 1)
    if mode == "adaptive":
        K = [
            k
            for k in range(config.k_default - config.halfwidth,
                           config.k_default + config.halfwidth + 1)
            if 3 <= k <= n - 1
        ]
        if not K:
            K = [k_def]
        kmax = max(K + [k_def])
    else:
        K = None
        kmax = k_def

    index = NeighborIndex(cloud)
    nbrs = index.knn_all(kmax)
    rel = cloud.points[nbrs] - cloud.points[:, None, :]
    eps_abs = degeneracy_threshold(cloud)
    cols = np.arange(kmax)
    if mode == "adaptive":
        cum_pos = np.cumsum(rel, axis=1)
        outer = rel[:, :, :, None] * rel[:, :, None, :]

    normals = cloud.normals.copy()
    for _ in range(config.p):
        cur = normals
        dots = np.clip(np.einsum("mc,mjc->mj", cur, cur[nbrs]), -1.0, 1.0)

        if mode == "adaptive":
            E = _entropy_over_k(outer, cum_pos, rel, dots, K, config.rho, eps_abs)
            ksel = np.asarray(K, dtype=np.int64)[np.argmin(E, axis=1)]
            ksel[np.isinf(E).all(axis=1)] = k_def
        else:
            ksel = np.full(n, k_def, dtype=np.int64)

        votes = (dots > config.rho).astype(np.float64)
        votes *= cols[None, :] < ksel[:, None]
        sw = votes.sum(axis=1)
        dead = sw == 0.0
        if dead.any():
            votes[dead] = (cols < k_def).astype(np.float64)
            sw = votes.sum(axis=1)

        nb_normals = cur[nbrs]
        T = np.einsum("mj,mja,mjb->mab", votes, nb_normals, nb_normals)
        T /= sw[:, None, None]

        proj = _threshold_projectors(T, config.tau)
        new = np.einsum("mab,mb->ma", proj, cur)
        norms = np.linalg.norm(new, axis=1)
        ok = norms > 0.0
        normals = np.where(
            ok[:, None], new / np.where(ok, norms, 1.0)[:, None], cur
        )
    return normals


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def denoise_report(
    cloud: PointCloud,
    truth_normals,
    specs,
    config: FilterConfig,
    faces=None,
    name: str = "model",
    progress=None,
) -> list:
    """MSE table rows for one model: noise baseline vs fixed vs adaptive.

    `cloud` carries the clean positions and ground-truth normals. When
    `faces` is given the noisy input normals are recomputed as vertex
    normals of the displaced mesh (how a meshed pipeline would see them);
    otherwise the displaced cloud keeps its normals, the noise MSE is 0,
    and filtering is skipped (all columns 0).
    """
    truth = np.asarray(truth_normals, dtype=np.float64)
    rows = []
    for spec in specs:
        noisy = add_normal_noise(cloud, spec)
        if faces is not None:
            noisy = PointCloud(
                noisy.points,
                compute_vertex_normals(TriangleMesh(noisy.points, faces)),
            )
        m_noise = mse(truth, noisy.normals)
        if m_noise == 0.0:
            rows.append(
                {"model": name, "factor": spec.factor,
                 "mse_noise": 0.0, "mse_fixed": 0.0, "mse_adaptive": 0.0}
            )
            continue
        m_fixed = mse(truth, filter_normals(noisy, config, "fixed"))
        m_adaptive = mse(truth, filter_normals(noisy, config, "adaptive"))
        rows.append(
            {"model": name, "factor": spec.factor,
             "mse_noise": m_noise, "mse_fixed": m_fixed, "mse_adaptive": m_adaptive}
        )
        if progress is not None:
            progress(rows[-1])
    return rows


def write_denoise_csv(path, rows) -> None:
    lines = ["model,factor,mse_noise,mse_fixed,mse_adaptive"]
    for r in rows:
        lines.append(
            f"{r['model']},{r['factor']:.9g},{r['mse_noise']:.9g},"
            f"{r['mse_fixed']:.9g},{r['mse_adaptive']:.9g}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
