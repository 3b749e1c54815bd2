"""Weighted covariance, 3x3 symmetric eigendecomposition, and the
entropy-based dimensionality classification of a neighborhood.

The eigensolver is specialized for 3x3 symmetric matrices because it
dominates the runtime of the parameter sweeps: eigenvalues come from the
trigonometric solution of the characteristic cubic (vectorized over
whole batches), eigenvectors from cross products of the shifted matrix
rows with one Rayleigh-quotient refinement per pair, and cyclic Jacobi
sweeps serve as a fallback whenever the closed form is ill-conditioned
(clustered eigenvalues).
"""

import math

import numpy as np

from .geometry import PointCloud
from .knn import NeighborList
from .weights import WeightMap

LN3 = math.log(3.0)

CLASS_NAMES = ("linear", "planar", "scattered")

_TWO_PI_3 = 2.0 * np.pi / 3.0
_QUALITY_TOL = 1e-11  # relative eigenpair quality below which Jacobi takes over


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

def covariance(cloud: PointCloud, nbrs: NeighborList, weights: WeightMap) -> np.ndarray:
    """Weighted covariance of one neighborhood.

    The barycenter is the unweighted mean over the full neighborhood
    (center included); the accumulation runs over the non-center members
    only, scaled by their weights. An all-zero weight set yields the zero
    matrix, which downstream code flags as degenerate.
    """
    if weights.center != nbrs.center or not np.array_equal(weights.indices, nbrs.members):
        raise ValueError("weight map does not match the neighbor list")
    pts = cloud.points[nbrs.members]
    bary = pts.mean(axis=0)
    sel = nbrs.members != nbrs.center
    d = pts[sel] - bary
    w = weights.weights[sel]
    return np.einsum("j,ja,jb->ab", w, d, d)


def degeneracy_threshold(cloud: PointCloud) -> float:
    """Absolute trace threshold below which a covariance counts as zero.

    Scaled by the squared bounding-box diagonal so the test is exact-zero
    detection up to floating rounding at the model's own scale.
    """
    diag = cloud.bbox_diagonal()
    return 1e-24 * diag * diag


def is_degenerate(eigvals, eps_abs: float = 0.0) -> bool:
    """True when the eigenvalue sum vanishes (all-zero covariance)."""
    return float(np.sum(eigvals)) <= eps_abs


# ---------------------------------------------------------------------------
# eigenvalues / eigenvectors of symmetric 3x3 matrices
# ---------------------------------------------------------------------------

def _eigvals3(c00, c11, c22, c01, c02, c12):
    """Closed-form eigenvalues of symmetric 3x3 matrices, descending.

    Vectorized over any leading shape. Uses the shifted/normalized form
    B = (A - qI)/p so the arccos argument stays conditioned across widely
    varying matrix scales.
    """
    q = (c00 + c11 + c22) / 3.0
    d0 = c00 - q
    d1 = c11 - q
    d2 = c22 - q
    p1 = c01 * c01 + c02 * c02 + c12 * c12
    p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)

    safe = p > 0.0
    ps = np.where(safe, p, 1.0)
    b00 = d0 / ps
    b11 = d1 / ps
    b22 = d2 / ps
    b01 = c01 / ps
    b02 = c02 / ps
    b12 = c12 / ps
    det = (
        b00 * (b11 * b22 - b12 * b12)
        - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02)
    )
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    l1 = q + 2.0 * p * np.cos(phi)
    l3 = q + 2.0 * p * np.cos(phi + _TWO_PI_3)
    l2 = 3.0 * q - l1 - l3
    lams = np.stack([l1, l2, l3], axis=-1)
    lams = np.where(np.asarray(safe)[..., None], lams, q[..., None])
    # rounding can tilt near-equal values out of order
    return np.sort(lams, axis=-1)[..., ::-1]


def _jacobi3_batch(M: np.ndarray, sweeps: int = 10, want_vectors: bool = False):
    """Vectorized cyclic Jacobi over a (m, 3, 3) symmetric stack.

    A fixed sweep count keeps the kernel branch-free (a zero off-diagonal
    entry turns its rotation into the identity); 3x3 matrices converge
    quadratically, so 10 sweeps reach machine precision with margin.
    """
    A = np.array(M, dtype=np.float64)
    m = len(A)
    V = np.broadcast_to(np.eye(3), (m, 3, 3)).copy() if want_vectors else None
    rows = np.arange(m)
    for _ in range(sweeps):
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = A[:, p, q]
            nz = apq != 0.0
            with np.errstate(over="ignore"):
                tau = np.where(
                    nz, (A[:, q, q] - A[:, p, p]) / np.where(nz, 2.0 * apq, 1.0), 0.0
                )
                # hypot dodges overflow for huge tau; t then underflows to 0
                t = np.where(
                    nz,
                    np.copysign(1.0, tau) / (np.abs(tau) + np.hypot(1.0, tau)),
                    0.0,
                )
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            J = np.zeros((m, 3, 3))
            J[:, 0, 0] = J[:, 1, 1] = J[:, 2, 2] = 1.0
            J[:, p, p] = c
            J[:, q, q] = c
            J[:, p, q] = s
            J[:, q, p] = -s
            A = np.einsum("mij,mik,mkl->mjl", J, A, J)
            if want_vectors:
                V = np.einsum("mik,mkl->mil", V, J)
    vals = np.stack([A[:, 0, 0], A[:, 1, 1], A[:, 2, 2]], axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    if want_vectors:
        V = np.take_along_axis(V, order[:, None, :], axis=2)
        return vals, V
    return vals


def _needs_jacobi(vals: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """The trig form loses ~sqrt(eps) accuracy when eigenvalues cluster;
    route rows whose spectral gaps fall below 1e-4 of scale to Jacobi."""
    gap12 = vals[:, 0] - vals[:, 1]
    gap23 = vals[:, 1] - vals[:, 2]
    return np.minimum(gap12, gap23) < 1e-4 * scale


def eigvals_sym3_batch(M: np.ndarray) -> np.ndarray:
    """Descending eigenvalues for a (..., 3, 3) symmetric stack.

    Closed form for well-separated spectra; clustered rows are re-done by
    vectorized Jacobi sweeps, which stay accurate at multiple roots.
    """
    vals = _eigvals3(
        M[..., 0, 0], M[..., 1, 1], M[..., 2, 2],
        M[..., 0, 1], M[..., 0, 2], M[..., 1, 2],
    )
    if M.ndim == 2:
        flat_m = M[None]
        flat_v = vals[None]
    else:
        flat_m = M.reshape(-1, 3, 3)
        flat_v = vals.reshape(-1, 3)
    scale = np.abs(flat_m).reshape(len(flat_m), 9).max(axis=1)
    redo = _needs_jacobi(flat_v, scale)
    if redo.any():
        flat_v = flat_v.copy()
        flat_v[redo] = _jacobi3_batch(flat_m[redo])
        vals = flat_v.reshape(vals.shape)
    return vals


def _jacobi3(M: np.ndarray, max_sweeps: int = 32):
    """Cyclic Jacobi diagonalization of one symmetric 3x3 matrix."""
    A = np.array(M, dtype=np.float64)
    V = np.eye(3)
    tr = abs(A[0, 0] + A[1, 1] + A[2, 2])
    fro = math.sqrt(float((A * A).sum()))
    thr = 1e-13 * max(tr, fro)
    for _ in range(max_sweeps):
        off = math.sqrt(A[0, 1] ** 2 + A[0, 2] ** 2 + A[1, 2] ** 2)
        if off <= thr:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = A[p, q]
            if apq == 0.0:
                continue
            tau = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            J = np.eye(3)
            J[p, p] = c
            J[q, q] = c
            J[p, q] = s
            J[q, p] = -s
            A = J.T @ A @ J
            V = V @ J
    vals = np.diagonal(A).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], V[:, order]


def _vector_for(M, lam):
    """Eigenvector candidates via cross products of rows of (M - lam I).

    Returns (vectors, squared norm of the chosen cross product); a tiny
    norm signals multiplicity >= 2 and the caller falls back to Jacobi.
    """
    R = M - lam[:, None, None] * np.eye(3)
    c01 = np.cross(R[:, 0], R[:, 1])
    c02 = np.cross(R[:, 0], R[:, 2])
    c12 = np.cross(R[:, 1], R[:, 2])
    cand = np.stack([c01, c02, c12], axis=1)           # (m, 3, 3)
    n2 = np.einsum("mjc,mjc->mj", cand, cand)
    pick = np.argmax(n2, axis=1)
    rows = np.arange(len(M))
    best = cand[rows, pick]
    best_n2 = n2[rows, pick]
    norm = np.sqrt(np.where(best_n2 > 0.0, best_n2, 1.0))
    return best / norm[:, None], best_n2


def eigh_sym3_batch(M: np.ndarray):
    """Full eigendecomposition of a (m, 3, 3) symmetric stack.

    Returns (vals, vecs) with vals descending and vecs[:, :, j] the unit
    eigenvector of vals[:, j]. Clustered spectra go straight to vectorized
    Jacobi; anything failing the residual/orthonormality quality gate is
    redone with scalar Jacobi sweeps.
    """
    M = np.asarray(M, dtype=np.float64)
    single = M.ndim == 2
    if single:
        M = M[None]
    m = len(M)
    scale = np.abs(M).reshape(m, 9).max(axis=1)
    scale_safe = np.where(scale > 0.0, scale, 1.0)

    vals = eigvals_sym3_batch(M)
    clustered = _needs_jacobi(vals, scale)
    v1, n2_1 = _vector_for(M, vals[:, 0])
    v3, n2_3 = _vector_for(M, vals[:, 2])
    # re-orthogonalize the small-eigenvalue vector against the large one
    v3 = v3 - np.einsum("mc,mc->m", v3, v1)[:, None] * v1
    v3n = np.linalg.norm(v3, axis=1)
    v3 = v3 / np.where(v3n > 0.0, v3n, 1.0)[:, None]
    v2 = np.cross(v3, v1)

    vecs = np.stack([v1, v2, v3], axis=2)              # columns

    # one Rayleigh-quotient refinement per eigenpair, then restore order
    ray = np.einsum("mcj,mcd,mdj->mj", vecs, M, vecs)
    order = np.argsort(-ray, axis=1, kind="stable")
    vals = np.take_along_axis(ray, order, axis=1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)

    # clustered spectra: cross products degenerate there, use batch Jacobi
    if clustered.any():
        jv, jV = _jacobi3_batch(M[clustered], want_vectors=True)
        vals[clustered] = jv
        vecs[clustered] = jV

    # quality gate: eigen residual, orthonormality, usable cross products
    resid = np.einsum("mab,mbj->maj", M, vecs) - vecs * vals[:, None, :]
    res = np.abs(resid).reshape(m, 9).max(axis=1)
    gram = np.einsum("mcj,mck->mjk", vecs, vecs) - np.eye(3)
    orth = np.abs(gram).reshape(m, 9).max(axis=1)
    cross_ok = clustered | ((n2_1 > 0.0) & (n2_3 > 0.0) & (v3n > 0.0))
    bad = (res > _QUALITY_TOL * scale_safe) | (orth > _QUALITY_TOL) | ~cross_ok
    # a zero matrix has no usable cross products; any basis works
    trivial = scale == 0.0
    if trivial.any():
        vecs[trivial] = np.eye(3)
        vals[trivial] = 0.0
        bad &= ~trivial

    for i in np.nonzero(bad)[0]:
        vals[i], vecs[i] = _jacobi3(M[i])

    if single:
        return vals[0], vecs[0]
    return vals, vecs


def eigenvalues_sym3(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of one symmetric 3x3 matrix.

    Returns (eigenvalues descending, eigenvectors as columns). Negative
    eigenvalues within -1e-12 * trace are clamped to zero (covariance
    matrices are positive semi-definite up to rounding); asymmetry beyond
    1e-12 relative is rejected.
    """
    M = np.asarray(matrix, dtype=np.float64)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    scale = float(np.abs(M).max())
    asym = float(np.abs(M - M.T).max())
    if asym > 1e-12 * max(scale, 1e-300):
        raise ValueError(f"matrix is not symmetric (deviation {asym:.3g})")
    M = 0.5 * (M + M.T)
    vals, vecs = eigh_sym3_batch(M)
    tr = float(M[0, 0] + M[1, 1] + M[2, 2])
    clamp = 1e-12 * max(tr, 0.0)
    vals = np.where((vals < 0.0) & (vals >= -clamp), 0.0, vals)
    return vals, vecs


# ---------------------------------------------------------------------------
# dimensionality features and their entropy
# ---------------------------------------------------------------------------

def features_from_eigs(lams: np.ndarray) -> np.ndarray:
    """(linearity, planarity, scattering) from descending eigenvalues.

    Vectorized over any leading shape; rows with a zero leading eigenvalue
    come out as zeros (callers flag those as degenerate). Differences are
    floored at zero to absorb rounding on repeated eigenvalues.
    """
    lams = np.asarray(lams, dtype=np.float64)
    l1 = lams[..., 0]
    safe = np.where(l1 > 0.0, l1, 1.0)
    L = np.maximum(lams[..., 0] - lams[..., 1], 0.0) / safe
    P = np.maximum(lams[..., 1] - lams[..., 2], 0.0) / safe
    S = np.maximum(lams[..., 2], 0.0) / safe
    out = np.stack([L, P, S], axis=-1)
    return np.where((l1 > 0.0)[..., None], out, 0.0)


def features_LPS(eigvals) -> np.ndarray:
    """Dimensionality probabilities of one eigenvalue triple (descending)."""
    ev = np.asarray(eigvals, dtype=np.float64)
    if ev.shape != (3,):
        raise ValueError(f"expected 3 eigenvalues, got shape {ev.shape}")
    if not ev[0] > 0.0:
        raise ValueError("degenerate input: leading eigenvalue is not positive")
    return features_from_eigs(ev)


def entropy_error(features) -> np.ndarray | float:
    """Shannon entropy of (L, P, S) with the x ln x -> 0 convention.

    0 means the neighborhood is unambiguously 1D, 2D, or 3D; ln 3 is
    maximal ambiguity. Accepts a single triple or a (..., 3) batch.
    """
    f = np.asarray(features, dtype=np.float64)
    pos = f > 0.0
    terms = np.where(pos, f * np.log(np.where(pos, f, 1.0)), 0.0)
    e = -terms.sum(axis=-1) + 0.0  # avoid -0.0
    if f.ndim == 1:
        return float(e)
    return e


def classify(features) -> str:
    """Dominant dimensionality class; ties resolve linear > planar > scattered."""
    f = np.asarray(features, dtype=np.float64)
    return CLASS_NAMES[int(np.argmax(f))]
