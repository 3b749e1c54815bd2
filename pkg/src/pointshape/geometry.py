"""Core geometric containers: triangle meshes and oriented point clouds."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

UNIT_NORMAL_TOL = 1e-6


class GeometryError(ValueError):
    """Raised when a mesh or cloud violates a structural precondition."""


def _as_float_array(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} contains non-finite values")
    return arr


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with consistently oriented faces.

    vertices: (n, 3) float positions in model units.
    faces: (m, 3) int vertex indices, all three distinct per face.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = _as_float_array(self.vertices, "vertices")
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.faces.size == 0:
            self.faces = self.faces.reshape(0, 3)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise GeometryError(f"faces must have shape (m, 3), got {self.faces.shape}")
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                bad = int(np.nonzero((self.faces < 0) | (self.faces >= n))[0][0])
                raise GeometryError(
                    f"face {bad} references a vertex outside [0, {n})"
                )
            degen = (
                (self.faces[:, 0] == self.faces[:, 1])
                | (self.faces[:, 1] == self.faces[:, 2])
                | (self.faces[:, 0] == self.faces[:, 2])
            )
            if degen.any():
                bad = int(np.nonzero(degen)[0][0])
                raise GeometryError(f"face {bad} repeats a vertex index")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


@dataclass
class PointCloud:
    """Points with oriented unit normals; the universe every computation runs over.

    points: (n, 3) float positions.
    normals: (n, 3) float unit vectors, one per point.
    """

    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.points = _as_float_array(self.points, "points")
        self.normals = _as_float_array(self.normals, "normals")
        if len(self.points) != len(self.normals):
            raise GeometryError(
                f"{len(self.points)} points but {len(self.normals)} normals"
            )
        if len(self.normals):
            lengths = np.linalg.norm(self.normals, axis=1)
            off = np.abs(lengths - 1.0)
            if off.max() > UNIT_NORMAL_TOL:
                bad = int(np.argmax(off))
                raise GeometryError(
                    f"normal {bad} has length {lengths[bad]:.9g}, expected 1"
                )

    def __len__(self) -> int:
        return len(self.points)

    def bbox_diagonal(self) -> float:
        """Length of the axis-aligned bounding-box diagonal (0 for n <= 1)."""
        if len(self.points) < 2:
            return 0.0
        extent = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(extent))

    def content_hash(self) -> str:
        """SHA-256 over the raw float64 payload; stable across runs."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.normals).tobytes())
        return h.hexdigest()


def compute_vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted vertex normals from consistently oriented faces.

    Each face contributes its oriented normal scaled by face area (half the
    cross-product magnitude) to its three vertices; the per-vertex sum is
    normalized. A vertex whose incident contributions cancel (opposing
    faces) raises GeometryError naming the vertex.
    """
    v = mesh.vertices
    f = mesh.faces
    if len(f) == 0:
        raise GeometryError("mesh has no faces")
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    face_vec = 0.5 * np.cross(e1, e2)  # area-weighted oriented normal

    acc = np.zeros_like(v)
    for c in range(3):
        np.add.at(acc, f[:, c], face_vec)
    # magnitude of what was summed, for a relative cancellation test
    mag = np.zeros(len(v))
    contrib = np.linalg.norm(face_vec, axis=1)
    for c in range(3):
        np.add.at(mag, f[:, c], contrib)

    norms = np.linalg.norm(acc, axis=1)
    touched = mag > 0.0
    bad = touched & (norms <= 1e-12 * mag)
    if bad.any():
        idx = int(np.nonzero(bad)[0][0])
        raise GeometryError(f"vertex {idx} has a zero-sum normal (opposing faces)")
    if not touched.all():
        idx = int(np.nonzero(~touched)[0][0])
        raise GeometryError(f"vertex {idx} belongs to no face")
    return acc / norms[:, None]


def dedup_points(cloud: PointCloud, tol: float = 0.0) -> tuple[PointCloud, int]:
    """Remove points within `tol` of an earlier retained point.

    First occurrence wins, order of survivors is preserved, and normals are
    dropped together with their points. With tol=0 only exact coordinate
    duplicates are removed. Returns (cloud, removed_count).
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    pts = cloud.points
    n = len(pts)
    if n == 0:
        return cloud, 0

    if tol == 0.0:
        seen = {}
        keep = np.zeros(n, dtype=bool)
        for i in range(n):
            key = pts[i].tobytes()
            if key not in seen:
                seen[key] = i
                keep[i] = True
    else:
        tree = cKDTree(pts)
        close = tree.query_ball_point(pts, r=tol)
        keep = np.ones(n, dtype=bool)
        for i in range(n):
            if not keep[i]:
                continue
            for j in close[i]:
                if j > i:
                    keep[j] = False

    removed = int(n - keep.sum())
    if removed == 0:
        return cloud, 0
    return PointCloud(pts[keep], cloud.normals[keep]), removed
