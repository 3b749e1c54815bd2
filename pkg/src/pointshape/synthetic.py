"""Deterministic synthetic test shapes with exact analytic normals.

All generators are seed-free: sample layout is a pure function of the
requested count, so golden-file tests never depend on an RNG state.
"""

import math

import numpy as np

from .geometry import GeometryError, PointCloud, TriangleMesh

SHAPES = ("plane", "line", "cube", "sphere", "dihedral", "ball")

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _check_samples(samples: int):
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")


def _plane(samples: int, spacing: float) -> PointCloud:
    m = int(math.ceil(math.sqrt(samples)))
    xs, ys = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    pts = np.column_stack(
        [xs.ravel() * spacing, ys.ravel() * spacing, np.zeros(m * m)]
    )
    normals = np.tile([0.0, 0.0, 1.0], (m * m, 1))
    return PointCloud(pts, normals)


def _line(samples: int, spacing: float) -> PointCloud:
    pts = np.zeros((samples, 3))
    pts[:, 0] = np.arange(samples) * spacing
    # a line has no intrinsic surface normal; fixed +z keeps the field oriented
    normals = np.tile([0.0, 0.0, 1.0], (samples, 1))
    return PointCloud(pts, normals)


def _cube(samples: int, size: float, inset: float) -> PointCloud:
    """Axis-aligned cube surface, six face-interior grids (no shared edges).

    `inset` is the face-border margin in grid-cell units; 0.5 tiles each
    face evenly, larger values pull the grids away from the cube edges
    (useful when an experiment needs cross-edge neighbor pairs to be
    farther apart than same-face ones).
    """
    m = max(2, int(round(math.sqrt(samples / 6.0))))
    h = size / (m - 1 + 2.0 * inset)
    t = (np.arange(m) + inset) * h
    u, v = np.meshgrid(t, t, indexing="ij")
    u = u.ravel()
    v = v.ravel()
    pts, nrm = [], []
    for axis in range(3):
        for side, coord in ((-1.0, 0.0), (1.0, size)):
            p = np.zeros((m * m, 3))
            p[:, (axis + 1) % 3] = u
            p[:, (axis + 2) % 3] = v
            p[:, axis] = coord
            n = np.zeros((m * m, 3))
            n[:, axis] = side
            pts.append(p)
            nrm.append(n)
    return PointCloud(np.vstack(pts), np.vstack(nrm))


def _sphere(samples: int, size: float) -> PointCloud:
    """Fibonacci spiral on the sphere of radius `size`."""
    i = np.arange(samples)
    z = 1.0 - 2.0 * (i + 0.5) / samples
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * _GOLDEN_ANGLE
    dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return PointCloud(dirs * size, dirs)


def _dihedral(samples: int, spacing: float, angle: float) -> PointCloud:
    """Two half-planes sharing the x-axis, meeting at the given dihedral angle.

    angle = pi is flat; the two normal populations meet at angle pi - angle.
    """
    if not 0.0 < angle <= math.pi:
        raise ValueError(f"dihedral angle must be in (0, pi], got {angle}")
    m = max(2, int(math.ceil(math.sqrt(samples / 2.0))))
    xs = np.arange(m) * spacing
    ys = (np.arange(m) + 1) * spacing  # keep off the shared edge
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    gx = gx.ravel()
    gy = gy.ravel()

    flat = np.column_stack([gx, gy, np.zeros(m * m)])
    n_flat = np.tile([0.0, 0.0, 1.0], (m * m, 1))

    ca, sa = math.cos(angle), math.sin(angle)
    tilted = np.column_stack([gx, gy * ca, gy * sa])
    n_tilt = np.tile([0.0, sa, -ca], (m * m, 1))

    return PointCloud(np.vstack([flat, tilted]), np.vstack([n_flat, n_tilt]))


def _ball(samples: int, size: float) -> PointCloud:
    """Roughly uniform samples of the solid ball; normals point radially."""
    i = np.arange(samples)
    radius = size * np.cbrt((i + 0.5) / samples)
    # spherical spiral directions, stretched so direction and radius ramps stay
    # incommensurate
    zs = 1.0 - 2.0 * (i + 0.5) / samples
    rr = np.sqrt(np.maximum(0.0, 1.0 - zs * zs))
    phi = i * _GOLDEN_ANGLE * 1.6180339887498949
    dirs = np.column_stack([rr * np.cos(phi), rr * np.sin(phi), zs])
    return PointCloud(dirs * radius[:, None], dirs)


def generate_synthetic(
    shape: str,
    samples: int,
    *,
    spacing: float = 1.0,
    size: float = 1.0,
    angle: float = math.pi / 2,
    inset: float = 0.5,
) -> PointCloud:
    """Build a deterministic test cloud.

    shape: one of plane, line, cube, sphere, dihedral, ball.
    samples: requested point count; grid shapes round to a full grid.
    spacing: grid step for plane/line/dihedral.
    size: edge length (cube) or radius (sphere/ball).
    angle: dihedral opening angle in radians.
    inset: cube face margin in grid cells (cube only).
    """
    _check_samples(samples)
    if shape == "plane":
        return _plane(samples, spacing)
    if shape == "line":
        return _line(samples, spacing)
    if shape == "cube":
        return _cube(samples, size, inset)
    if shape == "sphere":
        return _sphere(samples, size)
    if shape == "dihedral":
        return _dihedral(samples, spacing, angle)
    if shape == "ball":
        return _ball(samples, size)
    raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def cube_mesh(verts_per_edge: int = 19, size: float = 2.0) -> TriangleMesh:
    """Watertight axis-aligned cube mesh with shared edge/corner vertices.

    verts_per_edge=19 gives 1,946 vertices. Faces are oriented outward, so
    compute_vertex_normals yields the familiar 45-degree edge normals.
    """
    if verts_per_edge < 2:
        raise GeometryError("verts_per_edge must be >= 2")
    m = verts_per_edge
    t = np.linspace(0.0, size, m)

    vert_index: dict[tuple, int] = {}
    verts: list[tuple] = []

    def vid(p) -> int:
        key = (round(p[0], 12), round(p[1], 12), round(p[2], 12))
        idx = vert_index.get(key)
        if idx is None:
            idx = len(verts)
            vert_index[key] = idx
            verts.append(key)
        return idx

    faces = []
    for axis in range(3):
        a1 = (axis + 1) % 3
        a2 = (axis + 2) % 3
        for coord, flip in ((0.0, True), (size, False)):
            grid = np.empty((m, m), dtype=np.int64)
            for iu in range(m):
                for iv in range(m):
                    p = [0.0, 0.0, 0.0]
                    p[axis] = coord
                    p[a1] = t[iu]
                    p[a2] = t[iv]
                    grid[iu, iv] = vid(p)
            for iu in range(m - 1):
                for iv in range(m - 1):
                    q00 = grid[iu, iv]
                    q10 = grid[iu + 1, iv]
                    q01 = grid[iu, iv + 1]
                    q11 = grid[iu + 1, iv + 1]
                    if flip:
                        faces.append((q00, q01, q10))
                        faces.append((q10, q01, q11))
                    else:
                        faces.append((q00, q10, q01))
                        faces.append((q10, q11, q01))

    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces))
