import math

import numpy as np
import pytest

from pointshape import (
    GeometryError,
    ParseError,
    PointCloud,
    TriangleMesh,
    compute_vertex_normals,
    cube_mesh,
    dedup_points,
    generate_synthetic,
    load_cloud,
    load_mesh,
    save_cloud,
    save_mesh,
)


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def test_obj_minimal_triangle(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_mesh(path)
    assert mesh.n_vertices == 3
    assert mesh.n_faces == 1
    assert list(mesh.faces[0]) == [0, 1, 2]


def test_obj_index_out_of_range(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n")
    with pytest.raises(ParseError) as err:
        load_mesh(path)
    assert "face 1" in str(err.value)


def test_obj_slash_forms_and_ignored_directives(tmp_path):
    path = tmp_path / "forms.obj"
    path.write_text(
        "mtllib foo.mtl\nusemtl bar\n"
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        "vn 0 0 1\nvn 0 0 1\nvn 0 0 1\n"
        "f 1//1 2//2 3//3\n"
    )
    mesh = load_mesh(path)
    assert mesh.n_faces == 1


def test_obj_degenerate_face(tmp_path):
    path = tmp_path / "dg.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n")
    with pytest.raises(ParseError):
        load_mesh(path)


def test_obj_cloud_roundtrip(tmp_path):
    cloud = generate_synthetic("plane", 25)
    path = tmp_path / "cloud.obj"
    from pointshape.io import save_obj

    save_obj(path, cloud.points, cloud.normals)
    again = load_cloud(path)
    np.testing.assert_allclose(again.points, cloud.points, atol=1e-6)
    np.testing.assert_allclose(again.normals, cloud.normals, atol=1e-6)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

def test_ply_binary_cube_mesh_roundtrip(tmp_path):
    verts = np.array(
        [[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
    )
    faces = []
    mesh0 = cube_mesh(2, 1.0)
    assert mesh0.n_vertices == 8
    assert mesh0.n_faces == 12

    ascii_path = tmp_path / "cube_ascii.ply"
    bin_path = tmp_path / "cube_bin.ply"
    save_mesh(mesh0, ascii_path, fmt="ply", binary=False)
    save_mesh(mesh0, bin_path, fmt="ply", binary=True)

    from_ascii = load_mesh(ascii_path)
    from_bin = load_mesh(bin_path)
    assert from_bin.n_vertices == 8
    assert from_bin.n_faces == 12
    np.testing.assert_allclose(from_bin.vertices, from_ascii.vertices, atol=1e-6)
    np.testing.assert_array_equal(from_bin.faces, from_ascii.faces)


def test_ply_ascii_cloud_roundtrip_value_identical(tmp_path):
    cloud = generate_synthetic("plane", 100)
    path = tmp_path / "plane.ply"
    save_cloud(cloud, path, binary=False)
    again = load_cloud(path)
    np.testing.assert_allclose(again.points, cloud.points, atol=1e-6)
    np.testing.assert_allclose(again.normals, cloud.normals, atol=1e-6)


def test_ply_binary_roundtrip_bit_identical_payload(tmp_path, rng):
    pts = rng.uniform(-10, 10, size=(100_000, 3))
    nrm = rng.normal(size=(100_000, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(pts, nrm)
    p1 = tmp_path / "a.ply"
    p2 = tmp_path / "b.ply"
    save_cloud(cloud, p1, binary=True)
    save_cloud(load_cloud(p1), p2, binary=True)
    assert p1.read_bytes() == p2.read_bytes()


def test_ply_binary_bit_exact_for_float32_data(tmp_path):
    cloud = generate_synthetic("plane", 64)  # small-integer grid, f32-exact
    path = tmp_path / "grid.ply"
    save_cloud(cloud, path, binary=True)
    again = load_cloud(path)
    np.testing.assert_array_equal(again.points, cloud.points)
    np.testing.assert_array_equal(again.normals, cloud.normals)


def test_ply_missing_normals_rejected_for_cloud(tmp_path):
    path = tmp_path / "pos_only.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n"
    )
    with pytest.raises(ParseError):
        load_cloud(path)


def test_ply_truncated_payload(tmp_path):
    path = tmp_path / "trunc.ply"
    header = (
        "ply\nformat binary_little_endian 1.0\nelement vertex 4\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        "end_header\n"
    )
    path.write_bytes(header.encode() + b"\x00" * 10)
    with pytest.raises(ParseError):
        load_cloud(path)


def test_save_to_unwritable_path():
    cloud = generate_synthetic("plane", 9)
    with pytest.raises(OSError):
        save_cloud(cloud, "/nonexistent-dir/depth/cloud.ply")


# ---------------------------------------------------------------------------
# vertex normals
# ---------------------------------------------------------------------------

def test_vertex_normals_flat_square():
    mesh = TriangleMesh(
        vertices=[[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
        faces=[[0, 1, 2], [0, 2, 3]],
    )
    normals = compute_vertex_normals(mesh)
    np.testing.assert_allclose(normals, np.tile([0, 0, 1.0], (4, 1)), atol=1e-12)


def test_vertex_normals_cube_corner():
    # three unit-area faces around the origin with normals +x, +y, +z
    s = math.sqrt(2.0)
    verts = [
        [0, 0, 0],
        [0, s, 0], [0, 0, s],   # yz face -> +x
        [0, 0, s], [s, 0, 0],   # zx face -> +y
        [s, 0, 0], [0, s, 0],   # xy face -> +z
    ]
    faces = [[0, 1, 2], [0, 3, 4], [0, 5, 6]]
    normals = compute_vertex_normals(TriangleMesh(verts, faces))
    np.testing.assert_allclose(normals[0], np.ones(3) / math.sqrt(3.0), atol=1e-12)


def test_vertex_normals_zero_sum_error():
    # two equal-area faces with opposite orientation sharing vertex 0
    verts = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    faces = [[0, 1, 2], [0, 2, 1]]
    with pytest.raises(GeometryError) as err:
        compute_vertex_normals(TriangleMesh(verts, faces))
    assert "vertex" in str(err.value)


def test_vertex_normals_unit_length():
    mesh = cube_mesh(5, 2.0)
    normals = compute_vertex_normals(mesh)
    np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-9)


def test_mesh_invariants():
    with pytest.raises(GeometryError):
        TriangleMesh([[0, 0, 0]], [[0, 0, 0]])
    with pytest.raises(GeometryError):
        TriangleMesh([[0, 0, 0], [1, 0, 0]], [[0, 1, 2]])


# ---------------------------------------------------------------------------
# dedup
# ---------------------------------------------------------------------------

def _cloud_from(points):
    pts = np.asarray(points, dtype=np.float64)
    normals = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
    return PointCloud(pts, normals)


def test_dedup_distinct_unchanged():
    cloud = _cloud_from([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    out, removed = dedup_points(cloud, tol=0.0)
    assert removed == 0
    np.testing.assert_array_equal(out.points, cloud.points)


def test_dedup_repeated_point():
    rng = np.random.default_rng(5)
    pts = rng.uniform(size=(70, 3))
    dup = np.tile([7.5, 7.5, 7.5], (30, 1))  # one point occurring 30 times
    both = np.vstack([pts, dup])
    order = rng.permutation(100)
    cloud = _cloud_from(both[order])
    out, removed = dedup_points(cloud, tol=0.0)
    assert removed == 29
    assert len(out) == 71


def test_dedup_threshold():
    cloud = _cloud_from([[0, 0, 0], [1e-9, 0, 0], [1, 0, 0]])
    out, removed = dedup_points(cloud, tol=1e-8)
    assert removed == 1
    assert len(out) == 2
    np.testing.assert_array_equal(out.points[0], [0, 0, 0])


def test_dedup_keeps_first_occurrence_and_normals():
    pts = [[0, 0, 0], [0, 0, 0], [1, 0, 0]]
    normals = [[0, 0, 1], [1, 0, 0], [0, 1, 0]]
    out, removed = dedup_points(PointCloud(pts, normals), tol=0.0)
    assert removed == 1
    np.testing.assert_array_equal(out.normals[0], [0, 0, 1])


def test_dedup_idempotent(rng):
    pts = np.round(rng.uniform(0, 3, size=(200, 3)) * 2) / 2  # force collisions
    cloud = _cloud_from(pts)
    once, r1 = dedup_points(cloud, tol=0.0)
    twice, r2 = dedup_points(once, tol=0.0)
    assert r2 == 0
    np.testing.assert_array_equal(once.points, twice.points)


# ---------------------------------------------------------------------------
# synthetic shapes
# ---------------------------------------------------------------------------

def test_plane_grid():
    cloud = generate_synthetic("plane", 100, spacing=1.0)
    assert len(cloud) == 100
    np.testing.assert_array_equal(cloud.normals, np.tile([0, 0, 1.0], (100, 1)))


def test_cube_six_face_groups():
    cloud = generate_synthetic("cube", 2000)
    axes = np.eye(3)
    groups = 0
    for axis in range(3):
        for sign in (-1, 1):
            sel = np.all(cloud.normals == sign * axes[axis], axis=1)
            assert sel.sum() > 0
            groups += 1
    assert groups == 6
    assert np.abs(np.abs(cloud.normals).sum(axis=1) - 1.0).max() < 1e-15


def test_dihedral_normal_populations():
    cloud = generate_synthetic("dihedral", 200, angle=math.pi / 2)
    uniq = np.unique(np.round(cloud.normals, 12), axis=0)
    assert len(uniq) == 2
    dot = float(np.dot(uniq[0], uniq[1]))
    assert abs(math.acos(max(-1.0, min(1.0, dot))) - math.pi / 2) < 1e-12


def test_dihedral_flat_is_plane():
    cloud = generate_synthetic("dihedral", 50, angle=math.pi)
    np.testing.assert_allclose(cloud.normals, np.tile([0, 0, 1.0], (len(cloud), 1)), atol=1e-12)


def test_sphere_and_ball_unit_normals():
    for shape in ("sphere", "ball"):
        cloud = generate_synthetic(shape, 500, size=2.0)
        assert len(cloud) == 500
        np.testing.assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-12)
    sphere = generate_synthetic("sphere", 500, size=2.0)
    np.testing.assert_allclose(np.linalg.norm(sphere.points, axis=1), 2.0, atol=1e-12)


def test_generators_deterministic():
    for shape in ("plane", "line", "cube", "sphere", "dihedral", "ball"):
        a = generate_synthetic(shape, 150)
        b = generate_synthetic(shape, 150)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.normals, b.normals)


def test_generator_rejects_tiny_counts():
    with pytest.raises(ValueError):
        generate_synthetic("plane", 1)
    with pytest.raises(ValueError):
        generate_synthetic("warp", 100)


def test_point_cloud_invariants():
    with pytest.raises(GeometryError):
        PointCloud([[0, 0, 0]], [[0, 0, 2.0]])
    with pytest.raises(GeometryError):
        PointCloud([[0, 0, 0], [1, 1, 1]], [[0, 0, 1]])
