"""OBJ and PLY readers/writers for meshes and oriented point clouds.

Supported formats:
  OBJ       -- `v x y z`, `vn nx ny nz`, `f i j k` (1-based, `i//n` and
               `i/t/n` accepted); every other directive is skipped and
               counted in a single warning.
  PLY       -- ascii 1.0 and binary_little_endian 1.0; vertex properties
               x y z (+ nx ny nz when normals are stored), face element
               with a `vertex_indices` (or `vertex_index`) list.

Binary PLY payloads are written as float32 `x y z nx ny nz`; in-memory
data stays float64.
"""

import logging
import struct

import numpy as np

from .geometry import GeometryError, PointCloud, TriangleMesh

logger = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class ParseError(ValueError):
    """Malformed input file; carries path plus line number or byte offset."""

    def __init__(self, path, where, message):
        self.path = str(path)
        self.where = where
        super().__init__(f"{path}: {where}: {message}")


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def _parse_obj(path):
    positions = []
    normals = []
    faces = []
    ignored = 0
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise ParseError(path, f"line {lineno}", "vertex needs 3 coordinates")
                try:
                    positions.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ParseError(path, f"line {lineno}", "bad vertex coordinate") from None
            elif tag == "vn":
                if len(tokens) < 4:
                    raise ParseError(path, f"line {lineno}", "normal needs 3 components")
                try:
                    normals.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ParseError(path, f"line {lineno}", "bad normal component") from None
            elif tag == "f":
                if len(tokens) != 4:
                    raise ParseError(
                        path, f"line {lineno}",
                        f"only triangles are supported, face has {len(tokens) - 1} vertices",
                    )
                idx = []
                for t in tokens[1:]:
                    head = t.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ParseError(path, f"line {lineno}", f"bad face index {t!r}") from None
                    if i < 1:
                        raise ParseError(path, f"line {lineno}", "face indices must be >= 1")
                    idx.append(i - 1)
                faces.append((lineno, idx))
            else:
                ignored += 1
    if ignored:
        logger.warning("%s: ignored %d unsupported OBJ directives", path, ignored)
    return positions, normals, faces, ignored


def load_obj_mesh(path) -> TriangleMesh:
    positions, _normals, faces, _ = _parse_obj(path)
    n = len(positions)
    out = []
    for ordinal, (lineno, idx) in enumerate(faces, start=1):
        for i in idx:
            if i >= n:
                raise ParseError(
                    path, f"line {lineno}",
                    f"face {ordinal} references vertex {i + 1} of {n}",
                )
        if len(set(idx)) != 3:
            raise ParseError(path, f"line {lineno}", f"face {ordinal} is degenerate")
        out.append(idx)
    if not out:
        raise ParseError(path, "end of file", "no faces found")
    return TriangleMesh(np.array(positions), np.array(out))


def load_obj_cloud(path) -> PointCloud:
    positions, normals, _faces, _ = _parse_obj(path)
    if len(normals) != len(positions):
        raise ParseError(
            path, "end of file",
            f"{len(positions)} vertices but {len(normals)} normals; "
            "cloud OBJ must pair them one-to-one",
        )
    return PointCloud(np.array(positions), np.array(normals))


def save_obj(path, vertices, normals=None, faces=None):
    with open(path, "w", encoding="utf-8") as fh:
        for p in vertices:
            fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        if normals is not None:
            for v in normals:
                fh.write(f"vn {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        if faces is not None:
            with_n = normals is not None
            for f in faces:
                if with_n:
                    fh.write(f"f {f[0]+1}//{f[0]+1} {f[1]+1}//{f[1]+1} {f[2]+1}//{f[2]+1}\n")
                else:
                    fh.write(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n")


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

class _PlyElement:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, dtype) or (name, "list", count_dtype, value_dtype)


def _read_ply_header(fh, path):
    def next_line(offset):
        buf = bytearray()
        while True:
            ch = fh.read(1)
            if not ch:
                raise ParseError(path, f"byte {offset + len(buf)}", "unexpected end of header")
            buf += ch
            if ch == b"\n":
                return buf.decode("ascii", errors="replace").strip(), offset + len(buf)

    offset = 0
    line, offset = next_line(offset)
    if line != "ply":
        raise ParseError(path, "line 1", "missing 'ply' magic")
    fmt = None
    elements = []
    lineno = 1
    while True:
        line, offset = next_line(offset)
        lineno += 1
        if line == "end_header":
            break
        tokens = line.split()
        if not tokens or tokens[0] == "comment" or tokens[0] == "obj_info":
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[2] != "1.0":
                raise ParseError(path, f"line {lineno}", f"unsupported format line {line!r}")
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(path, f"line {lineno}", f"unsupported PLY flavor {tokens[1]!r}")
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError(path, f"line {lineno}", "malformed element line")
            elements.append(_PlyElement(tokens[1], int(tokens[2])))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(path, f"line {lineno}", "property before any element")
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise ParseError(path, f"line {lineno}", "malformed list property")
                cdt, vdt = tokens[2], tokens[3]
                if cdt not in _PLY_TYPES or vdt not in _PLY_TYPES:
                    raise ParseError(path, f"line {lineno}", "unknown list property type")
                elements[-1].properties.append((tokens[4], "list", _PLY_TYPES[cdt], _PLY_TYPES[vdt]))
            else:
                if len(tokens) != 3 or tokens[1] not in _PLY_TYPES:
                    raise ParseError(path, f"line {lineno}", f"unknown property type {tokens[1]!r}")
                elements[-1].properties.append((tokens[2], _PLY_TYPES[tokens[1]]))
    if fmt is None:
        raise ParseError(path, "header", "missing format line")
    return fmt, elements, offset


def _read_ply(path):
    """Return (fmt, {element name: {prop name: ndarray or list-of-arrays}})."""
    with open(path, "rb") as fh:
        fmt, elements, offset = _read_ply_header(fh, path)
        data = {}
        if fmt == "ascii":
            text = fh.read().decode("ascii", errors="replace").split()
            pos = 0
            for el in elements:
                cols = {p[0]: [] for p in el.properties}
                for _row in range(el.count):
                    for p in el.properties:
                        try:
                            if p[1] == "list":
                                cnt = int(text[pos]); pos += 1
                                vals = [float(v) for v in text[pos:pos + cnt]]
                                if len(vals) != cnt:
                                    raise IndexError
                                pos += cnt
                                cols[p[0]].append(np.array(vals))
                            else:
                                cols[p[0]].append(float(text[pos])); pos += 1
                        except (IndexError, ValueError):
                            raise ParseError(
                                path, f"token {pos}",
                                f"truncated or malformed ascii data in element {el.name!r}",
                            ) from None
                for p in el.properties:
                    if p[1] != "list":
                        cols[p[0]] = np.array(cols[p[0]], dtype=np.float64)
                data[el.name] = cols
        else:
            payload = fh.read()
            pos = 0
            for el in elements:
                is_list = any(p[1] == "list" for p in el.properties)
                if not is_list:
                    dt = np.dtype([(p[0], "<" + p[1]) for p in el.properties])
                    need = dt.itemsize * el.count
                    if len(payload) - pos < need:
                        raise ParseError(path, f"byte {offset + pos}",
                                         f"truncated payload for element {el.name!r}")
                    rows = np.frombuffer(payload, dtype=dt, count=el.count, offset=pos)
                    pos += need
                    data[el.name] = {p[0]: rows[p[0]].astype(np.float64) for p in el.properties}
                else:
                    cols = {p[0]: [] for p in el.properties}
                    for _row in range(el.count):
                        for p in el.properties:
                            try:
                                if p[1] == "list":
                                    cdt = np.dtype("<" + p[2])
                                    cnt = int(np.frombuffer(payload, cdt, 1, pos)[0])
                                    pos += cdt.itemsize
                                    vdt = np.dtype("<" + p[3])
                                    vals = np.frombuffer(payload, vdt, cnt, pos)
                                    pos += vdt.itemsize * cnt
                                    cols[p[0]].append(vals.astype(np.int64))
                                else:
                                    sdt = np.dtype("<" + p[1])
                                    cols[p[0]].append(float(np.frombuffer(payload, sdt, 1, pos)[0]))
                                    pos += sdt.itemsize
                            except ValueError:
                                raise ParseError(path, f"byte {offset + pos}",
                                                 f"truncated payload for element {el.name!r}") from None
                    data[el.name] = cols
        return fmt, data


def _vertex_arrays(path, data, want_normals):
    if "vertex" not in data:
        raise ParseError(path, "header", "no vertex element")
    vert = data["vertex"]
    for key in ("x", "y", "z"):
        if key not in vert:
            raise ParseError(path, "header", f"vertex element lacks property {key!r}")
    pts = np.column_stack([vert["x"], vert["y"], vert["z"]])
    normals = None
    if all(k in vert for k in ("nx", "ny", "nz")):
        normals = np.column_stack([vert["nx"], vert["ny"], vert["nz"]])
    if want_normals and normals is None:
        raise ParseError(path, "header", "vertex element lacks nx/ny/nz normals")
    return pts, normals


def _face_array(path, data):
    if "face" not in data:
        return None
    face = data["face"]
    key = "vertex_indices" if "vertex_indices" in face else "vertex_index"
    if key not in face:
        raise ParseError(path, "header", "face element lacks vertex_indices")
    rows = face[key]
    for i, row in enumerate(rows):
        if len(row) != 3:
            raise ParseError(path, f"face {i}", f"only triangles supported, got {len(row)} indices")
    return np.array([np.asarray(r, dtype=np.int64) for r in rows]) if rows else np.zeros((0, 3), np.int64)


def load_ply_mesh(path) -> TriangleMesh:
    _fmt, data = _read_ply(path)
    pts, _ = _vertex_arrays(path, data, want_normals=False)
    faces = _face_array(path, data)
    if faces is None or len(faces) == 0:
        raise ParseError(path, "header", "no face element; not a mesh")
    return TriangleMesh(pts, faces)


def load_ply_cloud(path) -> PointCloud:
    _fmt, data = _read_ply(path)
    pts, normals = _vertex_arrays(path, data, want_normals=True)
    return PointCloud(pts, normals)


def save_ply(path, vertices, normals=None, faces=None, binary=False):
    """Write a PLY file; float32 payload in binary mode, %.9g in ascii."""
    n = len(vertices)
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {n}")
    ptype = "float"
    for key in ("x", "y", "z"):
        header.append(f"property {ptype} {key}")
    if normals is not None:
        for key in ("nx", "ny", "nz"):
            header.append(f"property {ptype} {key}")
    if faces is not None:
        header.append(f"element face {len(faces)}")
        header.append("property list uchar int vertex_indices")
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        cols = np.asarray(vertices, dtype=np.float64)
        if normals is not None:
            cols = np.hstack([cols, np.asarray(normals, dtype=np.float64)])
        if binary:
            fh.write(np.ascontiguousarray(cols, dtype="<f4").tobytes())
            if faces is not None:
                for f in np.asarray(faces, dtype=np.int64):
                    fh.write(struct.pack("<Biii", 3, int(f[0]), int(f[1]), int(f[2])))
        else:
            lines = []
            for row in cols:
                lines.append(" ".join(f"{v:.9g}" for v in row))
            if faces is not None:
                for f in np.asarray(faces, dtype=np.int64):
                    lines.append(f"3 {f[0]} {f[1]} {f[2]}")
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


# ---------------------------------------------------------------------------
# Format-dispatching front doors
# ---------------------------------------------------------------------------

def _format_of(path, fmt=None):
    if fmt is not None:
        return fmt.lower()
    s = str(path).lower()
    if s.endswith(".obj"):
        return "obj"
    if s.endswith(".ply"):
        return "ply"
    raise ValueError(f"cannot infer format of {path!r}; pass fmt explicitly")


def load_mesh(path, fmt=None) -> TriangleMesh:
    """Load a triangle mesh from OBJ or PLY (ascii / binary LE)."""
    kind = _format_of(path, fmt)
    if kind == "obj":
        return load_obj_mesh(path)
    if kind.startswith("ply"):
        return load_ply_mesh(path)
    raise ValueError(f"unsupported mesh format {kind!r}")


def load_cloud(path, fmt=None) -> PointCloud:
    """Load an oriented point cloud (positions + unit normals)."""
    kind = _format_of(path, fmt)
    if kind == "obj":
        return load_obj_cloud(path)
    if kind.startswith("ply"):
        return load_ply_cloud(path)
    raise ValueError(f"unsupported cloud format {kind!r}")


def save_cloud(cloud: PointCloud, path, binary=False):
    """Write positions + normals as PLY; binary payload round-trips bit-exactly."""
    save_ply(path, cloud.points, cloud.normals, faces=None, binary=binary)


def save_mesh(mesh: TriangleMesh, path, fmt=None, binary=False):
    kind = _format_of(path, fmt)
    if kind == "obj":
        save_obj(path, mesh.vertices, normals=None, faces=mesh.faces)
    elif kind.startswith("ply"):
        save_ply(path, mesh.vertices, normals=None, faces=mesh.faces, binary=binary)
    else:
        raise ValueError(f"unsupported mesh format {kind!r}")
