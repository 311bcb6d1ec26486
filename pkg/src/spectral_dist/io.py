"""ASCII OFF / OBJ / PLY mesh reading, and scalar-field export."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .mesh import MeshError, TriangleMesh, as_field


class MeshParseError(MeshError):
    """The file could not be parsed as the format its extension claims."""


def load_mesh(path) -> TriangleMesh:
    """Read a triangle mesh from an ASCII ``.off``, ``.obj`` or ``.ply`` file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    ext = path.suffix.lower()
    readers = {".off": _read_off, ".obj": _read_obj, ".ply": _read_ply}
    if ext not in readers:
        raise MeshParseError(f"unsupported mesh extension {ext!r} for {path}")
    text = path.read_text()
    try:
        v, t, _ = readers[ext](text)
    except (ValueError, IndexError) as err:
        if isinstance(err, MeshError):
            raise
        raise MeshParseError(f"{path}: {err}") from err
    return TriangleMesh(v, t)


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _read_off(text):
    lines = list(_tokens(text))
    if not lines:
        raise MeshParseError("empty OFF file")
    head = lines[0].split()
    if head[0] != "OFF":
        raise MeshParseError("missing OFF header")
    counts = head[1:] if len(head) > 1 else lines[1].split()
    body = lines[1:] if len(head) > 1 else lines[2:]
    nv, nf = int(counts[0]), int(counts[1])
    if len(body) < nv + nf:
        raise MeshParseError(f"expected {nv} vertices and {nf} faces, file is truncated")
    v = np.array([[float(x) for x in body[k].split()[:3]] for k in range(nv)])
    faces = []
    for k in range(nv, nv + nf):
        rec = body[k].split()
        deg = int(rec[0])
        if deg != 3:
            raise MeshParseError(f"face {k - nv} has {deg} vertices; only triangles supported")
        faces.append([int(x) for x in rec[1:4]])
    return v.reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3), {}


def _read_obj(text):
    verts, faces = [], []
    for line in _tokens(text):
        rec = line.split()
        if rec[0] == "v":
            verts.append([float(x) for x in rec[1:4]])
        elif rec[0] == "f":
            idx = [int(tok.split("/")[0]) for tok in rec[1:]]
            if len(idx) != 3:
                raise MeshParseError(f"face with {len(idx)} vertices; only triangles supported")
            # OBJ indices are 1-based; negative values count back from the last vertex.
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3), {}


def _read_ply(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError("missing ply magic")
    elements, cur, fmt = [], None, None
    k = 1
    while True:
        if k >= len(lines):
            raise MeshParseError("missing end_header")
        rec = lines[k].split()
        k += 1
        if not rec or rec[0] in ("comment", "obj_info"):
            continue
        if rec[0] == "format":
            fmt = rec[1]
        elif rec[0] == "element":
            cur = {"name": rec[1], "count": int(rec[2]), "props": []}
            elements.append(cur)
        elif rec[0] == "property":
            if rec[1] == "list":
                cur["props"].append(("list", rec[4]))
            else:
                cur["props"].append((rec[1], rec[2]))
        elif rec[0] == "end_header":
            break
    if fmt != "ascii":
        raise MeshParseError(f"only ascii PLY is supported (format {fmt})")
    body = [ln for ln in lines[k:] if ln.strip()]
    pos = 0
    verts, faces, props = None, None, {}
    for el in elements:
        rows = body[pos:pos + el["count"]]
        if len(rows) != el["count"]:
            raise MeshParseError(f"element {el['name']} is truncated")
        pos += el["count"]
        if el["name"] == "vertex":
            names = [p[1] for p in el["props"]]
            data = np.array([[float(x) for x in r.split()] for r in rows]).reshape(-1, len(names))
            col = {name: data[:, c] for c, name in enumerate(names)}
            verts = np.column_stack([col["x"], col["y"], col["z"]])
            props = {name: col[name] for name in names if name not in ("x", "y", "z")}
        elif el["name"] == "face":
            out = []
            for r in rows:
                rec = r.split()
                if int(rec[0]) != 3:
                    raise MeshParseError("only triangle faces supported")
                out.append([int(x) for x in rec[1:4]])
            faces = np.array(out, dtype=np.int64).reshape(-1, 3)
    if verts is None or faces is None:
        raise MeshParseError("PLY needs vertex and face elements")
    return verts, faces, props


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write ``mesh`` as ASCII OFF (the format used for golden files)."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"OFF\n{mesh.n_vertices} {mesh.n_triangles} 0\n")
        for p in mesh.vertices:
            fh.write("%.17g %.17g %.17g\n" % tuple(p))
        for t in mesh.triangles:
            fh.write("3 %d %d %d\n" % tuple(t))


def export_field(mesh: TriangleMesh, field, path, format: str | None = None) -> None:
    """Write a per-vertex field.

    ``format`` is ``"csv"`` (``index,value`` rows, no header) or ``"ply-scalar"``
    (the mesh with a per-vertex ``quality`` property). When omitted it is taken
    from the file extension.
    """
    f = as_field(mesh, field)
    if format is None:
        format = "ply-scalar" if str(path).lower().endswith(".ply") else "csv"
    if format == "csv":
        with open(path, "w", newline="\n") as fh:
            for i, x in enumerate(f):
                fh.write("%d,%.17g\n" % (i, x))
    elif format in ("ply", "ply-scalar"):
        with open(path, "w", newline="\n") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {mesh.n_vertices}\n")
            fh.write("property float x\nproperty float y\nproperty float z\n")
            fh.write("property float quality\n")
            fh.write(f"element face {mesh.n_triangles}\n")
            fh.write("property list uchar int vertex_indices\nend_header\n")
            for p, x in zip(mesh.vertices, f):
                fh.write("%.17g %.17g %.17g %.17g\n" % (p[0], p[1], p[2], x))
            for t in mesh.triangles:
                fh.write("3 %d %d %d\n" % tuple(t))
    else:
        raise ValueError(f"unknown field format {format!r}")


def load_field(path) -> np.ndarray:
    """Read back a field written by :func:`export_field`."""
    path = os.fspath(path)
    if path.lower().endswith(".ply"):
        with open(path) as fh:
            _, _, props = _read_ply(fh.read())
        if "quality" not in props:
            raise MeshParseError(f"{path} has no per-vertex quality property")
        return props["quality"]
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    idx = data[:, 0].astype(np.int64)
    if not np.array_equal(idx, np.arange(len(idx))):
        raise MeshParseError(f"{path}: indices are not 0..n-1 in order")
    return data[:, 1].copy()
