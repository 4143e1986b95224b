"""Text and JSON round-trips for meshes and per-vertex fields.

Text layout (one record per line, floats printed with 17 significant digits)::

    nullconv-mesh 1
    dim <n>
    vertices <N>        then N lines of n coordinates
    edges <E>           then E lines "a b"
    boundary <B>        then one line of B vertex ids
    faces <F> <k>       then F lines of k vertex ids
    weights             then one line of N cell weights
    radial              then one line of N radii (omitted when absent)
    meta <json>

    nullconv-field 1
    tensors <N> <n>     then N lines of n*n row-major entries
"""
from __future__ import annotations

import json

import numpy as np

from .manifold import MetricField, SpatialMesh


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def _ints(values) -> str:
    return " ".join(str(int(v)) for v in np.ravel(values))


def mesh_to_text(mesh: SpatialMesh) -> str:
    lines = ["nullconv-mesh 1", f"dim {mesh.dim}", f"vertices {mesh.n_vertices}"]
    lines += [_fmt(v) for v in mesh.vertices]
    lines.append(f"edges {len(mesh.edges)}")
    lines += [_ints(e) for e in mesh.edges]
    lines.append(f"boundary {len(mesh.boundary_vertices)}")
    lines.append(_ints(mesh.boundary_vertices))
    faces = mesh.boundary_faces
    lines.append(f"faces {len(faces)} {faces.shape[1]}")
    lines += [_ints(f) for f in faces]
    lines.append("weights")
    lines.append(_fmt(mesh.cell_weights))
    if mesh.radial_coordinate is not None:
        lines.append("radial")
        lines.append(_fmt(mesh.radial_coordinate))
    lines.append("meta " + json.dumps(mesh.meta, sort_keys=True))
    return "\n".join(lines) + "\n"


def mesh_from_text(text: str) -> SpatialMesh:
    lines = iter(text.splitlines())

    def expect(word):
        parts = next(lines).split()
        if not parts or parts[0] != word:
            raise ValueError(f"expected {word!r} record")
        return parts[1:]

    if next(lines).split() != ["nullconv-mesh", "1"]:
        raise ValueError("not a nullconv mesh file")
    dim = int(expect("dim")[0])
    n = int(expect("vertices")[0])
    vertices = np.array([[float(x) for x in next(lines).split()] for _ in range(n)]).reshape(n, dim)
    m = int(expect("edges")[0])
    edges = np.array([[int(x) for x in next(lines).split()] for _ in range(m)], dtype=np.int64).reshape(m, 2)
    b = int(expect("boundary")[0])
    row = next(lines).split()
    boundary = np.array([int(x) for x in row], dtype=np.int64).reshape(b)
    nf, width = (int(x) for x in expect("faces"))
    faces = np.array([[int(x) for x in next(lines).split()] for _ in range(nf)], dtype=np.int64).reshape(nf, width)
    expect("weights")
    weights = np.array([float(x) for x in next(lines).split()])
    radial = None
    line = next(lines)
    if line == "radial":
        radial = np.array([float(x) for x in next(lines).split()])
        line = next(lines)
    if not line.startswith("meta "):
        raise ValueError("expected 'meta' record")
    meta = json.loads(line[5:])
    return SpatialMesh(vertices, edges, boundary, weights, faces, radial, meta)


def mesh_to_json(mesh: SpatialMesh) -> str:
    doc = {
        "vertices": mesh.vertices.tolist(),
        "edges": mesh.edges.tolist(),
        "boundary": mesh.boundary_vertices.tolist(),
        "faces": np.asarray(mesh.boundary_faces).tolist(),
        "weights": mesh.cell_weights.tolist(),
        "radial": None if mesh.radial_coordinate is None else mesh.radial_coordinate.tolist(),
        "meta": mesh.meta,
    }
    return json.dumps(doc, sort_keys=True)


def mesh_from_json(text: str) -> SpatialMesh:
    doc = json.loads(text)
    dim = len(doc["vertices"][0]) if doc["vertices"] else 2
    faces = np.array(doc["faces"], dtype=np.int64).reshape(len(doc["faces"]), -1 if doc["faces"] else dim)
    radial = None if doc["radial"] is None else np.array(doc["radial"], dtype=float)
    return SpatialMesh(np.array(doc["vertices"], dtype=float), np.array(doc["edges"], dtype=np.int64).reshape(-1, 2),
                       np.array(doc["boundary"], dtype=np.int64), np.array(doc["weights"], dtype=float),
                       faces, radial, doc["meta"])


def field_to_text(field: MetricField) -> str:
    n, dim = field.tensors.shape[:2]
    return "\n".join(["nullconv-field 1", f"tensors {n} {dim}"] + [_fmt(t) for t in field.tensors]) + "\n"


def field_from_text(text: str) -> MetricField:
    lines = text.splitlines()
    if lines[0].split() != ["nullconv-field", "1"]:
        raise ValueError("not a nullconv field file")
    word, n, dim = lines[1].split()
    if word != "tensors":
        raise ValueError("expected 'tensors' record")
    n, dim = int(n), int(dim)
    rows = [[float(x) for x in line.split()] for line in lines[2:2 + n]]
    return MetricField(np.array(rows, dtype=float).reshape(n, dim, dim))


def field_to_json(field: MetricField) -> str:
    return json.dumps({"tensors": field.tensors.reshape(len(field), -1).tolist(), "dim": field.tensors.shape[1]})


def field_from_json(text: str) -> MetricField:
    doc = json.loads(text)
    dim = int(doc["dim"])
    return MetricField(np.array(doc["tensors"], dtype=float).reshape(-1, dim, dim))
