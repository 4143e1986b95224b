"""Riemannian distances on a :class:`SpatialMesh` by graph shortest paths."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .manifold import MetricField, SpatialMesh, polar_disk


class DisconnectedError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Distances between a finite list of labelled points.

    ``points`` holds the identifiers (mesh vertex indices, or rows of
    ``(time, vertex)`` for spacetime samples).  Construction enforces a zero
    diagonal, exact symmetry and finite entries.
    """

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        points = np.asarray(self.points)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] != len(points):
            raise ValueError("values must be square with one row per point")
        if not np.all(np.isfinite(values)):
            raise DisconnectedError("distance matrix has non-finite entries")
        if np.any(values < 0):
            raise ValueError("negative distance")
        if np.any(np.diag(values) != 0):
            raise ValueError("nonzero diagonal")
        if not np.array_equal(values, values.T):
            raise ValueError("distance matrix is not symmetric")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "points", points)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_values(cls, values, points=None) -> DistanceMatrix:
        """Symmetrize (by the smaller entry) and wrap a raw matrix."""
        values = np.asarray(values, dtype=float)
        values = np.minimum(values, values.T)
        np.fill_diagonal(values, 0.0)
        if points is None:
            points = np.arange(len(values))
        return cls(points, values)

    def scaled(self, c: float) -> DistanceMatrix:
        return DistanceMatrix(self.points, self.values * c)

    def subset(self, idx) -> DistanceMatrix:
        idx = np.asarray(idx)
        return DistanceMatrix(self.points[idx], self.values[np.ix_(idx, idx)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["point"] + [_label(p) for p in self.points])
        for p, row in zip(self.points, self.values):
            writer.writerow([_label(p)] + [repr(float(v)) for v in row])
        return buf.getvalue()


def _label(p) -> str:
    if np.ndim(p) == 0:
        return str(p.item() if hasattr(p, "item") else p)
    return ":".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in p)


def edge_lengths(mesh: SpatialMesh, metric: MetricField) -> np.ndarray:
    """Length of each mesh edge: ``sqrt(v^T S v)`` with S the endpoint-averaged tensor."""
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    v = mesh.vertices[b] - mesh.vertices[a]
    avg = 0.5 * (metric.tensors[a] + metric.tensors[b])
    return np.sqrt(np.einsum("ei,eij,ej->e", v, avg, v))


def weighted_graph(mesh: SpatialMesh, metric: MetricField) -> csr_matrix:
    n = mesh.n_vertices
    w = edge_lengths(mesh, metric)
    return csr_matrix((w, (mesh.edges[:, 0], mesh.edges[:, 1])), shape=(n, n))


def graph_distances(mesh: SpatialMesh, metric: MetricField, sources, *, graph=None) -> np.ndarray:
    """Rows of shortest-path distances from ``sources`` to every vertex."""
    metric.check_positive()
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if graph is None:
        graph = weighted_graph(mesh, metric)
    dist = dijkstra(graph, directed=False, indices=sources)
    if not np.all(np.isfinite(dist)):
        raise DisconnectedError("mesh graph is disconnected")
    return dist


def distance_matrix(mesh: SpatialMesh, metric: MetricField, sources) -> DistanceMatrix:
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    rows = graph_distances(mesh, metric, sources)
    return DistanceMatrix.from_values(rows[:, sources], sources)


def diameter(dm: DistanceMatrix) -> float:
    if len(dm) == 0:
        raise ValueError("empty distance matrix")
    return float(dm.values.max())


def refine(mesh: SpatialMesh) -> SpatialMesh:
    """Next refinement level of a polar mesh; coarse vertices keep their coordinates."""
    meta = mesh.meta
    if meta.get("kind") != "polar":
        raise ValueError("refine only supports polar meshes")
    return polar_disk(meta["level"] + 1, meta["breakpoints"], reach=meta["reach"],
                      inner_ratio=meta["inner_ratio"])
