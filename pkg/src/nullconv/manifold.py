"""Discretized Riemannian manifolds with boundary and their integral quantities.

A :class:`SpatialMesh` is a graph on chart coordinates with per-vertex volume
weights.  Tensor fields live on the vertices; every integral is vertex-lumped
(value at the vertex times the cell weight) because the metrics of interest are
only piecewise continuous.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class MetricError(ValueError):
    """Raised when a tensor field is not symmetric positive-definite."""


@dataclass(frozen=True, eq=False)
class SpatialMesh:
    vertices: np.ndarray
    edges: np.ndarray
    boundary_vertices: np.ndarray
    cell_weights: np.ndarray
    boundary_faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), dtype=np.int64))
    radial_coordinate: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        boundary = np.unique(np.asarray(self.boundary_vertices, dtype=np.int64))
        weights = np.asarray(self.cell_weights, dtype=float)
        faces = np.asarray(self.boundary_faces, dtype=np.int64)
        if faces.size == 0:
            faces = faces.reshape(0, vertices.shape[1])
        for name, arr in (("vertices", vertices), ("edges", edges), ("boundary_vertices", boundary),
                          ("cell_weights", weights), ("boundary_faces", faces)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.radial_coordinate is not None:
            radial = np.asarray(self.radial_coordinate, dtype=float)
            radial.setflags(write=False)
            object.__setattr__(self, "radial_coordinate", radial)
        self._validate()

    def _validate(self):
        n_vertices = len(self.vertices)
        if n_vertices == 0:
            raise ValueError("mesh has no vertices")
        if self.cell_weights.shape != (n_vertices,):
            raise ValueError("cell_weights must have one entry per vertex")
        if np.any(self.cell_weights <= 0):
            raise ValueError("cell_weights must be strictly positive")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= n_vertices):
            raise ValueError("edge references a missing vertex")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self-loop edge")
        if n_vertices > 1:
            n_comp, _ = connected_components(self.adjacency(), directed=False)
            if n_comp != 1:
                raise ValueError(f"edge graph is disconnected ({n_comp} components)")
        if len(self.boundary_vertices):
            on_edge = np.zeros(n_vertices, dtype=bool)
            on_edge[self.edges.ravel()] = True
            if not on_edge[self.boundary_vertices].all():
                raise ValueError("boundary vertex without an incident edge")
        if self.boundary_faces.size and self.boundary_faces.shape[1] != self.dim:
            raise ValueError("boundary faces must list dim vertices each")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def adjacency(self):
        n = len(self.vertices)
        ones = np.ones(len(self.edges))
        return coo_matrix((ones, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n)).tocsr()

    def spacing(self) -> float:
        """Largest coordinate length among the shortest edge at each vertex."""
        lengths = np.linalg.norm(self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]], axis=1)
        shortest = np.full(self.n_vertices, np.inf)
        np.minimum.at(shortest, self.edges[:, 0], lengths)
        np.minimum.at(shortest, self.edges[:, 1], lengths)
        return float(shortest[np.isfinite(shortest)].max())


@dataclass(frozen=True, eq=False)
class MetricField:
    tensors: np.ndarray

    def __post_init__(self):
        tensors = np.asarray(self.tensors, dtype=float)
        if tensors.ndim != 3 or tensors.shape[1] != tensors.shape[2]:
            raise ValueError("tensors must have shape (n_vertices, n, n)")
        tensors.setflags(write=False)
        object.__setattr__(self, "tensors", tensors)

    def __len__(self):
        return len(self.tensors)

    @classmethod
    def identity(cls, n_vertices: int, dim: int) -> MetricField:
        return cls(np.broadcast_to(np.eye(dim), (n_vertices, dim, dim)).copy())

    @classmethod
    def conformal(cls, factor, base: MetricField) -> MetricField:
        """Metric ``factor**2 * base`` for a per-vertex scalar ``factor``."""
        factor = np.asarray(factor, dtype=float)
        return cls(base.tensors * (factor * factor)[:, None, None])

    def scaled(self, c: float) -> MetricField:
        return MetricField(self.tensors * c)

    def check_positive(self):
        t = self.tensors
        if not np.allclose(t, np.swapaxes(t, 1, 2), rtol=1e-12, atol=0.0):
            raise MetricError("metric tensor is not symmetric")
        if not np.all(np.isfinite(t)):
            raise MetricError("metric tensor has non-finite entries")
        eig = np.linalg.eigvalsh(t)
        if np.any(eig[:, 0] <= 0):
            bad = int(np.argmax(eig[:, 0] <= 0))
            raise MetricError(f"metric is not positive-definite at vertex {bad}")

    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.tensors))


@dataclass(frozen=True, eq=False)
class Lapse:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("lapse must be a per-vertex scalar")
        if not np.all(values > 0):
            raise ValueError("lapse must be strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def unit(cls, n_vertices: int) -> Lapse:
        return cls(np.ones(n_vertices))


@dataclass(frozen=True, eq=False)
class StaticSpacetime:
    """The slab ``[t0, t1] x M`` with metric ``-h^2 dt^2 + sigma``."""

    t0: float
    t1: float
    mesh: SpatialMesh
    sigma: MetricField
    lapse: Lapse

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise ValueError("need t0 < t1")
        n = self.mesh.n_vertices
        if len(self.sigma) != n or len(self.lapse.values) != n:
            raise ValueError("sigma and lapse must be defined on every mesh vertex")
        if self.sigma.tensors.shape[1] != self.mesh.dim:
            raise ValueError("sigma dimension does not match the mesh")

    @property
    def height(self) -> float:
        return self.t1 - self.t0

    def is_reduced(self) -> bool:
        return bool(np.all(self.lapse.values == 1.0))


def conformal_reduce(st: StaticSpacetime) -> StaticSpacetime:
    """Return the conformally related spacetime ``-dt^2 + sigma/h^2``.

    With unit lapse this is the identity on sigma, bit for bit.
    """
    inv = 1.0 / st.lapse.values
    reduced = MetricField(st.sigma.tensors * (inv * inv)[:, None, None])
    return StaticSpacetime(st.t0, st.t1, st.mesh, reduced, Lapse.unit(st.mesh.n_vertices))


def volume(mesh: SpatialMesh, metric: MetricField) -> float:
    metric.check_positive()
    return float(np.sum(metric.sqrt_det() * mesh.cell_weights))


def boundary_area(mesh: SpatialMesh, metric: MetricField, *, warn: bool = True) -> float:
    """(n-1)-volume of the boundary faces in the induced metric.

    Faces are simplices of ``dim`` vertices; the induced tensor on a face is the
    average of its vertex tensors.  A mesh without boundary gives 0.
    """
    faces = mesh.boundary_faces
    if len(faces) == 0:
        if warn:
            warnings.warn("mesh has an empty boundary; area is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    n = mesh.dim
    if n == 1:
        return float(len(np.unique(faces)))
    tens = metric.tensors[faces].mean(axis=1)
    base = mesh.vertices[faces[:, 0]]
    span = mesh.vertices[faces[:, 1:]] - base[:, None, :]  # (F, n-1, n)
    gram = np.einsum("fai,fij,fbj->fab", span, tens, span)
    return float(np.sum(np.sqrt(np.linalg.det(gram))) / math.factorial(n - 1))


def operator_norm(g1: MetricField, g0: MetricField) -> np.ndarray:
    """Per-vertex largest eigenvalue of ``g0^{-1} g1``."""
    chol = np.linalg.cholesky(g0.tensors)
    inv = np.linalg.inv(chol)
    sym = inv @ g1.tensors @ np.swapaxes(inv, 1, 2)
    sym = 0.5 * (sym + np.swapaxes(sym, 1, 2))
    return np.linalg.eigvalsh(sym)[:, -1]


def lp_tensor_norm(mesh: SpatialMesh, g1: MetricField, g0: MetricField, p: float) -> float:
    """Integral of ``|g1|_{g0}^{p/2}`` against the volume form of g0."""
    if p <= 0:
        raise ValueError("p must be positive")
    g0.check_positive()
    norm = operator_norm(g1, g0)
    return float(np.sum(norm ** (p / 2.0) * g0.sqrt_det() * mesh.cell_weights))


def min_ratio(g1: MetricField, g0: MetricField) -> float:
    """Largest c with ``g1 >= c * g0`` at every vertex (smallest eigenvalue of g0^{-1} g1)."""
    chol = np.linalg.cholesky(g0.tensors)
    inv = np.linalg.inv(chol)
    sym = inv @ g1.tensors @ np.swapaxes(inv, 1, 2)
    sym = 0.5 * (sym + np.swapaxes(sym, 1, 2))
    return float(np.linalg.eigvalsh(sym)[:, 0].min())


# ---------------------------------------------------------------------------
# polar meshes of the closed unit 2-disk
# ---------------------------------------------------------------------------

MIN_RINGS_PER_REGION = 4
INNER_RATIO = 0.01
MAX_VERTICES = 2_000_000


def _primitive_stencil(reach: int) -> list[tuple[int, int]]:
    steps = [(0, 1)]
    for di in range(1, reach + 1):
        for dk in range(-reach, reach + 1):
            if math.gcd(di, abs(dk)) == 1:
                steps.append((di, dk))
    return steps


def ring_radii(level: int, breakpoints=(), *, inner_ratio: float = INNER_RATIO,
               min_rings: int = MIN_RINGS_PER_REGION) -> np.ndarray:
    """Ring radii of a polar grid at the given refinement level.

    Level 0 places geometric rings with ratio about ``exp(2*pi/8)`` (cells close
    to conformally square) and at least ``min_rings`` intervals between
    consecutive breakpoints.  Each level inserts the geometric midpoint of every
    ring gap and pushes the innermost ring one step towards the centre, so
    coarser rings always survive refinement.
    """
    dtheta = 2 * math.pi / 8
    cuts = sorted({float(b) for b in breakpoints if 0.0 < b < 1.0} | {1.0})
    radii = []
    lo = 0.0
    for hi in cuts:
        if lo == 0.0:
            # the hole around the centre shrinks by one level-0 ring ratio per level
            base = max(min_rings, math.ceil(math.log(1.0 / inner_ratio) / dtheta))
            ratio = (1.0 / inner_ratio) ** (1.0 / base)
            count = (base + level) * 2 ** level
            start = hi * inner_ratio / ratio ** level
            radii.append(start)
        else:
            count = max(min_rings, math.ceil(math.log(hi / lo) / dtheta)) * 2 ** level
            start = lo
        inner = start * (hi / start) ** (np.arange(1, count) / count)
        radii.extend(inner.tolist())
        radii.append(hi)
        lo = hi
    radii = np.asarray(radii)
    return radii


def polar_disk(level: int = 2, breakpoints=(), *, reach: int = 3,
               inner_ratio: float = INNER_RATIO) -> SpatialMesh:
    """Polar grid on the closed unit disk: a centre vertex plus rings x sectors.

    ``8 * 2**level`` sectors; the edge stencil connects every vertex to the
    primitive offsets ``(d_ring, d_sector)`` with entries up to ``reach``, which
    keeps the graph dilation on flat cells close to 1.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    radii = ring_radii(level, breakpoints, inner_ratio=inner_ratio)
    n_sectors = 8 * 2 ** level
    n_rings = len(radii)
    n_vertices = 1 + n_rings * n_sectors
    if n_vertices > MAX_VERTICES:
        raise MemoryError(f"polar mesh would have {n_vertices} vertices (cap {MAX_VERTICES})")

    theta = 2 * np.pi * np.arange(n_sectors) / n_sectors
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    xy = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    vertices = np.vstack([[0.0, 0.0], xy])
    radial = np.concatenate([[0.0], rr.ravel()])

    def vid(i, k):
        return 1 + i * n_sectors + (k % n_sectors)

    ring_idx, sec_idx = np.meshgrid(np.arange(n_rings), np.arange(n_sectors), indexing="ij")
    ring_idx, sec_idx = ring_idx.ravel(), sec_idx.ravel()
    edges = []
    for di, dk in _primitive_stencil(reach):
        ok = ring_idx + di < n_rings
        edges.append(np.column_stack([vid(ring_idx[ok], sec_idx[ok]), vid(ring_idx[ok] + di, sec_idx[ok] + dk)]))
    for i in range(min(reach, n_rings)):
        ks = np.arange(n_sectors)
        edges.append(np.column_stack([np.zeros(n_sectors, dtype=np.int64), vid(i, ks)]))
    edges = np.vstack(edges).astype(np.int64)
    edges = np.unique(np.sort(edges, axis=1), axis=0)

    mid = np.concatenate([[radii[0] / 2], 0.5 * (radii[1:] + radii[:-1]), [1.0]])
    ring_area = np.pi * (mid[1:] ** 2 - mid[:-1] ** 2) / n_sectors
    weights = np.concatenate([[np.pi * mid[0] ** 2], np.repeat(ring_area, n_sectors)])

    outer = vid(n_rings - 1, np.arange(n_sectors))
    faces = np.column_stack([outer, np.roll(outer, -1)])
    meta = {"kind": "polar", "level": level, "breakpoints": [float(b) for b in breakpoints],
            "reach": reach, "inner_ratio": inner_ratio, "n_sectors": n_sectors, "n_rings": n_rings}
    return SpatialMesh(vertices, edges, outer, weights, faces, radial, meta)


def ring_vertices(mesh: SpatialMesh, radius: float) -> np.ndarray:
    """Vertex indices of the polar ring closest to ``radius``."""
    radii = np.unique(mesh.radial_coordinate[1:])
    r = radii[np.argmin(np.abs(radii - radius))]
    return np.flatnonzero(mesh.radial_coordinate == r)


def flat_metric(mesh: SpatialMesh) -> MetricField:
    return MetricField.identity(mesh.n_vertices, mesh.dim)


def static_spacetime(mesh: SpatialMesh, sigma: MetricField | None = None, lapse=None,
                     t0: float = 0.0, t1: float = 1.0) -> StaticSpacetime:
    sigma = flat_metric(mesh) if sigma is None else sigma
    if lapse is None:
        lapse = Lapse.unit(mesh.n_vertices)
    elif not isinstance(lapse, Lapse):
        lapse = Lapse(lapse)
    return StaticSpacetime(t0, t1, mesh, sigma, lapse)
