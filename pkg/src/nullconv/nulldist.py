"""Null distance on static spacetimes.

Two independent routes are provided:

* the closed form ``max(d(x, y), |t - s|)`` for ``-dt^2 + sigma`` given the
  spatial distance ``d`` of the conformally reduced metric, and
* a brute-force oracle: shortest paths over a grid of piecewise causal
  curves, where every step either stays put in space or follows one mesh edge
  while the time changes by at least the edge length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .geodesic import DistanceMatrix, edge_lengths, graph_distances
from .manifold import StaticSpacetime, conformal_reduce

MAX_SPACETIME_VERTICES = 2_000_000


class NonCausalSegment(ValueError):
    def __init__(self, index: int, message: str = ""):
        super().__init__(message or f"segment {index} is not causal")
        self.index = index


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    x: int


@dataclass(frozen=True)
class PiecewiseCausalPath:
    """Spacetime points joined by causal pieces.

    ``orientations[i]`` is +1 for a future-directed piece from ``points[i]`` to
    ``points[i+1]`` and -1 for a past-directed one; omitted flags are inferred
    from the time change.
    """

    points: tuple
    orientations: tuple = ()

    def __post_init__(self):
        pts = tuple(p if isinstance(p, SpacetimePoint) else SpacetimePoint(float(p[0]), int(p[1]))
                    for p in self.points)
        object.__setattr__(self, "points", pts)
        if not self.orientations:
            flags = tuple(1 if b.t >= a.t else -1 for a, b in zip(pts, pts[1:]))
            object.__setattr__(self, "orientations", flags)
        if len(self.orientations) != max(len(pts) - 1, 0):
            raise ValueError("one orientation flag per segment")


def _spatial_lookup(spatial) -> Callable[[int, int], float]:
    if isinstance(spatial, DistanceMatrix):
        pos = {int(p): i for i, p in enumerate(spatial.points)}
        return lambda x, y: float(spatial.values[pos[x], pos[y]])
    return spatial


def null_length(path: PiecewiseCausalPath, spatial, *, rtol: float = 1e-12) -> float:
    """Sum of ``|t_i - t_{i-1}|`` over the pieces of a piecewise causal path.

    ``spatial`` gives the reduced-metric distance between mesh vertices, either
    as a :class:`DistanceMatrix` or a callable.  A piece is causal when its time
    change covers that distance and its sign matches the orientation flag.
    """
    dist = _spatial_lookup(spatial)
    total = 0.0
    for i, (a, b) in enumerate(zip(path.points, path.points[1:])):
        dt = b.t - a.t
        d = 0.0 if a.x == b.x else dist(a.x, b.x)
        if abs(dt) < d * (1 - rtol):
            raise NonCausalSegment(i, f"segment {i}: time change {abs(dt):.6g} < spatial length {d:.6g}")
        if dt != 0 and (dt > 0) != (path.orientations[i] > 0):
            raise NonCausalSegment(i, f"segment {i}: orientation flag contradicts time change")
        total += abs(dt)
    return total


def null_distance_static(d_spatial: DistanceMatrix, p: SpacetimePoint, q: SpacetimePoint) -> float:
    """Null distance of ``-dt^2 + sigma`` between two slab points.

    Equals ``d + max(0, |t - s| - d)``, evaluated as ``max(d, |t - s|)`` so that
    causally related pairs return the time gap exactly.
    """
    d = 0.0 if p.x == q.x else _spatial_lookup(d_spatial)(p.x, q.x)
    return max(d, abs(p.t - q.t))


def null_distance_matrix(d_spatial: DistanceMatrix, samples) -> DistanceMatrix:
    """Null distances between spacetime samples given as ``(t, vertex)`` rows.

    Vertices must be points of ``d_spatial``.  The result's points are the
    sample rows.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    pos = {int(p): i for i, p in enumerate(d_spatial.points)}
    idx = np.array([pos[int(x)] for x in samples[:, 1]], dtype=np.int64)
    spatial = d_spatial.values[np.ix_(idx, idx)]
    gap = np.abs(samples[:, 0][:, None] - samples[:, 0][None, :])
    return DistanceMatrix(samples, np.maximum(spatial, gap))


def product_samples(times: Sequence[float], vertices: Sequence[int]) -> np.ndarray:
    """All ``(t, x)`` pairs, time-major."""
    tt, xx = np.meshgrid(np.asarray(times, dtype=float), np.asarray(vertices), indexing="ij")
    return np.column_stack([tt.ravel(), xx.ravel()])


# ---------------------------------------------------------------------------
# causal grid oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpacetimeGrid:
    """Causal graph on ``time_levels x mesh`` for a static spacetime.

    A mesh edge of reduced length ``l`` joins ``(tau_a, x)`` with
    ``(tau_{a+k}, y)`` for the smallest ``k`` with ``k * dt >= l``, in both
    time orientations; longer time jumps along the same edge decompose into
    this step plus purely temporal edges of equal total weight.  Every edge
    weighs its time change.
    """

    spacetime: StaticSpacetime
    time_levels: np.ndarray
    edge_steps: np.ndarray
    edge_lengths: np.ndarray
    graph: csr_matrix = field(repr=False)

    @property
    def mesh(self):
        return self.spacetime.mesh

    @property
    def dt(self) -> float:
        return float(self.time_levels[1] - self.time_levels[0])

    @property
    def n_levels(self) -> int:
        return len(self.time_levels)

    @property
    def cell(self) -> float:
        """Largest reduced length among the shortest edge at each vertex (one grid cell)."""
        mesh = self.mesh
        shortest = np.full(mesh.n_vertices, np.inf)
        np.minimum.at(shortest, mesh.edges[:, 0], self.edge_lengths)
        np.minimum.at(shortest, mesh.edges[:, 1], self.edge_lengths)
        return float(max(shortest.max(), self.dt))

    def level_of(self, t: float) -> int:
        a = int(round((t - self.time_levels[0]) / self.dt))
        if a < 0 or a >= self.n_levels or not math.isclose(self.time_levels[a], t, rel_tol=0, abs_tol=1e-9 * self.dt):
            raise ValueError(f"time {t} is not a grid level")
        return a

    def node(self, p: SpacetimePoint) -> int:
        return self.level_of(p.t) * self.mesh.n_vertices + int(p.x)

    def spatial_distances(self, sources) -> np.ndarray:
        return graph_distances(self.mesh, self.spacetime.sigma, sources)

    def distances(self, sources: Sequence[SpacetimePoint], targets: Sequence[SpacetimePoint]) -> np.ndarray:
        """Oracle null distances, one row per source."""
        src = np.array([self.node(p) for p in sources], dtype=np.int64)
        tgt = np.array([self.node(q) for q in targets], dtype=np.int64)
        uniq, inv = np.unique(src, return_inverse=True)
        rows = dijkstra(self.graph, directed=False, indices=uniq)
        out = rows[inv][:, tgt]
        assert np.all(np.isfinite(out)), "unreachable grid point despite temporal edges"
        return out


def time_levels_for(st: StaticSpacetime, n_levels: int | None = None, *, quantile: float = 0.05) -> np.ndarray:
    """Uniform time levels covering the slab.

    Without ``n_levels`` the step is at most the ``quantile`` of reduced edge
    lengths, with a power-of-two number of steps (exact levels on dyadic
    slabs), shrunk if needed to respect the vertex cap.
    """
    if n_levels is None:
        red = conformal_reduce(st)
        step = float(np.quantile(edge_lengths(red.mesh, red.sigma), quantile))
        steps = 2 ** max(1, math.ceil(math.log2(st.height / step)))
        while steps > 2 and (steps + 1) * st.mesh.n_vertices > MAX_SPACETIME_VERTICES:
            steps //= 2
        n_levels = steps + 1
    return np.linspace(st.t0, st.t1, n_levels)


def build_grid(st: StaticSpacetime, n_levels: int | None = None, *, quantile: float = 0.05) -> SpacetimeGrid:
    reduced = conformal_reduce(st)
    levels = time_levels_for(st, n_levels, quantile=quantile)
    n_time = len(levels)
    n_space = st.mesh.n_vertices
    if n_time * n_space > MAX_SPACETIME_VERTICES:
        raise MemoryError(f"spacetime grid would have {n_time * n_space} vertices (cap {MAX_SPACETIME_VERTICES})")
    dt = (st.t1 - st.t0) / (n_time - 1)
    lengths = edge_lengths(reduced.mesh, reduced.sigma)
    steps = np.ceil(lengths / dt).astype(np.int64)
    steps = np.maximum(steps, 1)
    steps[steps * dt < lengths] += 1
    usable = steps < n_time
    n_comp, _ = connected_components(csr_matrix((np.ones(int(usable.sum())), (st.mesh.edges[usable, 0], st.mesh.edges[usable, 1])),
                                                shape=(n_space, n_space)), directed=False)
    if n_comp > 1:
        raise ValueError(f"mesh edges longer than the slab split it into {n_comp} causally separate parts; "
                         "refine the mesh or lengthen the slab")

    # temporal edges between consecutive levels
    a = (np.arange(n_time - 1)[:, None] * n_space + np.arange(n_space)[None, :]).ravel()
    rows, cols, wts = [a], [a + n_space], [np.full(a.shape, dt)]
    ex, ey = st.mesh.edges[:, 0], st.mesh.edges[:, 1]
    for k in np.unique(steps):
        if k >= n_time:
            continue
        sel = steps == k
        lev = np.arange(n_time - k)[:, None] * n_space
        for u, v in ((ex[sel], ey[sel]), (ey[sel], ex[sel])):
            a = (lev + u[None, :]).ravel()
            b = (lev + k * n_space + v[None, :]).ravel()
            rows.append(a)
            cols.append(b)
            wts.append(np.full(a.shape, k * dt))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    wts = np.concatenate(wts)
    n = n_time * n_space
    graph = csr_matrix((wts, (rows, cols)), shape=(n, n))
    return SpacetimeGrid(reduced, levels, steps, lengths, graph)


def null_distance_oracle(grid: SpacetimeGrid, p: SpacetimePoint, q: SpacetimePoint) -> float:
    return float(grid.distances([p], [q])[0, 0])


class Causality(str, Enum):
    FUTURE = "causal-future"
    PAST = "causal-past"
    SPACELIKE = "spacelike"


@dataclass(frozen=True)
class CausalRelation:
    kind: Causality
    marginal: bool


def causal_relation(grid: SpacetimeGrid, p: SpacetimePoint, q: SpacetimePoint, *,
                    tolerance: float | None = None) -> CausalRelation:
    """Causal relation of q to p on the static grid.

    ``q`` is in the causal future of ``p`` when ``s - t >= d(x, y)``.  Pairs
    within ``tolerance`` (default: one grid cell) of the light cone are flagged
    marginal.
    """
    if p == q:
        return CausalRelation(Causality.FUTURE, False)
    d = 0.0 if p.x == q.x else float(grid.spatial_distances([p.x])[0, q.x])
    gap = q.t - p.t
    tol = grid.cell if tolerance is None else tolerance
    marginal = abs(abs(gap) - d) <= tol
    if abs(gap) >= d:
        kind = Causality.FUTURE if gap >= 0 else Causality.PAST
    else:
        kind = Causality.SPACELIKE
    return CausalRelation(kind, marginal)
