"""Intrinsic-flat distance estimates between static slabs.

The flat distance between two null-distance slabs is bounded through a
glued space ``Z``: the slab times a height interval ``[0, H]`` carrying the
first metric at height 0 and the second above, with a second copy of the
slab attached at the top along a good set ``W``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .convergence import good_set
from .geodesic import distance_matrix
from .manifold import (MetricField, StaticSpacetime, boundary_area, conformal_reduce, min_ratio,
                       volume)
from .nulldist import MAX_SPACETIME_VERTICES, SpacetimeGrid, build_grid


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def area_factor(n: int) -> float:
    """``2**n / omega_n``, the ratio bounding mass by Hausdorff measure in dimension n."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    return 2.0 ** n / unit_ball_volume(n)


@dataclass(frozen=True)
class FlatBoundInputs:
    """Measure bounds for a slab of spatial dimension ``n``.

    ``V`` bounds the slab's (n+1)-measure, ``Vp`` that of the part outside the
    good set, ``A`` the n-measure of its boundary; ``H`` is the gluing height
    and ``delta`` the distance defect it must dominate.
    """

    n: int
    V: float
    Vp: float
    A: float
    H: float
    delta: float = 0.0

    def __post_init__(self):
        for name in ("V", "Vp", "A", "H", "delta"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n < 1:
            raise ValueError("dimension must be at least 1")
        if self.H < self.delta:
            raise ValueError(f"gluing height {self.H} is below the distance defect {self.delta}")


def flat_bound(inp: FlatBoundInputs) -> float:
    n = inp.n
    c1, c2 = area_factor(n + 1), area_factor(n + 2)
    return 2 * c1 * inp.Vp + c2 * inp.H * inp.V + c1 * inp.H * inp.A


def hausdorff_overestimates(slab: StaticSpacetime) -> tuple[float, float]:
    """Product overestimates ``(V, A)`` for the slab's measure and boundary measure.

    ``V = Vol(M) |dt|`` and ``A = Area(dM) |dt| + 2 Vol(M)``, both in the
    reduced spatial metric.
    """
    red = slab if slab.is_reduced() else conformal_reduce(slab)
    vol = volume(red.mesh, red.sigma)
    side = boundary_area(red.mesh, red.sigma, warn=False) * red.height
    return vol * red.height, side + 2 * vol


# ---------------------------------------------------------------------------
# Z space
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZSpace:
    """Discretised ``L x [0, H]`` plus a top copy of ``L`` merged along ``W``.

    Base vertices are ``(height level c, time level a, vertex x)``; top-copy
    vertices ``(a, x)`` coincide with ``(top level, a, x)`` when ``x`` is in
    ``W``.  Moves in space and time follow the first grid's causal edges at
    height 0 and the second grid's above; height moves cost their height
    change.
    """

    lower: SpacetimeGrid
    upper: SpacetimeGrid
    heights: np.ndarray
    good: np.ndarray
    graph: csr_matrix = field(repr=False)
    top_index: np.ndarray = field(repr=False)

    @property
    def H(self) -> float:
        return float(self.heights[-1])

    @property
    def cell(self) -> float:
        return max(self.lower.cell, self.upper.cell, float(self.heights[1] - self.heights[0]))

    def node(self, p) -> int:
        """Graph index of ``("base", height, t, x)`` or ``("top", t, x)``."""
        n_space = self.lower.mesh.n_vertices
        n_time = self.lower.n_levels
        if p[0] == "base":
            _, h, t, x = p
            c = int(np.argmin(np.abs(self.heights - h)))
            if not math.isclose(self.heights[c], h, abs_tol=1e-9 * self.H):
                raise ValueError(f"height {h} is not a grid level")
            return (c * n_time + self.lower.level_of(t)) * n_space + int(x)
        if p[0] == "top":
            _, t, x = p
            return int(self.top_index[self.lower.level_of(t) * n_space + int(x)])
        raise ValueError(f"unknown Z point {p!r}")

    def distances(self, sources, targets) -> np.ndarray:
        src = np.array([self.node(p) for p in sources])
        tgt = np.array([self.node(q) for q in targets])
        uniq, inv = np.unique(src, return_inverse=True)
        rows = dijkstra(self.graph, directed=False, indices=uniq)
        out = rows[inv][:, tgt]
        assert np.all(np.isfinite(out)), "Z grid is disconnected"
        return out


def _layer_edges(grid: SpacetimeGrid, offset: int, index=None):
    coo = grid.graph.tocoo()
    rows, cols = coo.row.astype(np.int64), coo.col.astype(np.int64)
    if index is not None:
        rows, cols = index[rows], index[cols]
    return rows + offset, cols + offset, coo.data


def build_zspace(st1: StaticSpacetime, st2: StaticSpacetime, good_vertices, H: float,
                 n_levels: int | None = None, n_heights: int | None = None) -> ZSpace:
    """Z grid for slabs ``st1`` (height 0) and ``st2`` (above), glued along ``good_vertices``.

    Height levels default to the time step of the grid.
    """
    if st1.mesh is not st2.mesh and st1.mesh.n_vertices != st2.mesh.n_vertices:
        raise ValueError("both slabs must live on the same mesh")
    if (st1.t0, st1.t1) != (st2.t0, st2.t1):
        raise ValueError("both slabs must share the time interval")
    lower = build_grid(st1, n_levels)
    upper = build_grid(st2, lower.n_levels)
    n_space, n_time = st1.mesh.n_vertices, lower.n_levels
    layer = n_space * n_time
    if n_heights is None:
        n_heights = max(1, math.ceil(H / lower.dt - 1e-9))
    heights = np.linspace(0.0, H, n_heights + 1)
    good = np.zeros(n_space, dtype=bool)
    good[np.asarray(good_vertices, dtype=np.int64)] = True
    if not good.any():
        raise ValueError("the good set is empty; the top copy would be detached")
    base_total = (n_heights + 1) * layer
    # top copy: merged into the top layer on W, fresh vertices elsewhere
    n_top_fresh = int((~good).sum()) * n_time
    if base_total + n_top_fresh > MAX_SPACETIME_VERTICES:
        raise MemoryError(f"Z grid would have {base_total + n_top_fresh} vertices")
    top_index = np.empty(layer, dtype=np.int64)
    flat_good = np.tile(good, n_time)
    top_index[flat_good] = n_heights * layer + np.flatnonzero(flat_good)
    top_index[~flat_good] = base_total + np.arange(n_top_fresh)
    total = base_total + n_top_fresh

    rows, cols, wts = [], [], []
    for c in range(n_heights + 1):
        r, q, w = _layer_edges(lower if c == 0 else upper, c * layer)
        rows.append(r), cols.append(q), wts.append(w)
    r, q, w = _layer_edges(upper, 0, top_index)
    rows.append(r), cols.append(q), wts.append(w)
    for c in range(n_heights):
        a = c * layer + np.arange(layer)
        rows.append(a), cols.append(a + layer), wts.append(np.full(layer, heights[c + 1] - heights[c]))
    graph = csr_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))), shape=(total, total))
    return ZSpace(lower, upper, heights, np.flatnonzero(good), graph, top_index)


def z_distance(z: ZSpace, p, q) -> float:
    return float(z.distances([p], [q])[0, 0])


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwifRow:
    j: float
    lam: float
    kappa: float
    delta_hat: float
    H: float
    V: float
    Vp: float
    A: float
    bound: float
    floor: float
    rescale: float
    excess_volume: float
    good_fraction: float
    infeasible: bool

    CSV_COLUMNS = ("j", "lambda", "kappa", "delta_hat", "H", "V", "Vp", "A", "bound")

    def csv_values(self) -> tuple:
        return (self.j, self.lam, self.kappa, self.delta_hat, self.H, self.V, self.Vp, self.A, self.bound)


def lower_rescale(sigma_j: MetricField, sigma_inf: MetricField) -> float:
    """Smallest ``c >= 1`` with ``c * sigma_j >= sigma_inf`` at every vertex."""
    return max(1.0, 1.0 / min_ratio(sigma_j, sigma_inf))


def swif_floor(limit: StaticSpacetime, lam: float, kappa: float) -> float:
    """Bound value left when the sequence equals its limit and the defect vanishes."""
    red = conformal_reduce(limit)
    V, A = hausdorff_overestimates(red)
    vol = volume(red.mesh, red.sigma)
    c1, c2 = area_factor(red.mesh.dim + 1), area_factor(red.mesh.dim + 2)
    return 2 * c1 * (vol / kappa) * red.height + 4 * lam * (c2 * V + c1 * A)


def swif_pipeline(sequence: Sequence[tuple], lam: float, kappa: float, samples) -> list[SwifRow]:
    """Flat-distance bounds along a sequence of slabs.

    ``sequence`` holds ``(j, slab_j, limit_slab)`` with both slabs on the same
    mesh; ``samples(mesh)`` returns the vertices used for distance sampling.
    Each slab is reduced and rescaled by the smallest ``c >= 1`` that puts it
    above the limit; a warning is issued when ``c`` exceeds ``1/(1 - 1/j)``.
    """
    rows = []
    for j, slab, limit in sequence:
        red = conformal_reduce(slab)
        red_inf = conformal_reduce(limit)
        mesh = red.mesh
        c = lower_rescale(red.sigma, red_inf.sigma)
        if c > 1.0 / (1.0 - 1.0 / j) * (1 + 1e-12):
            warnings.warn(f"j={j}: metric must be scaled by {c:.4g} to dominate the limit "
                          f"(more than 1/(1-1/j) = {1.0 / (1.0 - 1.0 / j):.4g})", stacklevel=2)
        sigma_hat = red.sigma.scaled(c)
        hat = StaticSpacetime(red.t0, red.t1, mesh, sigma_hat, red.lapse)
        pts = np.asarray(samples(mesh), dtype=np.int64)
        d_hat = distance_matrix(mesh, sigma_hat, pts)
        d_inf = distance_matrix(mesh, red_inf.sigma, pts)
        gs = good_set(mesh, d_hat, d_inf, lam, kappa, sigma_hat, red_inf.sigma)
        H = 4 * lam + 4 * gs.delta_estimate
        V, A = hausdorff_overestimates(hat)
        vol_inf = volume(mesh, red_inf.sigma)
        vol_hat = volume(mesh, sigma_hat)
        Vp = (vol_inf / kappa + abs(vol_hat - vol_inf)) * red.height
        inp = FlatBoundInputs(mesh.dim, V, Vp, A, H, gs.delta_estimate)
        rows.append(SwifRow(float(j), lam, kappa, gs.delta_estimate, H, V, Vp, A, flat_bound(inp),
                            swif_floor(red_inf, lam, kappa), c, gs.excess_volume * red.height,
                            len(gs.members) / len(pts), gs.infeasible))
    return rows
