"""Radial example families on the unit disk and their limit spaces.

Profiles are functions of the Euclidean radius ``r``.  Families whose natural
variable is the distance to the boundary ``s = 1 - r`` are rewritten in ``r``.

Limit spaces are finite samples of quotient metric spaces, represented by
:class:`GluedSpace`: a disjoint union of component distance matrices in which
listed point pairs are identified at zero cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.sparse.csgraph import dijkstra, shortest_path

from .geodesic import DisconnectedError, DistanceMatrix, weighted_graph, graph_distances
from .manifold import (Lapse, MetricField, SpatialMesh, StaticSpacetime, flat_metric, polar_disk,
                       ring_vertices)
from .nulldist import null_distance_matrix, product_samples

EXAMPLE_IDS = ("ex31-space-collapse", "ex32-time-blowup", "ex33-bubble", "ex34-spline")


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Piecewise radial function on the unit disk.

    ``branches[i]`` is used on ``(cuts[i-1], cuts[i]]``; the last branch covers
    the outermost piece up to ``r = 1``.  ``role`` says whether the profile
    scales the spatial metric (``"factor"``: metric ``f^2 sigma``) or is a
    lapse (``"lapse"``: metric ``-h^2 dt^2 + sigma``).
    """

    name: str
    j: float
    role: str
    cuts: tuple
    branches: tuple
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ("factor", "lapse"):
            raise ValueError(f"unknown role {self.role!r}")
        if len(self.branches) != len(self.cuts) + 1:
            raise ValueError("need one branch per piece")
        if list(self.cuts) != sorted(self.cuts) or not all(0 < c < 1 for c in self.cuts):
            raise ValueError("cuts must be increasing inside (0, 1)")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        piece = np.searchsorted(np.asarray(self.cuts), r, side="left")
        out = np.empty(r.shape)
        for i, branch in enumerate(self.branches):
            sel = piece == i
            if np.any(sel):
                out[sel] = branch(r[sel])
        return out

    @property
    def breakpoints(self) -> tuple:
        return tuple(self.cuts)

    def continuity_residuals(self) -> np.ndarray:
        """Relative jump between neighbouring branches at each cut."""
        res = []
        for c, left, right in zip(self.cuts, self.branches, self.branches[1:]):
            a = float(left(np.array([c]))[0])
            b = float(right(np.array([c]))[0])
            res.append(abs(a - b) / max(abs(a), abs(b), 1.0))
        return np.array(res)

    def reduced_factor(self, r):
        """Conformal factor of the reduced spatial metric, ``f`` or ``1/h``."""
        v = self(r)
        return v if self.role == "factor" else 1.0 / v

    # -- 1-D quadrature oracles ------------------------------------------------
    def integrate(self, func: Callable[[np.ndarray], np.ndarray], a: float = 0.0, b: float = 1.0) -> float:
        """``int_a^b func(r) dr``, split at the cuts (adaptive quadrature per piece)."""
        knots = [a] + [c for c in self.cuts if a < c < b] + [b]
        total = 0.0
        for lo, hi in zip(knots, knots[1:]):
            val, _ = integrate.quad(lambda x: float(func(np.array([x]))[0]), lo, hi,
                                    limit=200, epsabs=0.0, epsrel=1e-11)
            total += val
        return total

    def radial_length(self, a: float, b: float) -> float:
        return self.integrate(self.reduced_factor, a, b)

    def disk_volume(self) -> float:
        """Area of the unit disk under the reduced metric."""
        return 2 * math.pi * self.integrate(lambda r: self.reduced_factor(r) ** 2 * r)

    def disk_norm_integral(self, p: float) -> float:
        """``int |f^2 sigma|_sigma^(p/2) dvol_sigma = 2 pi int f^p r dr``."""
        return 2 * math.pi * self.integrate(lambda r: self.reduced_factor(r) ** p * r)

    def boundary_circumference(self) -> float:
        return 2 * math.pi * float(self.reduced_factor(np.array([1.0]))[0])

    # -- discretisation ----------------------------------------------------
    def mesh(self, level: int, **kw) -> SpatialMesh:
        return polar_disk(level, self.cuts, **kw)

    def spacetime(self, mesh: SpatialMesh, t0: float = 0.0, t1: float = 1.0) -> StaticSpacetime:
        values = self(mesh.radial_coordinate)
        base = flat_metric(mesh)
        if self.role == "factor":
            return StaticSpacetime(t0, t1, mesh, MetricField.conformal(values, base), Lapse.unit(mesh.n_vertices))
        return StaticSpacetime(t0, t1, mesh, base, Lapse(values))


def _check_j(j):
    if not j >= 2:
        raise ValueError(f"family index must be >= 2, got {j}")


def _collapse_bridge(j: float, inner: float, outer: float) -> Callable:
    """Increasing linear bridge in ``s = 1 - r``: 1/j at ``r = outer``, 1 at ``r = inner``.

    Interpolating between the stored cut radii (rather than forming ``1 - r``)
    avoids cancellation for large j and hits both end values exactly.
    """
    width = outer - inner

    def k(r):
        return 1.0 / j + (1.0 - 1.0 / j) * ((outer - r) / width)
    return k


def family_time_blowup(j: float) -> RadialProfile:
    """Lapse equal to ``j`` near the boundary, 1 inside.

    The bridge is the reciprocal of the linear bridge of
    :func:`family_no_control_space`, so the two families reduce to the same
    spatial metric.
    """
    _check_j(j)
    cuts = (1.0 - 3.0 / (2 * j), 1.0 - 1.0 / j)
    k = _collapse_bridge(j, *cuts)
    branches = (lambda r: np.ones_like(r), lambda r: 1.0 / k(r), lambda r: np.full_like(r, float(j)))
    return RadialProfile("ex32-time-blowup", j, "lapse", cuts, branches)


def family_no_control_space(j: float) -> RadialProfile:
    """Spatial factor ``1/j`` on the boundary band, linear bridge, 1 inside.

    Values are computed as reciprocals of the time-blowup lapse, so the
    reduced metrics of the two families agree bit for bit; they match the
    linear bridge to within one rounding.
    """
    lapse = family_time_blowup(j)
    branches = tuple((lambda b: (lambda r: 1.0 / b(r)))(b) for b in lapse.branches)
    return RadialProfile("ex31-space-collapse", j, "factor", lapse.cuts, branches)


def _clamped_exponential(peak: float, j: float):
    """``max(1, peak * exp(-2 j^2 (r - 1/j)))`` and the radius where it reaches 1."""
    floor_at = 1.0 / j + math.log(peak) / (2 * j * j)
    return (lambda r: peak * np.exp(-2 * j * j * (r - 1.0 / j))), floor_at


def family_bubble(j: float) -> RadialProfile:
    """Factor ``j`` on ``r <= 1/j`` with a fast exponential bridge down to 1."""
    _check_j(j)
    bridge, floor_at = _clamped_exponential(float(j), j)
    cuts = (1.0 / j, floor_at, 3.0 / (2 * j))
    one = lambda r: np.ones_like(r)  # noqa: E731
    branches = (lambda r: np.full_like(r, float(j)), bridge, one, one)
    return RadialProfile("ex33-bubble", j, "factor", cuts, branches)


def family_spline(j: float, lam: float = 2.0) -> RadialProfile:
    """Factor ``1/(r (1 - ln r))`` on ``[j^-lam, 1/j]``, capped inside, bridged to 1."""
    _check_j(j)
    if not lam > 1:
        raise ValueError(f"spline exponent must exceed 1, got {lam}")
    inner = j ** (-lam)
    cap = j ** lam / (1 + lam * math.log(j))
    peak = j / (1 + math.log(j))
    bridge, floor_at = _clamped_exponential(peak, j)
    cuts = (inner, 1.0 / j, floor_at, 3.0 / (2 * j))
    one = lambda r: np.ones_like(r)  # noqa: E731
    branches = (lambda r: np.full_like(r, cap), lambda r: 1.0 / (r * (1.0 - np.log(r))), bridge, one, one)
    return RadialProfile("ex34-spline", j, "factor", cuts, branches, {"lambda": lam})


def make_family(example_id: str, j: float, lam: float = 2.0) -> RadialProfile:
    if example_id == "ex31-space-collapse":
        return family_no_control_space(j)
    if example_id == "ex32-time-blowup":
        return family_time_blowup(j)
    if example_id == "ex33-bubble":
        return family_bubble(j)
    if example_id == "ex34-spline":
        return family_spline(j, lam)
    raise KeyError(f"unknown example id {example_id!r}; known: {', '.join(EXAMPLE_IDS)}")


# ---------------------------------------------------------------------------
# quotient spaces
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass(frozen=True, eq=False)
class GluedSpace:
    """Disjoint union of finite metric spaces with identified point pairs.

    Points are addressed as ``(component, local index)``.  The quotient
    distance is the infimum over chains that alternate between moves inside a
    component and free jumps across identified pairs.
    """

    components: tuple
    identifications: tuple = ()
    names: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        ids = tuple(((int(a[0]), int(a[1])), (int(b[0]), int(b[1]))) for a, b in self.identifications)
        for pair in ids:
            for c, i in pair:
                if not (0 <= c < len(self.components) and 0 <= i < len(self.components[c])):
                    raise IndexError(f"identified point {(c, i)} does not exist")
        object.__setattr__(self, "identifications", ids)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([len(c) for c in self.components])]).astype(np.int64)

    def index(self, p) -> int:
        c, i = p
        return int(self.offsets[c] + i)

    def matrix(self) -> DistanceMatrix:
        """Quotient distances between all points (cached)."""
        if "matrix" not in self._cache:
            self._cache["matrix"] = self._compute()
        return self._cache["matrix"]

    def _compute(self) -> DistanceMatrix:
        offsets = self.offsets
        n = int(offsets[-1])
        comp_of = np.repeat(np.arange(len(self.components)), np.diff(offsets))
        direct = np.full((n, n), np.inf)
        for c, dm in enumerate(self.components):
            s = slice(offsets[c], offsets[c + 1])
            direct[s, s] = dm.values
        labels = np.array([(c, i) for c, dm in enumerate(self.components) for i in range(len(dm))],
                          dtype=np.int64).reshape(-1, 2)
        if not self.identifications:
            out = direct
        else:
            uf = _UnionFind(n)
            portals = set()
            for a, b in self.identifications:
                ga, gb = self.index(a), self.index(b)
                uf.union(ga, gb)
                portals.update((ga, gb))
            portals = np.array(sorted(portals), dtype=np.int64)
            roots = np.array([uf.find(p) for p in portals])
            _, cls = np.unique(roots, return_inverse=True)
            n_cls = int(cls.max()) + 1
            # entry cost from every point to every class, staying inside its component
            entry = np.full((n, n_cls), np.inf)
            for k in range(n_cls):
                members = portals[cls == k]
                entry[:, k] = direct[:, members].min(axis=1)
            # class-to-class hops inside single components, closed under composition
            hop = np.full((n_cls, n_cls), np.inf)
            for k in range(n_cls):
                members = portals[cls == k]
                hop[k] = entry[members].min(axis=0)
            np.fill_diagonal(hop, 0.0)
            closure = shortest_path(hop, method="FW", directed=False)
            reach = _min_plus(entry, closure)
            out = np.minimum(direct, _min_plus(reach, entry.T))
        if not np.all(np.isfinite(out)):
            raise DisconnectedError("glued space is disconnected")
        out = np.minimum(out, out.T)
        np.fill_diagonal(out, 0.0)
        return DistanceMatrix(labels, out)


def _min_plus(a: np.ndarray, b: np.ndarray, budget: int = 4_000_000) -> np.ndarray:
    """``out[i, j] = min_k a[i, k] + b[k, j]``, in row blocks of bounded size."""
    out = np.empty((a.shape[0], b.shape[1]))
    chunk = max(1, budget // max(1, b.size))
    for lo in range(0, a.shape[0], chunk):
        blk = a[lo:lo + chunk]
        out[lo:lo + chunk] = np.min(blk[:, :, None] + b[None, :, :], axis=1)
    return out


def glued_distance(space: GluedSpace, p, q) -> float:
    m = space.matrix()
    return float(m.values[space.index(p), space.index(q)])


# ---------------------------------------------------------------------------
# limit spaces
# ---------------------------------------------------------------------------

def spacetime_points(times, vertices) -> np.ndarray:
    return product_samples(times, vertices)


def _null_component(mesh: SpatialMesh, metric: MetricField, samples: np.ndarray, graph=None) -> DistanceMatrix:
    verts = np.unique(samples[:, 1].astype(np.int64))
    if graph is None:
        rows = graph_distances(mesh, metric, verts)
    else:
        rows = dijkstra(graph, directed=False, indices=verts)
    spatial = DistanceMatrix.from_values(rows[:, verts], verts)
    return null_distance_matrix(spatial, samples)


def _time_index(samples: np.ndarray) -> dict:
    return {(float(t), int(x)): i for i, (t, x) in enumerate(samples)}


def collapse_limit(mesh: SpatialMesh, times: Sequence[float], vertices: Sequence[int],
                   portal_times: Sequence[float]) -> GluedSpace:
    """Flat slab with every boundary circle ``{t} x boundary`` collapsed to a point.

    ``vertices`` are the sampled spatial vertices; the boundary ring is added
    at ``portal_times`` so that chains through the collapsed boundary can
    pick their crossing time from a finer set.
    """
    boundary = mesh.boundary_vertices
    samples = np.vstack([spacetime_points(times, vertices), spacetime_points(portal_times, boundary)])
    samples = np.unique(samples, axis=0)
    comp = _null_component(mesh, flat_metric(mesh), samples)
    index = _time_index(samples)
    ids = []
    for t in portal_times:
        first = index[(float(t), int(boundary[0]))]
        ids.extend(((0, first), (0, index[(float(t), int(b))])) for b in boundary[1:])
    return GluedSpace((comp,), tuple(ids), ("slab",))


def bubble_limit(mesh: SpatialMesh, core_radius: float, times: Sequence[float], outer_vertices: Sequence[int],
                 core_vertices: Sequence[int], portal_times: Sequence[float]) -> GluedSpace:
    """Two flat slabs: a unit bubble whose boundary circles collapse onto the other's time axis.

    The bubble component is the part of ``mesh`` with ``r <= core_radius``
    rescaled to unit size; the outer component is the whole flat mesh.  At
    each portal time the bubble's boundary ring is identified with the outer
    centre vertex.
    """
    r = mesh.radial_coordinate
    core = np.flatnonzero(r <= core_radius * (1 + 1e-12))
    ring = ring_vertices(mesh, core_radius)
    centre = int(np.argmin(r))

    outer_samples = np.unique(np.vstack([spacetime_points(times, outer_vertices),
                                         spacetime_points(portal_times, [centre])]), axis=0)
    outer = _null_component(mesh, flat_metric(mesh), outer_samples)

    full = weighted_graph(mesh, flat_metric(mesh).scaled(1.0 / core_radius ** 2))
    sub = full[core][:, core]
    local = {int(v): i for i, v in enumerate(core)}
    core_samples = np.unique(np.vstack([spacetime_points(times, core_vertices),
                                        spacetime_points(portal_times, ring)]), axis=0)
    local_samples = core_samples.copy()
    local_samples[:, 1] = [local[int(x)] for x in core_samples[:, 1]]
    bubble = _null_component(mesh, flat_metric(mesh), local_samples, graph=sub)
    bubble = DistanceMatrix(core_samples, bubble.values)

    oi, bi = _time_index(outer_samples), _time_index(core_samples)
    ids = []
    for t in portal_times:
        c = oi[(float(t), centre)]
        ids.extend(((0, c), (1, bi[(float(t), int(v))])) for v in ring)
    return GluedSpace((outer, bubble), tuple(ids), ("outer", "bubble"))


def taxi_matrix(points: np.ndarray, factor: float) -> DistanceMatrix:
    """``|s1 - s2| + factor * |r1 - r2|`` on rows ``(s, r)``."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    d = np.abs(points[:, 0][:, None] - points[:, 0][None, :]) + factor * np.abs(points[:, 1][:, None] - points[:, 1][None, :])
    return DistanceMatrix(points, d)


def spline_limit(mesh: SpatialMesh, times: Sequence[float], vertices: Sequence[int], depths: Sequence[float],
                 factor: float) -> GluedSpace:
    """Flat slab with a taxi square whose ``r = 1`` side is attached to the time axis.

    The square is sampled at ``times x depths``; ``depths`` must include 1.
    """
    if not any(math.isclose(d, 1.0) for d in depths):
        raise ValueError("square samples must include the attached side r = 1")
    centre = int(np.argmin(mesh.radial_coordinate))
    samples = np.unique(np.vstack([spacetime_points(times, vertices), spacetime_points(times, [centre])]), axis=0)
    slab = _null_component(mesh, flat_metric(mesh), samples)
    square_pts = np.array([(t, d) for t in times for d in depths], dtype=float)
    square = taxi_matrix(square_pts, factor)
    si = _time_index(samples)
    ids = []
    for k, (s, d) in enumerate(square_pts):
        if math.isclose(d, 1.0):
            ids.append(((0, si[(float(s), centre)]), (1, k)))
    return GluedSpace((slab, square), tuple(ids), ("slab", "square"))


def build_limit_space(example_id: str, *, mesh: SpatialMesh | None = None, level: int = 1,
                      times: Sequence[float] = (0.0, 0.5, 1.0), vertices: Sequence[int] | None = None,
                      portal_times: Sequence[float] | None = None, core_radius: float = 0.5,
                      lam: float = 2.0, taxi_factor: float | None = None,
                      depths: Sequence[float] = (0.0, 0.5, 1.0)) -> GluedSpace:
    """Sampled limit space of an example family.

    * collapse examples: flat slab with boundary circles collapsed per time;
    * bubble: unit bubble glued along its boundary circles to the outer axis;
    * spline: flat slab plus a taxi square attached to the axis, with radial
      factor ``taxi_factor`` (defaults to ``lam``).
    """
    if example_id not in EXAMPLE_IDS:
        raise KeyError(f"unknown example id {example_id!r}; known: {', '.join(EXAMPLE_IDS)}")
    if mesh is None:
        mesh = polar_disk(level, (core_radius,) if example_id == "ex33-bubble" else ())
    if vertices is None:
        vertices = np.arange(mesh.n_vertices)
    portal_times = times if portal_times is None else portal_times
    if example_id in ("ex31-space-collapse", "ex32-time-blowup"):
        return collapse_limit(mesh, times, vertices, portal_times)
    if example_id == "ex33-bubble":
        r = mesh.radial_coordinate
        vertices = np.asarray(vertices)
        inside = r[vertices] <= core_radius * (1 + 1e-12)
        return bubble_limit(mesh, core_radius, times, vertices, vertices[inside], portal_times)
    return spline_limit(mesh, times, vertices, depths, lam if taxi_factor is None else taxi_factor)
