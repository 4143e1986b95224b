"""Comparing distance matrices: uniform and GH bounds, Hölder fits, good sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.stats import qmc

from .geodesic import DistanceMatrix, weighted_graph
from .manifold import MetricField, SpatialMesh

DELTA_SCHEDULE = (0.0, 0.125, 0.25, 0.5, 1.0)  # multiples of lambda tried for the defect estimate


def _same_points(d1: DistanceMatrix, d2: DistanceMatrix):
    if len(d1) != len(d2) or not np.array_equal(np.asarray(d1.points), np.asarray(d2.points)):
        raise ValueError("distance matrices are defined on different point sets")


def low_discrepancy_pairs(n: int, max_pairs: int = 2000, seed: int = 0) -> np.ndarray:
    """Index pairs ``i < j`` covering ``n`` points: all of them, or a Sobol subsample."""
    iu, ju = np.triu_indices(n, k=1)
    if len(iu) <= max_pairs:
        return np.column_stack([iu, ju])
    sob = qmc.Sobol(d=2, scramble=True, seed=seed)
    chosen: set = set()
    while len(chosen) < max_pairs:
        u = sob.random(256)
        a = np.minimum((u[:, 0] * n).astype(np.int64), n - 1)
        b = np.minimum((u[:, 1] * n).astype(np.int64), n - 1)
        for x, y in zip(a, b):
            if x != y and len(chosen) < max_pairs:
                chosen.add((min(x, y), max(x, y)))
    return np.array(sorted(chosen), dtype=np.int64)


def uniform_distance(d1: DistanceMatrix, d2: DistanceMatrix, pairs: np.ndarray | None = None) -> float:
    """``max |d1 - d2|`` over all pairs, or over the given index pairs."""
    _same_points(d1, d2)
    if len(d1) == 0:
        return 0.0
    if pairs is None:
        return float(np.max(np.abs(d1.values - d2.values)))
    pairs = np.asarray(pairs)
    if len(pairs) == 0:
        return 0.0
    return float(np.max(np.abs(d1.values[pairs[:, 0], pairs[:, 1]] - d2.values[pairs[:, 0], pairs[:, 1]])))


def gh_upper_from_uniform(d1: DistanceMatrix, d2: DistanceMatrix, pairs=None) -> float:
    return 0.5 * uniform_distance(d1, d2, pairs)


def covering_radius(target: DistanceMatrix, image) -> float:
    """Largest distance from a target point to the nearest image point."""
    image = np.unique(np.asarray(image, dtype=np.int64))
    return float(target.values[:, image].min(axis=1).max())


def gh_upper_via_map(source: DistanceMatrix, target: DistanceMatrix, mapping) -> float:
    """Half the distortion of the correspondence generated by ``mapping``.

    ``mapping[a]`` is the target index of source point ``a``.  Target points
    outside the image are paired with a source point whose image is nearest,
    and the distortion is taken over the completed correspondence, which
    keeps the result a valid upper bound on the GH distance.
    """
    mapping = np.asarray(mapping, dtype=np.int64)
    if mapping.size == 0:
        raise ValueError("empty map")
    if len(mapping) != len(source):
        raise ValueError("map must assign a target to every source point")
    first_preimage = {}
    for a, y in enumerate(mapping):
        first_preimage.setdefault(int(y), a)
    image = np.array(sorted(first_preimage), dtype=np.int64)
    src, tgt = list(range(len(source))), list(mapping)
    missing = np.setdiff1d(np.arange(len(target)), image)
    if len(missing):
        nearest = image[np.argmin(target.values[np.ix_(missing, image)], axis=1)]
        src.extend(first_preimage[int(y)] for y in nearest)
        tgt.extend(missing.tolist())
    src, tgt = np.asarray(src), np.asarray(tgt)
    ds = source.values[np.ix_(src, src)]
    dt = target.values[np.ix_(tgt, tgt)]
    return 0.5 * float(np.max(np.abs(ds - dt)))


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    constant: float
    worst_pair: tuple
    unbounded: bool = False


def holder_fit(d0: DistanceMatrix, d1: DistanceMatrix, alpha: float) -> HolderFit:
    """Smallest ``C`` with ``d1 <= C * d0**alpha`` on every off-diagonal pair."""
    _same_points(d0, d1)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    n = len(d0)
    if n < 2:
        raise ValueError("need at least two points")
    iu, ju = np.triu_indices(n, k=1)
    base = d0.values[iu, ju]
    top = d1.values[iu, ju]
    if np.all(base == 0):
        raise ValueError("reference distances vanish off the diagonal")
    bad = (base == 0) & (top > 0)
    if np.any(bad):
        k = int(np.argmax(bad))
        return HolderFit(alpha, math.inf, (int(iu[k]), int(ju[k])), True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(base > 0, top / base ** alpha, 0.0)
    k = int(np.argmax(ratio))
    return HolderFit(alpha, float(ratio[k]), (int(iu[k]), int(ju[k])))


@dataclass(frozen=True)
class LowerBoundReport:
    value: float
    margin: float
    ok: bool
    worst_pair: tuple


def lower_bound_check(d_j: DistanceMatrix, d_inf: DistanceMatrix, margin: float) -> LowerBoundReport:
    """Largest amount by which ``d_j`` undershoots ``d_inf``, compared with ``margin``."""
    _same_points(d_j, d_inf)
    gap = np.maximum(d_inf.values - d_j.values, 0.0)
    k = int(np.argmax(gap))
    value = float(gap.flat[k])
    return LowerBoundReport(value, margin, value <= margin, tuple(int(i) for i in np.unravel_index(k, gap.shape)))


def scaling_margin(j: float, diam: float) -> float:
    """Undershoot allowed when the reduced metric is ``(1 - 1/j)`` times the limit."""
    return (1.0 - math.sqrt(1.0 - 1.0 / j)) * diam


# ---------------------------------------------------------------------------
# good sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GoodSet:
    members: np.ndarray
    lam: float
    kappa: float
    delta_estimate: float
    excess_volume: float
    target_volume: float
    deviation: float
    infeasible: bool = False

    @property
    def threshold(self) -> float:
        return 2 * self.lam + 2 * self.delta_estimate


def cell_volumes(mesh: SpatialMesh, metric: MetricField) -> np.ndarray:
    return metric.sqrt_det() * mesh.cell_weights


def sample_cells(mesh: SpatialMesh, metric: MetricField, samples) -> np.ndarray:
    """For every mesh vertex, the position in ``samples`` of the nearest sample."""
    samples = np.asarray(samples, dtype=np.int64)
    _, _, owner = dijkstra(weighted_graph(mesh, metric), directed=False, indices=samples,
                           min_only=True, return_predecessors=True)
    pos = {int(s): i for i, s in enumerate(samples)}
    return np.array([pos[int(o)] for o in owner])


def _greedy_removal(violating: np.ndarray) -> np.ndarray:
    """Drop points with the most violations until none remain; returns kept mask."""
    keep = np.ones(len(violating), dtype=bool)
    counts = violating.sum(axis=1).astype(np.int64)
    while True:
        live = np.where(keep, counts, -1)
        k = int(np.argmax(live))
        if live[k] <= 0:
            return keep
        keep[k] = False
        counts -= violating[:, k]
        counts[k] = 0


def good_set(mesh: SpatialMesh, d_j: DistanceMatrix, d_inf: DistanceMatrix, lam: float, kappa: float,
             metric_j: MetricField, metric_inf: MetricField | None = None) -> GoodSet:
    """Sample subset on which ``d_j`` and ``d_inf`` differ by less than ``2 lam + 2 delta``.

    Points of the matrices are mesh vertices.  Each sample stands for the mesh
    cells closest to it in the limit metric; the volume of removed samples is
    measured under ``metric_j`` and must not exceed
    ``Vol_inf / kappa + |Vol_j - Vol_inf|``.  ``delta`` is the first entry of
    :data:`DELTA_SCHEDULE` (times ``lam``) for which greedy removal meets that
    target.
    """
    _same_points(d_j, d_inf)
    if not lam > 0 or not kappa > 1:
        raise ValueError("need lam > 0 and kappa > 1")
    metric_inf = metric_j if metric_inf is None else metric_inf
    samples = np.asarray(d_j.points, dtype=np.int64)
    vol_j = cell_volumes(mesh, metric_j)
    vol_inf = cell_volumes(mesh, metric_inf)
    owner = sample_cells(mesh, metric_inf, samples)
    per_sample = np.bincount(owner, weights=vol_j, minlength=len(samples))
    target = vol_inf.sum() / kappa + abs(vol_j.sum() - vol_inf.sum())
    diff = np.abs(d_j.values - d_inf.values)
    best = None
    for step in DELTA_SCHEDULE:
        delta = step * lam
        keep = _greedy_removal(diff >= 2 * lam + 2 * delta)
        excess = float(per_sample[~keep].sum())
        dev = float(diff[np.ix_(keep, keep)].max()) if keep.any() else 0.0
        best = GoodSet(np.flatnonzero(keep), lam, kappa, delta, excess, float(target), dev)
        if excess <= target:
            return best
    return GoodSet(best.members, lam, kappa, best.delta_estimate, best.excess_volume, best.target_volume,
                   best.deviation, infeasible=True)


# ---------------------------------------------------------------------------
# pointwise convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseReport:
    fraction: float
    eps: float
    n_pairs: int
    converged: np.ndarray


def pointwise_report(sequence: Sequence[DistanceMatrix], d_inf: DistanceMatrix, pairs=None,
                     eps: float = 0.05) -> PointwiseReport:
    """Share of pairs within ``eps`` of the limit for the last matrix of the sequence."""
    if not sequence:
        raise ValueError("empty sequence")
    last = sequence[-1]
    _same_points(last, d_inf)
    if pairs is None:
        pairs = low_discrepancy_pairs(len(last))
    pairs = np.asarray(pairs)
    gap = np.abs(last.values[pairs[:, 0], pairs[:, 1]] - d_inf.values[pairs[:, 0], pairs[:, 1]])
    ok = gap < eps
    return PointwiseReport(float(ok.mean()) if len(ok) else 1.0, eps, len(pairs), ok)
