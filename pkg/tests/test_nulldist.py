from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nullconv.examples import family_no_control_space, family_time_blowup
from nullconv.geodesic import DistanceMatrix, distance_matrix
from nullconv.manifold import MetricField, conformal_reduce, flat_metric, polar_disk, static_spacetime
from nullconv.nulldist import (Causality, NonCausalSegment, PiecewiseCausalPath, SpacetimePoint, build_grid,
                               causal_relation, null_distance_matrix, null_distance_oracle,
                               null_distance_static, null_length, product_samples, time_levels_for)


def unit_spatial():
    return DistanceMatrix.from_values([[0.0, 1.0], [1.0, 0.0]], np.array([0, 1]))


@pytest.fixture(scope="module")
def flat_grid():
    mesh = polar_disk(0)
    return build_grid(static_spacetime(mesh, t1=2.0), 65)


# -- null length ---------------------------------------------------------------

def test_single_point_has_zero_length():
    assert null_length(PiecewiseCausalPath(((0.3, 4),)), lambda x, y: 1.0) == 0.0


def test_constant_time_path_is_rejected():
    with pytest.raises(NonCausalSegment) as info:
        null_length(PiecewiseCausalPath(((0.0, 0), (0.0, 1))), unit_spatial())
    assert info.value.index == 0


def test_single_null_segment():
    path = PiecewiseCausalPath(((0.0, 0), (1.0, 1)))
    assert null_length(path, unit_spatial()) == 1.0


def test_zigzag_sums_time_changes():
    path = PiecewiseCausalPath(((0.0, 0), (1.0, 1), (0.5, 2)))
    assert null_length(path, lambda x, y: 0.4) == 1.5
    assert path.orientations == (1, -1)


def test_offending_segment_index_is_reported():
    path = PiecewiseCausalPath(((0.0, 0), (1.0, 1), (0.9, 2)))
    with pytest.raises(NonCausalSegment) as info:
        null_length(path, lambda x, y: 0.4)
    assert info.value.index == 1


def test_orientation_flag_must_match():
    path = PiecewiseCausalPath(((0.0, 0), (1.0, 1)), orientations=(-1,))
    with pytest.raises(NonCausalSegment):
        null_length(path, lambda x, y: 0.5)


# -- closed form -----------------------------------------------------------------

def test_static_formula_examples():
    d = unit_spatial()
    p = SpacetimePoint(0.0, 0)
    assert null_distance_static(d, p, p) == 0.0
    assert null_distance_static(d, p, SpacetimePoint(2.0, 1)) == 2.0
    assert null_distance_static(d, p, SpacetimePoint(0.5, 1)) == 1.0


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_static_formula_equals_sum_form(d, t, s):
    spatial = DistanceMatrix.from_values([[0.0, d], [d, 0.0]], np.array([0, 1]))
    value = null_distance_static(spatial, SpacetimePoint(t, 0), SpacetimePoint(s, 1))
    assert value == pytest.approx(d + max(0.0, abs(t - s) - d), rel=1e-15, abs=1e-15)
    if abs(t - s) >= d:
        assert value == abs(t - s)


def test_matrix_matches_pointwise_formula(disk0):
    verts = np.array([0, 5, 17, 40])
    spatial = distance_matrix(disk0, flat_metric(disk0), verts)
    samples = product_samples([0.0, 0.3, 1.0], verts)
    m = null_distance_matrix(spatial, samples)
    for a, (t, x) in enumerate(samples):
        for b, (s, y) in enumerate(samples):
            assert m.values[a, b] == null_distance_static(spatial, SpacetimePoint(t, int(x)), SpacetimePoint(s, int(y)))


def test_product_samples_are_time_major():
    assert product_samples([0.0, 1.0], [3, 4]).tolist() == [[0.0, 3.0], [0.0, 4.0], [1.0, 3.0], [1.0, 4.0]]


# -- oracle ------------------------------------------------------------------------

def test_grid_edges_are_causal(flat_grid):
    coo = flat_grid.graph.tocoo()
    n = flat_grid.mesh.n_vertices
    lengths = {}
    for (a, b), l in zip(flat_grid.mesh.edges, flat_grid.edge_lengths):
        lengths[(a, b)] = lengths[(b, a)] = l
    for r, c, w in zip(coo.row, coo.col, coo.data):
        x, y = r % n, c % n
        dt = abs(c // n - r // n) * flat_grid.dt
        assert w == pytest.approx(dt, rel=1e-12)
        if x != y:
            assert w >= lengths[(x, y)]


def test_temporal_edges_present(flat_grid):
    n = flat_grid.mesh.n_vertices
    g = flat_grid.graph
    for x in (0, 10, n - 1):
        assert g[x, n + x] == pytest.approx(flat_grid.dt)


def test_causal_pair_is_exact(flat_grid):
    centre = int(np.argmin(flat_grid.mesh.radial_coordinate))
    p, q = SpacetimePoint(0.0, centre), SpacetimePoint(2.0, flat_grid.mesh.boundary_vertices[0])
    assert null_distance_oracle(flat_grid, p, q) == 2.0


def test_equal_time_pair_at_unit_distance(flat_grid):
    mesh = flat_grid.mesh
    centre = int(np.argmin(mesh.radial_coordinate))
    b = int(mesh.boundary_vertices[0])
    p, q = SpacetimePoint(1.0, centre), SpacetimePoint(1.0, b)
    d = null_distance_oracle(flat_grid, p, q)
    assert abs(d - 1.0) <= 0.03 + flat_grid.cell


def test_oracle_never_undershoots_formula(flat_grid, rng):
    mesh = flat_grid.mesh
    src = rng.choice(mesh.n_vertices, 4, replace=False)
    spatial = flat_grid.spatial_distances(src)
    levels = flat_grid.time_levels
    for i, x in enumerate(src):
        ta = float(levels[rng.integers(len(levels))])
        ys = rng.choice(mesh.n_vertices, 10)
        tb = levels[rng.integers(len(levels), size=10)]
        oracle = flat_grid.distances([SpacetimePoint(ta, int(x))], [SpacetimePoint(float(t), int(y)) for t, y in zip(tb, ys)])[0]
        formula = np.maximum(spatial[i, ys], np.abs(tb - ta))
        assert np.all(oracle >= formula - 1e-12)


def test_conformal_grids_are_identical():
    j = 10
    lapse_fam, factor_fam = family_time_blowup(j), family_no_control_space(j)
    mesh = lapse_fam.mesh(0)
    g_lapse = build_grid(lapse_fam.spacetime(mesh), 33)
    g_factor = build_grid(factor_fam.spacetime(mesh), 33)
    assert np.array_equal(g_lapse.edge_lengths, g_factor.edge_lengths)
    assert (g_lapse.graph != g_factor.graph).nnz == 0
    pts = [SpacetimePoint(0.0, 0), SpacetimePoint(0.5, 20)]
    targets = [SpacetimePoint(float(t), int(x)) for t in (0.0, 0.25, 1.0) for x in (3, 30, 56)]
    assert np.array_equal(g_lapse.distances(pts, targets), g_factor.distances(pts, targets))


def test_enlarging_the_cone_never_increases_distance(rng):
    mesh = polar_disk(0)
    sigma = MetricField.conformal(1 + mesh.radial_coordinate, flat_metric(mesh))
    wide = build_grid(static_spacetime(mesh, sigma.scaled(0.25)), 33)
    narrow = build_grid(static_spacetime(mesh, sigma), 33)
    src = [SpacetimePoint(float(wide.time_levels[i]), int(x)) for i, x in zip(rng.integers(33, size=5), rng.integers(57, size=5))]
    tgt = [SpacetimePoint(float(wide.time_levels[i]), int(x)) for i, x in zip(rng.integers(33, size=20), rng.integers(57, size=20))]
    assert np.all(wide.distances(src, tgt) <= narrow.distances(src, tgt) + 1e-12)


def test_default_levels_are_dyadic(disk1):
    levels = time_levels_for(static_spacetime(disk1))
    steps = len(levels) - 1
    assert steps & (steps - 1) == 0
    assert levels[0] == 0.0 and levels[-1] == 1.0


def test_grid_cap_raises_memory_error(disk2):
    with pytest.raises(MemoryError):
        build_grid(static_spacetime(disk2), 5000)


def test_slab_shorter_than_mesh_edges_is_rejected(disk0):
    sigma = flat_metric(disk0).scaled(25.0)
    with pytest.raises(ValueError, match="causally separate"):
        build_grid(static_spacetime(disk0, sigma, t1=0.5), 9)


def test_off_level_time_is_rejected(flat_grid):
    with pytest.raises(ValueError):
        flat_grid.node(SpacetimePoint(0.01, 0))


@given(st.integers(0, 2 ** 31 - 1))
def test_oracle_is_a_metric(seed):
    grid = _small_grid()
    rng = np.random.default_rng(seed)
    levels = grid.time_levels
    pts = [SpacetimePoint(float(levels[rng.integers(len(levels))]), int(rng.integers(grid.mesh.n_vertices)))
           for _ in range(6)]
    d = grid.distances(pts, pts)
    assert np.allclose(np.diag(d), 0.0, atol=0)
    assert np.array_equal(d, d.T)
    assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-12)
    off = ~np.eye(len(pts), dtype=bool)
    same = np.array([[a == b for b in pts] for a in pts])
    assert np.all(d[off & ~same] > 0)


_GRID = {}


def _small_grid():
    if "g" not in _GRID:
        mesh = polar_disk(0)
        sigma = MetricField.conformal(1 + mesh.radial_coordinate ** 2, flat_metric(mesh))
        _GRID["g"] = build_grid(static_spacetime(mesh, sigma), 17)
    return _GRID["g"]


# -- causal relation -----------------------------------------------------------------

def test_causal_relation_examples(flat_grid):
    mesh = flat_grid.mesh
    p = SpacetimePoint(0.0, 0)
    assert causal_relation(flat_grid, p, p).kind is Causality.FUTURE
    assert not causal_relation(flat_grid, p, p).marginal
    y = int(mesh.boundary_vertices[0])
    d = float(flat_grid.spatial_distances([0])[0, y])
    assert causal_relation(flat_grid, p, SpacetimePoint(2.0, y)).kind is Causality.FUTURE
    assert causal_relation(flat_grid, SpacetimePoint(2.0, y), p).kind is Causality.PAST
    assert causal_relation(flat_grid, p, SpacetimePoint(0.0, y)).kind is Causality.SPACELIKE
    on_cone = causal_relation(flat_grid, p, SpacetimePoint(d, y), tolerance=1e-9)
    assert on_cone.marginal and on_cone.kind is Causality.FUTURE
