from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nullconv.examples import family_no_control_space, family_spline
from nullconv.manifold import (Lapse, MetricError, MetricField, SpatialMesh, StaticSpacetime, boundary_area,
                               conformal_reduce, flat_metric, lp_tensor_norm, min_ratio, polar_disk,
                               ring_radii, static_spacetime, volume)

# radial quadrature (mpmath, 30 digits) of 2*pi*int f^p r dr for the spline family, lambda = 2
SPLINE_VOLUME = {10: 4.0012007816919675, 100: 3.6774916094305532, 10_000: 3.4417677422538542}
SPLINE_CUBE_INTEGRAL = {10: 10.402563493733191, 10_000: 145627.97295841715}


def test_mesh_rejects_disconnected_graph():
    with pytest.raises(ValueError, match="disconnected"):
        SpatialMesh(np.zeros((4, 2)) + np.arange(4)[:, None], [(0, 1), (2, 3)], [], np.ones(4))


def test_mesh_rejects_bad_weights():
    with pytest.raises(ValueError):
        SpatialMesh([[0.0, 0.0], [1.0, 0.0]], [(0, 1)], [0], [1.0, 0.0])


def test_mesh_is_read_only(disk0):
    with pytest.raises(ValueError):
        disk0.vertices[0, 0] = 5.0


def test_vertex_counts_grow_fourfold():
    counts = [polar_disk(k).n_vertices for k in range(4)]
    assert counts == [57, 241, 1057, 4673]


def test_cell_weights_sum_to_disk_area():
    for level in range(4):
        assert polar_disk(level).cell_weights.sum() == pytest.approx(math.pi, rel=1e-2)


def test_every_band_gets_enough_rings():
    radii = ring_radii(0, (0.85, 0.9))
    for lo, hi in ((0.0, 0.85), (0.85, 0.9), (0.9, 1.0)):
        assert np.count_nonzero((radii > lo) & (radii <= hi)) >= 4


def test_metric_positivity_check():
    bad = MetricField(np.array([[[1.0, 0.0], [0.0, -1.0]]]))
    with pytest.raises(MetricError):
        bad.check_positive()
    with pytest.raises(ValueError):
        Lapse(np.array([1.0, 0.0]))


def test_spacetime_requires_increasing_times(disk0):
    with pytest.raises(ValueError):
        static_spacetime(disk0, t0=1.0, t1=1.0)


def test_reduce_with_unit_lapse_is_identity(disk1):
    st = static_spacetime(disk1, MetricField.conformal(1 + disk1.radial_coordinate, flat_metric(disk1)))
    red = conformal_reduce(st)
    assert np.array_equal(red.sigma.tensors, st.sigma.tensors)
    assert (red.t0, red.t1) == (st.t0, st.t1)


def test_reduce_constant_lapse(disk0):
    st = static_spacetime(disk0, lapse=Lapse(np.full(disk0.n_vertices, 2.0)))
    red = conformal_reduce(st)
    assert np.all(red.sigma.tensors == 0.25 * np.eye(2))
    assert red.is_reduced()


def test_reduce_is_idempotent(disk1):
    lapse = Lapse(1 + disk1.radial_coordinate ** 2)
    once = conformal_reduce(static_spacetime(disk1, lapse=lapse))
    twice = conformal_reduce(once)
    assert np.array_equal(once.sigma.tensors, twice.sigma.tensors)


def test_flat_disk_volume_and_boundary(disk5):
    g = flat_metric(disk5)
    assert volume(disk5, g) == pytest.approx(math.pi, rel=1e-2)
    assert volume(disk5, g.scaled(4.0)) == pytest.approx(4 * math.pi, rel=1e-2)
    assert boundary_area(disk5, g) == pytest.approx(2 * math.pi, rel=1e-2)


def test_boundary_area_is_one_homogeneous(disk2):
    g = flat_metric(disk2)
    assert boundary_area(disk2, g.scaled(9.0)) == pytest.approx(3 * boundary_area(disk2, g), rel=1e-13)


def test_boundary_area_of_collapse_family():
    for j in (2, 10, 50):
        fam = family_no_control_space(j)
        mesh = fam.mesh(1)
        red = conformal_reduce(fam.spacetime(mesh))
        assert boundary_area(mesh, red.sigma) == pytest.approx(2 * math.pi / j, rel=1e-2)


def test_empty_boundary_warns():
    mesh = SpatialMesh([[0.0, 0.0], [1.0, 0.0]], [(0, 1)], [], [0.5, 0.5])
    with pytest.warns(RuntimeWarning):
        assert boundary_area(mesh, flat_metric(mesh)) == 0.0


def test_volume_of_smooth_metric_converges_quadratically():
    # metric (1 + r^2)^2 * identity has area 2*pi*(1/2 + 2/4 + 1/6)
    exact = 2 * math.pi * (0.5 + 0.5 + 1 / 6)
    errors = []
    for level in range(1, 5):
        mesh = polar_disk(level)
        g = MetricField.conformal(1 + mesh.radial_coordinate ** 2, flat_metric(mesh))
        errors.append(abs(volume(mesh, g) - exact))
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    assert all(r > 3.0 for r in ratios), ratios


def test_spline_volume_matches_radial_quadrature():
    for j in (10, 100, 10_000):
        fam = family_spline(j, 2.0)
        assert fam.disk_volume() == pytest.approx(SPLINE_VOLUME[j], rel=1e-8)
        mesh = fam.mesh(2)
        red = conformal_reduce(fam.spacetime(mesh))
        assert volume(mesh, red.sigma) == pytest.approx(SPLINE_VOLUME[j], rel=0.02)


def test_lp_norm_trivial_cases(disk2):
    g = MetricField.conformal(1 + disk2.radial_coordinate, flat_metric(disk2))
    assert lp_tensor_norm(disk2, g, g, 3.0) == pytest.approx(volume(disk2, g), rel=1e-12)
    assert lp_tensor_norm(disk2, g.scaled(4.0), g, 2.0) == pytest.approx(4 * volume(disk2, g), rel=1e-12)
    with pytest.raises(ValueError):
        lp_tensor_norm(disk2, g, g, 0.0)


def test_spline_cube_norm_diverges():
    values = {}
    for j in (10, 10_000):
        fam = family_spline(j, 2.0)
        values[j] = fam.disk_norm_integral(3.0)
        assert values[j] == pytest.approx(SPLINE_CUBE_INTEGRAL[j], rel=1e-8)
    assert values[10_000] / values[10] >= 10


def test_determinant_trace_chain(disk1, rng):
    a = rng.normal(size=(disk1.n_vertices, 2, 2))
    g1 = MetricField(a @ np.swapaxes(a, 1, 2) + 0.1 * np.eye(2))
    g0 = flat_metric(disk1)
    assert volume(disk1, g1) <= lp_tensor_norm(disk1, g1, g0, 2.0) * (1 + 1e-12)


def test_min_ratio_of_scaled_metric(disk0):
    g = flat_metric(disk0)
    assert min_ratio(g.scaled(0.3), g) == pytest.approx(0.3)


@given(st.floats(0.1, 10.0))
def test_volume_scales_with_conformal_constant(c):
    mesh = polar_disk(0)
    g = MetricField.conformal(1 + mesh.radial_coordinate, flat_metric(mesh))
    assert volume(mesh, g.scaled(c * c)) == pytest.approx(c ** 2 * volume(mesh, g), rel=1e-12)


@given(st.lists(st.floats(0.0, 3.0), min_size=3, max_size=3))
def test_volume_and_norm_are_monotone(shift):
    mesh = polar_disk(0)
    base = MetricField.conformal(1 + mesh.radial_coordinate, flat_metric(mesh))
    a, b, c = shift
    bump = np.array([[a + c, c], [c, b + c]])  # positive semidefinite
    bigger = MetricField(base.tensors + bump)
    g0 = flat_metric(mesh)
    assert volume(mesh, base) <= volume(mesh, bigger) * (1 + 1e-12)
    assert lp_tensor_norm(mesh, base, g0, 3.0) <= lp_tensor_norm(mesh, bigger, g0, 3.0) * (1 + 1e-12)


@given(st.floats(0.5, 4.0))
def test_lp_norm_of_self_is_volume(p):
    mesh = polar_disk(0)
    g = MetricField.conformal(2 - mesh.radial_coordinate, flat_metric(mesh))
    assert lp_tensor_norm(mesh, g, g, p) == pytest.approx(volume(mesh, g), rel=1e-12)
