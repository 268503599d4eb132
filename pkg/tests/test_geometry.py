import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from smallscat.geometry import (BUILTIN_SHAPES, Ball, Box, DensityField, Domain, GeometryError,
                                ShapeAssignment, min_cos_pairs, n_cells_for, partition_domain,
                                place_obstacles, validate_set)


def test_domain_rejects_inverted_box():
    with pytest.raises(GeometryError):
        Domain((0, 0, 0), (1, -1, 1))


def test_n_cells_robust_to_rounding():
    assert n_cells_for(0.1) == 10
    assert n_cells_for(0.01) == 100
    assert n_cells_for(1 / 3) == 3


@pytest.mark.parametrize("a", [0.04, 0.02, 0.01, 0.005])
def test_constant_density_cells_tile_the_cube(a):
    g = partition_domain(Domain(), a, DensityField.constant(0.0))
    assert g.n_cells == round(1 / a)
    np.testing.assert_allclose(g.volumes, a, rtol=1e-12)
    assert g.volumes.sum() == pytest.approx(1.0)
    assert g.n_obstacles == g.n_cells


def test_fractional_density_shrinks_cells():
    g = partition_domain(Domain(), 0.125, DensityField.constant(1.5))
    assert g.n_cells == 8
    np.testing.assert_array_equal(g.counts, 2)
    np.testing.assert_allclose(g.volumes, 0.125 * 2 / 2.5, rtol=1e-12)


def test_piecewise_density_counts():
    K = DensityField.piecewise([(Box((0, 0, 0), (1, 1, 0.5)), 0.0),
                                (Box((0, 0, 0.5), (1, 1, 1)), 2.0)])
    g = partition_domain(Domain(), 0.1, K)
    assert sorted(g.counts.tolist()) == [1] * 5 + [3] * 5
    np.testing.assert_allclose(g.volumes, 0.1, rtol=1e-12)


def test_negative_density_reported():
    with pytest.raises(GeometryError, match="negative"):
        partition_domain(Domain(), 0.1, DensityField.expression("x - 0.5"))


def test_uncovered_piecewise_density_reported():
    K = DensityField.piecewise([(Box((0, 0, 0), (1, 1, 0.5)), 0.0)])
    with pytest.raises(GeometryError, match="cover"):
        partition_domain(Domain(), 0.1, K)


def test_overlapping_regions_reported():
    K = DensityField.piecewise([(Box((0, 0, 0), (1, 1, 0.6)), 0.0),
                                (Box((0, 0, 0.4), (1, 1, 1)), 1.0)])
    with pytest.raises(GeometryError, match="overlap"):
        partition_domain(Domain(), 0.1, K)


def test_too_dense_reported_with_cell_index():
    with pytest.raises(GeometryError) as info:
        place_obstacles(partition_domain(Domain(), 0.1, DensityField.constant(40.0)), 0.1, 1 / 3)
    assert info.value.index is not None


def test_t_out_of_range():
    g = partition_domain(Domain(), 0.04, DensityField.constant(0.0))
    with pytest.raises(GeometryError):
        place_obstacles(g, 0.04, 0.5)


@pytest.mark.parametrize("a", [0.04, 0.02, 0.01, 0.005])
def test_placement_separation_and_containment(a):
    g = partition_domain(Domain(), a, DensityField.constant(0.0))
    s = place_obstacles(g, a, 1 / 3, seed=7)
    assert s.M == g.n_cells
    assert s.d >= 0.5 * a ** (1 / 3)
    assert s.d == pytest.approx(pdist(s.centers).min() - a)
    lo, hi = g.lower[s.cell_index], g.upper[s.cell_index]
    assert ((s.centers - a / 2 >= lo) & (s.centers + a / 2 <= hi)).all()
    rep = validate_set(s, kappa=0.8)
    assert rep.ok and rep.cos_ok


def test_placement_is_seeded():
    g = partition_domain(Domain(), 0.02, DensityField.constant(0.0))
    a = place_obstacles(g, 0.02, 1 / 3, seed=3)
    b = place_obstacles(g, 0.02, 1 / 3, seed=3)
    c = place_obstacles(g, 0.02, 1 / 3, seed=4)
    np.testing.assert_array_equal(a.centers, b.centers)
    assert not np.array_equal(a.centers, c.centers)


@given(seed=st.integers(0, 10_000), k=st.floats(0.0, 0.5),
       a=st.sampled_from([0.04, 0.02, 0.01]))
@settings(max_examples=30, deadline=None)
def test_placement_property_separation(seed, k, a):
    g = partition_domain(Domain(), a, DensityField.constant(k))
    try:
        s = place_obstacles(g, a, 1 / 3, seed=seed)
    except GeometryError as exc:
        # only a named cell that is too small may refuse
        assert exc.index is not None and "infeasible" in str(exc)
        return
    assert s.M == g.n_obstacles
    assert s.d >= 0.5 * a ** (1 / 3) * (1 - 1e-12)


def test_two_per_cell_needs_smaller_separation():
    g = partition_domain(Domain(), 0.02, DensityField.constant(1.0))
    with pytest.raises(GeometryError, match="infeasible"):
        place_obstacles(g, 0.02, 1 / 3)
    s = place_obstacles(g, 0.02, 1 / 3, sep_factor=0.3)
    assert s.M == 100 and s.d >= 0.3 * 0.02 ** (1 / 3)


def test_shape_assignment_by_region():
    shapes = ShapeAssignment("sphere", ((Box((0, 0, 0), (1, 1, 0.5)), "cube"),))
    g = partition_domain(Domain(), 0.04, DensityField.constant(0.0))
    s = place_obstacles(g, 0.04, 1 / 3, shapes, seed=1)
    lower = g.centers[s.cell_index][:, 2] < 0.5
    assert all(sid == "cube" for sid, lo in zip(s.shape_ids, lower) if lo)
    np.testing.assert_allclose(s.cbar[lower], BUILTIN_SHAPES["cube"].cbar)
    np.testing.assert_allclose(s.cbar[~lower], 2 * math.pi)


def test_unknown_shape_rejected():
    g = partition_domain(Domain(), 0.04, DensityField.constant(0.0))
    with pytest.raises(GeometryError):
        place_obstacles(g, 0.04, 1 / 3, ShapeAssignment("torus"))


def test_validation_flags_overlap_and_flatness():
    g = partition_domain(Domain(), 0.04, DensityField.constant(0.0))
    s = place_obstacles(g, 0.04, 1 / 3, seed=1)
    from dataclasses import replace
    bad = replace(s, centers=np.vstack([s.centers[:-1], s.centers[0] + 0.01]),
                  tm=np.full(s.M, 0.05))
    rep = validate_set(bad, 0.8)
    assert not rep.overlap_ok and rep.overlap_pair == (0, s.M - 1)
    assert not rep.nonflat_ok and not rep.ok


def test_min_cos():
    z = np.array([[0, 0, 0], [2.0, 0, 0]])
    assert min_cos_pairs(z, 1.0) == pytest.approx(math.cos(2.0))
    assert min_cos_pairs(z[:1], 1.0) == 1.0


def test_density_expression_and_ball():
    K = DensityField.expression("sqrt(abs(x))", holder_exponent=0.5)
    np.testing.assert_allclose(K([[0.25, 0, 0], [1, 1, 1]]), [0.5, 1.0])
    assert Ball((0, 0, 0), 1.0).contains([[0.5, 0.5, 0.5], [1, 1, 0]]).tolist() == [True, False]
    with pytest.raises(GeometryError):
        DensityField.expression("x", holder_exponent=2.0)


def test_builtin_reference_bodies():
    assert BUILTIN_SHAPES["sphere"].cbar == pytest.approx(2 * math.pi)
    # diameter-one cube has side 1/sqrt(3)
    assert BUILTIN_SHAPES["cube"].tm == pytest.approx(1 / math.sqrt(3))
