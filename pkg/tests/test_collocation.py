"""Sampling: Latin hypercube stratification, facets, determinism."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porepinn.collocation import (Facet, PointCounts, PointSet,
                                  boundary_points, case_point_sets,
                                  domain_facets, export_points_csv,
                                  lhs_interior)

BOUNDS_2D = ((0.0, 1.0), (0.0, 0.2))
BOUNDS_3D = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))


@given(n=st.integers(1, 200), seed=st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_lhs_one_point_per_stratum(n, seed):
    ps = lhs_interior(n, BOUNDS_2D, seed)
    assert ps.n == n and ps.dim == 2
    for d, (lo, hi) in enumerate(BOUNDS_2D):
        strata = np.floor((ps.coordinates[:, d] - lo) / (hi - lo) * n).astype(int)
        assert sorted(strata) == list(range(n))


def test_lhs_stays_inside_open_box():
    ps = lhs_interior(500, BOUNDS_2D, 3)
    for d, (lo, hi) in enumerate(BOUNDS_2D):
        assert np.all(ps.coordinates[:, d] > lo)
        assert np.all(ps.coordinates[:, d] < hi)


def test_lhs_seeded_bitwise():
    a = lhs_interior(64, BOUNDS_2D, 42)
    b = lhs_interior(64, BOUNDS_2D, 42)
    c = lhs_interior(64, BOUNDS_2D, 43)
    assert np.array_equal(a.coordinates, b.coordinates)
    assert not np.array_equal(a.coordinates, c.coordinates)


def test_lhs_midpoint_mode():
    n = 10
    ps = lhs_interior(n, ((0.0, 1.0),), 0, midpoint=True)
    want = np.sort((np.arange(n) + 0.5) / n)
    assert np.allclose(np.sort(ps.coordinates[:, 0]), want, rtol=0, atol=1e-15)


def test_point_sets_are_frozen():
    ps = lhs_interior(5, BOUNDS_2D, 0)
    with pytest.raises(ValueError):
        ps.coordinates[0, 0] = 99.0


def test_role_validation():
    with pytest.raises(ValueError):
        PointSet("corner", np.zeros((1, 2)), 0)
    with pytest.raises(ValueError):
        lhs_interior(0, BOUNDS_2D, 0)


def test_boundary_points_pin_the_facet_axis():
    facet = Facet("inlet", "inlet", 1, 0.0, BOUNDS_2D)
    ps = boundary_points(facet, 40, 7)
    assert ps.role == "inlet" and ps.facet == "inlet"
    assert np.all(ps.coordinates[:, 1] == 0.0)
    # the free axis is stratified like the interior sampler
    strata = np.floor(ps.coordinates[:, 0] * 40).astype(int)
    assert sorted(strata) == list(range(40))
    with pytest.raises(ValueError):
        boundary_points(facet, 0, 7)


def test_facet_validation():
    with pytest.raises(ValueError):
        Facet("interior", "inlet", 1, 0.0, BOUNDS_2D)
    with pytest.raises(ValueError):
        Facet("inlet", "inlet", 2, 0.0, BOUNDS_2D)


def test_domain_facets_2d():
    facets = domain_facets(BOUNDS_2D)
    assert [f.name for f in facets] == ["inlet", "outlet", "wall_x0", "wall_x1"]
    inlet, outlet, w0, w1 = facets
    assert (inlet.axis, inlet.value) == (1, 0.0)
    assert (outlet.axis, outlet.value) == (1, 0.2)
    assert (w0.axis, w0.value) == (0, 0.0)
    assert (w1.axis, w1.value) == (0, 1.0)


def test_domain_facets_3d():
    names = [f.name for f in domain_facets(BOUNDS_3D)]
    assert names == ["inlet", "outlet", "wall_x0", "wall_x1", "wall_z0", "wall_z1"]
    with pytest.raises(ValueError):
        domain_facets(((0.0, 1.0),))


def test_case_point_sets_layout_and_determinism():
    counts = PointCounts(interior=50, inlet=10, outlet=12, wall=8)
    sets = case_point_sets(BOUNDS_2D, counts, 5)
    assert set(sets) == {"interior", "inlet", "outlet", "wall_x0", "wall_x1"}
    assert sets["interior"].n == 50
    assert sets["inlet"].n == 10 and sets["outlet"].n == 12
    assert sets["wall_x0"].n == sets["wall_x1"].n == 8
    # sub-seeded sets never collide even with equal sizes
    assert not np.array_equal(sets["wall_x0"].coordinates[:, 1],
                              sets["wall_x1"].coordinates[:, 1])
    again = case_point_sets(BOUNDS_2D, counts, 5)
    for name in sets:
        assert np.array_equal(sets[name].coordinates, again[name].coordinates)


def test_case_point_sets_per_facet_wall_counts():
    counts = PointCounts(interior=20, inlet=5, outlet=5,
                         wall={"wall_x0": 4, "wall_x1": 9})
    sets = case_point_sets(BOUNDS_2D, counts, 1)
    assert sets["wall_x0"].n == 4 and sets["wall_x1"].n == 9


def test_case_point_sets_3d():
    counts = PointCounts(interior=30, inlet=6, outlet=6, wall=5)
    sets = case_point_sets(BOUNDS_3D, counts, 9)
    assert len(sets) == 7
    assert all(ps.dim == 3 for ps in sets.values())
    assert np.all(sets["wall_z1"].coordinates[:, 2] == 1.0)


def test_export_points_csv(tmp_path):
    counts = PointCounts(interior=4, inlet=2, outlet=2, wall=1)
    sets = case_point_sets(BOUNDS_2D, counts, 2)
    path = tmp_path / "points.csv"
    export_points_csv(sets, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["role", "x", "y"]
    assert len(rows) == 1 + 4 + 2 + 2 + 1 + 1
    # repr round trip is exact
    interior_rows = [r for r in rows[1:] if r[0] == "interior"]
    got = np.array([[float(r[1]), float(r[2])] for r in interior_rows])
    assert np.array_equal(got, sets["interior"].coordinates)


def test_export_rejects_empty_and_mixed():
    with pytest.raises(ValueError):
        export_points_csv([], "unused.csv")
    two = lhs_interior(3, BOUNDS_2D, 0)
    three = lhs_interior(3, BOUNDS_3D, 0)
    with pytest.raises(ValueError):
        export_points_csv([two, three], "unused.csv")
