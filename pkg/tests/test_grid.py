import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shopgrid.errors import InputError
from shopgrid.grid import GeoPoint, RegionGrid, center_distance, neighbors, region_of


def planar(n_rows, n_cols, cell=1.0):
    return RegionGrid(mode="planar", origin=GeoPoint(0.0, 0.0), cell_size_km=cell,
                      n_rows=n_rows, n_cols=n_cols)


class TestGeoPoint:
    def test_valid(self):
        p = GeoPoint(39.9, 116.4)
        assert p.lat == 39.9

    @pytest.mark.parametrize("lat,lon", [(91.0, 0.0), (-90.5, 0.0), (0.0, 181.0),
                                         (math.nan, 0.0), (0.0, math.inf)])
    def test_out_of_range(self, lat, lon):
        with pytest.raises(InputError):
            GeoPoint(lat, lon)


class TestRegionOf:
    def test_southwest_corner_is_inside(self):
        assert region_of(GeoPoint(0.0, 0.0), planar(2, 2)) == 0

    def test_outside_bounding_box(self):
        assert region_of(GeoPoint(5.0, 5.0), planar(2, 2)) is None

    def test_row_major_indexing(self):
        # 1.5 km east, 0.5 km north: row 0, col 1 -> 0 * 2 + 1
        assert region_of(GeoPoint(0.5, 1.5), planar(2, 2)) == 1

    def test_north_east_edges_excluded(self):
        g = planar(2, 2)
        assert region_of(GeoPoint(2.0, 1.0), g) is None
        assert region_of(GeoPoint(1.0, 2.0), g) is None

    def test_accepts_tuples(self):
        assert region_of((0.5, 1.5), planar(2, 2)) == 1

    def test_geographic_mode(self):
        g = RegionGrid(mode="geographic", origin=GeoPoint(39.8, 116.2),
                       cell_size_km=1.0, n_rows=4, n_cols=4)
        centers = g.cell_centers()
        for i in range(g.n_regions):
            assert region_of(GeoPoint(centers[i, 0], centers[i, 1]), g) == i

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 35))
    @settings(max_examples=60, deadline=None)
    def test_cell_centers_round_trip(self, n_rows, n_cols, index):
        g = planar(n_rows, n_cols, cell=0.7)
        index = index % g.n_regions
        centers = g.cell_centers()
        assert region_of(GeoPoint(centers[index, 0], centers[index, 1]), g) == index


class TestCenterDistance:
    def test_zero_diagonal(self):
        d = center_distance(planar(3, 4))
        assert (np.diag(d) == 0.0).all()

    def test_adjacent_cells(self):
        d = center_distance(planar(1, 2))
        assert d[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_cells(self):
        g = planar(2, 2)
        d = center_distance(g)
        assert d[0, 3] == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_symmetric_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            g = planar(int(rng.integers(1, 7)), int(rng.integers(1, 7)),
                       cell=float(rng.uniform(0.2, 3.0)))
            d = center_distance(g)
            assert (d >= 0).all()
            assert np.array_equal(d, d.T)
            assert (np.diag(d) == 0.0).all()

    def test_triangle_inequality_sampled(self):
        rng = np.random.default_rng(1)
        g = planar(5, 6, cell=1.3)
        d = center_distance(g)
        idx = rng.integers(0, g.n_regions, size=(200, 3))
        for i, j, k in idx:
            assert d[i, j] <= d[i, k] + d[k, j] + 1e-12

    def test_geographic_matches_planar_at_city_scale(self):
        geo = RegionGrid(mode="geographic", origin=GeoPoint(39.8, 116.2),
                         cell_size_km=1.0, n_rows=5, n_cols=5)
        d_geo = center_distance(geo)
        d_pl = center_distance(planar(5, 5))
        assert np.allclose(d_geo, d_pl, rtol=1e-12, atol=1e-9)


class TestNeighbors:
    def test_interior_cell_has_eight(self):
        g = planar(3, 3)
        assert neighbors(g, 4) == {0, 1, 2, 3, 5, 6, 7, 8}

    def test_corner_cell_has_three(self):
        assert neighbors(planar(3, 3), 0) == {1, 3, 4}

    def test_edge_cell_has_five(self):
        assert neighbors(planar(3, 3), 1) == {0, 2, 3, 4, 5}

    def test_index_out_of_range(self):
        with pytest.raises(InputError):
            neighbors(planar(3, 3), 9)

    def test_symmetry_and_sizes(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            g = planar(int(rng.integers(3, 8)), int(rng.integers(3, 8)))
            for i in range(g.n_regions):
                nbrs = neighbors(g, i)
                assert len(nbrs) in (3, 5, 8)
                for j in nbrs:
                    assert i in neighbors(g, j)


class TestGridValidation:
    def test_bad_cell_size(self):
        with pytest.raises(InputError):
            planar(2, 2, cell=0.0)

    def test_bad_mode(self):
        with pytest.raises(InputError):
            RegionGrid(mode="spherical", origin=GeoPoint(0, 0), cell_size_km=1.0,
                       n_rows=2, n_cols=2)

    def test_region_count(self):
        assert planar(29, 30).n_regions == 870
