import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcwatch.errors import EmptyMask, GridMismatch
from dcwatch.indices import NDVI_NODATA, BandPair, extract_series, ndvi, ndvi_array, zonal_mean
from dcwatch.raster_io import LANDSAT_C2_QA, BandKind, RasterGrid
from dcwatch.sites import CircleAOI, PixelMask, Site, SiteStatus

CLEAR, CLOUD = 1 << 6, 1 << 3


def grid(values, ts=None, nodata=None, dtype=np.float32, **kw):
    return RasterGrid(np.asarray(values, dtype=dtype), 0.0, 0.003, 0.001, 0.001, nodata=nodata, timestamp=ts, **kw)


def qa_grid(words, ts=None):
    return grid(words, ts=ts, dtype=np.uint16, band_kind=BandKind.QA_BITS)


SITE = Site("c", "", "", SiteStatus.EXISTING, lat=0.0015, lon=0.0015, aoi=CircleAOI(1e6))


class TestNdvi:
    def test_values(self):
        out = ndvi(BandPair(grid([[0.5, 0.3]]), grid([[0.1, 0.3]])))
        assert out.values[0, 0] == pytest.approx(0.4 / 0.6, abs=1e-6)
        assert out.values[0, 1] == 0.0
        assert out.band_kind is BandKind.INDEX

    def test_zero_sum_is_nodata(self):
        out = ndvi(BandPair(grid([[0.0]]), grid([[0.0]])))
        assert out.values[0, 0] == NDVI_NODATA and out.nodata_mask().all()

    def test_band_nodata_propagates(self):
        out = ndvi(BandPair(grid([[-1.0, 0.4]], nodata=-1), grid([[0.1, 0.1]])))
        assert out.nodata_mask().tolist() == [[True, False]]

    def test_qa_rejection(self):
        pair = BandPair(grid([[0.5, 0.5]]), grid([[0.1, 0.1]]), qa_grid([[CLEAR, CLOUD]]))
        assert ndvi(pair).nodata_mask().tolist() == [[False, True]]

    def test_mismatched_shape(self):
        with pytest.raises(GridMismatch):
            BandPair(grid([[1.0, 2.0]]), grid([[1.0]]))

    def test_mismatched_timestamp(self):
        with pytest.raises(GridMismatch):
            BandPair(grid([[1.0]], ts=1), grid([[1.0]], ts=2))


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10))
def test_ndvi_range_and_antisymmetry(nir, red):
    a = ndvi_array(nir, red)
    b = ndvi_array(red, nir)
    if nir + red == 0:
        assert np.isnan(a) and np.isnan(b)
    else:
        assert -1 <= a <= 1
        assert a == -b


class TestZonal:
    def test_example(self):
        g = grid([[1, 2], [3, 4]])
        stats = zonal_mean(g, PixelMask(np.array([[True, True], [False, True]])))
        assert stats.mean == pytest.approx(7 / 3)
        assert stats.count == 3
        assert stats.stddev == pytest.approx(np.sqrt(((1 - 7 / 3) ** 2 + (2 - 7 / 3) ** 2 + (4 - 7 / 3) ** 2) / 3))

    def test_nodata_excluded(self):
        g = grid([[1, -9999]], nodata=-9999)
        assert zonal_mean(g, PixelMask(np.array([[True, True]]))).count == 1

    def test_empty(self):
        with pytest.raises(EmptyMask):
            zonal_mean(grid([[1, 2]]), PixelMask(np.zeros((1, 2), bool)))
        with pytest.raises(EmptyMask):
            zonal_mean(grid([[-9999.0]], nodata=-9999), PixelMask(np.ones((1, 1), bool)))

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatch):
            zonal_mean(grid([[1, 2]]), PixelMask(np.ones((2, 2), bool)))

    def test_against_loop(self, rng):
        for _ in range(30):
            vals = rng.normal(size=(16, 16))
            vals[rng.random((16, 16)) < 0.2] = -9999
            sel = rng.random((16, 16)) < 0.5
            sel[0, 0] = True
            vals[0, 0] = 1.0
            g = grid(vals, nodata=-9999, dtype=np.float64)
            picked = [vals[r, c] for r in range(16) for c in range(16) if sel[r, c] and vals[r, c] != -9999]
            mean = sum(picked) / len(picked)
            var = sum((p - mean) ** 2 for p in picked) / len(picked)
            s = zonal_mean(g, PixelMask(sel))
            assert s.count == len(picked)
            assert s.mean == pytest.approx(mean, rel=1e-12, abs=1e-14)
            assert s.stddev == pytest.approx(var**0.5, rel=1e-10, abs=1e-14)


class TestExtract:
    def test_three_dates(self):
        stack = [(float(d), grid(np.full((3, 3), v), ts=d)) for d, v in ((10, 0.2), (30, 0.4), (20, 0.3))]
        s = extract_series(stack, SITE, "ndvi")
        assert s.t.tolist() == [10, 20, 30]
        assert s.values == pytest.approx([0.2, 0.3, 0.4])

    def test_cloudy_date_dropped(self):
        ones = np.ones((3, 3))
        stack = [
            (1.0, grid(ones), qa_grid(np.full((3, 3), CLEAR))),
            (2.0, grid(ones * 2), qa_grid(np.full((3, 3), CLOUD))),
            (3.0, grid(ones * 3), qa_grid(np.full((3, 3), CLEAR))),
        ]
        s = extract_series(stack, SITE, "ndvi", qa_spec=LANDSAT_C2_QA)
        assert s.t.tolist() == [1, 3] and s.values.tolist() == [1, 3]

    def test_qa_before_mean(self):
        vals = np.array([[1.0, 100.0, 1.0]] * 3)
        words = np.array([[CLEAR, CLOUD, CLEAR]] * 3)
        s = extract_series([(0.0, grid(vals), qa_grid(words))], SITE, "ndvi")
        assert s.values.tolist() == [1.0]

    def test_min_clear_fraction(self):
        words = np.full((3, 3), CLOUD)
        words[0, 0] = CLEAR
        stack = [(0.0, grid(np.ones((3, 3))), qa_grid(words))]
        assert len(extract_series(stack, SITE, "ndvi")) == 1
        assert len(extract_series(stack, SITE, "ndvi", min_clear_fraction=0.5)) == 0

    def test_empty_stack(self):
        assert len(extract_series([], SITE, "ndvi")) == 0

    def test_duplicate_times(self):
        stack = [(1.0, grid(np.ones((3, 3)))), (1.0, grid(np.ones((3, 3))))]
        with pytest.raises(ValueError):
            extract_series(stack, SITE, "ndvi")
