import io
import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcwatch.errors import DcwatchError, MalformedFile, MissingGeoreference, UnsupportedFeature
from dcwatch.raster_io import (
    LANDSAT_C2_QA,
    BandKind,
    QaBitSpec,
    RasterGrid,
    decode_qa,
    is_geographic_crs,
    parse_geotiff,
    qa_usable,
    write_geotiff,
)


def make_grid(values, **kw):
    kw.setdefault("origin_x", 500000.0)
    kw.setdefault("origin_y", 4300000.0)
    kw.setdefault("pixel_scale_x", 30.0)
    kw.setdefault("pixel_scale_y", 30.0)
    kw.setdefault("crs_tag", "EPSG:32618")
    return RasterGrid(values=values, **kw)


def patch_tag(data, tag, value):
    """Overwrite the inline SHORT value of ``tag`` in a little-endian file."""
    buf = bytearray(data)
    (ifd,) = struct.unpack_from("<I", buf, 4)
    (n,) = struct.unpack_from("<H", buf, ifd)
    for i in range(n):
        pos = ifd + 2 + 12 * i
        t, typ, _ = struct.unpack_from("<HHI", buf, pos)
        if t == tag:
            struct.pack_into("<H", buf, pos + 8, value)
            return bytes(buf)
    raise KeyError(tag)


def rename_tag(data, tag, new_tag):
    buf = bytearray(data)
    (ifd,) = struct.unpack_from("<I", buf, 4)
    (n,) = struct.unpack_from("<H", buf, ifd)
    for i in range(n):
        pos = ifd + 2 + 12 * i
        if struct.unpack_from("<H", buf, pos)[0] == tag:
            struct.pack_into("<H", buf, pos, new_tag)
            return bytes(buf)
    raise KeyError(tag)


class TestRoundtrip:
    def test_float32_2x2(self):
        g = make_grid(np.array([[0.1, 0.2], [0.3, 0.4]], dtype=np.float32), origin_x=500000, origin_y=4300000)
        out = parse_geotiff(write_geotiff(g))
        assert out == g
        assert (out.origin_x, out.origin_y) == (500000, 4300000)
        assert (out.pixel_scale_x, out.pixel_scale_y) == (30, 30)
        assert out.values.tolist() == g.values.tolist()

    def test_deterministic(self):
        g = make_grid(np.arange(12, dtype=np.float32).reshape(3, 4), timestamp=17000.5)
        assert write_geotiff(g, compression="deflate") == write_geotiff(g, compression="deflate")

    def test_row_major_order(self):
        vals = np.array([[1, 2, 3], [4, 5, 6]], dtype=np.int16)
        out = parse_geotiff(write_geotiff(make_grid(vals)))
        assert out.width == 3 and out.height == 2
        assert out.values.ravel().tolist() == [1, 2, 3, 4, 5, 6]

    @pytest.mark.parametrize("layout,block", [("strip", 1), ("strip", 3), ("strip", None), ("tile", 16), ("tile", 32)])
    @pytest.mark.parametrize("compression", ["none", "deflate"])
    @pytest.mark.parametrize("byteorder", ["<", ">"])
    def test_layouts(self, layout, block, compression, byteorder, rng):
        vals = rng.integers(0, 65535, size=(37, 21)).astype(np.uint16)
        g = make_grid(vals, nodata=7, band_kind=BandKind.QA_BITS, timestamp=123)
        data = write_geotiff(g, layout=layout, block_size=block, compression=compression, byteorder=byteorder)
        assert parse_geotiff(data) == g

    def test_metadata_fields(self):
        g = make_grid(np.ones((2, 2), np.float64), crs_tag="EPSG:4326", band_kind="radiance", timestamp=18000)
        out = parse_geotiff(write_geotiff(g))
        assert out.crs_tag == "EPSG:4326"
        assert out.band_kind is BandKind.RADIANCE
        assert out.timestamp == 18000
        assert out.values.dtype == np.float64

    def test_nan_nodata(self):
        vals = np.array([[np.nan, 1.0]], dtype=np.float32)
        g = make_grid(vals, nodata=float("nan"))
        out = parse_geotiff(write_geotiff(g))
        assert out == g
        assert out.nodata_mask().tolist() == [[True, False]]

    def test_pillow_decodes_same_samples(self, rng):
        PIL = pytest.importorskip("PIL.Image")
        vals = rng.normal(size=(20, 33)).astype(np.float32)
        for layout, compression in itertools.product(("strip", "tile"), ("none", "deflate")):
            data = write_geotiff(make_grid(vals), layout=layout, compression=compression, block_size=16)
            np.testing.assert_array_equal(np.array(PIL.open(io.BytesIO(data))), vals)

    def test_scale_offset_opt_in(self):
        g = make_grid(np.array([[100, 0]], dtype=np.uint16), nodata=0)
        data = write_geotiff(g, scale_offset=(2.75e-05, -0.2))
        assert parse_geotiff(data) == g
        scaled = parse_geotiff(data, apply_scale=True)
        assert scaled.values[0, 0] == pytest.approx(100 * 2.75e-05 - 0.2)
        assert scaled.nodata_mask().tolist() == [[False, True]]


class TestParseErrors:
    def test_lzw_rejected(self):
        data = patch_tag(write_geotiff(make_grid(np.zeros((2, 2), np.uint8))), 259, 5)
        with pytest.raises(UnsupportedFeature) as exc:
            parse_geotiff(data)
        assert exc.value.tag == 259

    def test_nodata_sentinel(self):
        g = make_grid(np.array([[0]], dtype=np.uint16), nodata=0)
        out = parse_geotiff(write_geotiff(g))
        assert out.nodata == 0
        assert out.nodata_mask().tolist() == [[True]]

    def test_bigtiff(self):
        with pytest.raises(UnsupportedFeature):
            parse_geotiff(b"II+\x00\x08\x00\x00\x00" + bytes(16))

    def test_multiband(self):
        data = patch_tag(write_geotiff(make_grid(np.zeros((2, 2), np.uint8))), 277, 3)
        with pytest.raises(UnsupportedFeature) as exc:
            parse_geotiff(data)
        assert exc.value.tag == 277

    def test_unsupported_sample_type(self):
        data = patch_tag(write_geotiff(make_grid(np.zeros((2, 2), np.uint8))), 258, 32)
        with pytest.raises(UnsupportedFeature):
            parse_geotiff(data)

    @pytest.mark.parametrize("tag", [33550, 33922])
    def test_missing_georeference(self, tag):
        data = rename_tag(write_geotiff(make_grid(np.zeros((2, 2), np.uint8))), tag, 65000)
        with pytest.raises(MissingGeoreference):
            parse_geotiff(data)

    def test_truncated(self):
        data = write_geotiff(make_grid(np.arange(400, dtype=np.float32).reshape(20, 20)))
        for cut in (0, 4, 7, 20, len(data) // 2, len(data) - 1):
            with pytest.raises(MalformedFile):
                parse_geotiff(data[:cut])

    def test_bad_magic(self):
        with pytest.raises(MalformedFile):
            parse_geotiff(b"XX*\x00\x08\x00\x00\x00")

    def test_errors_share_base(self):
        assert issubclass(UnsupportedFeature, DcwatchError)
        assert issubclass(MalformedFile, DcwatchError)


class TestGridInvariants:
    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            make_grid(np.zeros((1, 1)), pixel_scale_x=0)

    def test_rejects_nonfinite_data(self):
        with pytest.raises(ValueError):
            make_grid(np.array([[np.inf]]))

    def test_nonfinite_allowed_as_nodata(self):
        make_grid(np.array([[np.nan]]), nodata=float("nan"))

    def test_pixel_centers(self):
        g = make_grid(np.zeros((2, 3)), origin_x=10, origin_y=20, pixel_scale_x=2, pixel_scale_y=1)
        xs, ys = g.pixel_centers()
        assert xs[0].tolist() == [11, 13, 15]
        assert ys[:, 0].tolist() == [19.5, 18.5]

    def test_geographic_detection(self):
        assert is_geographic_crs("EPSG:4326")
        assert is_geographic_crs("OGC:CRS84")
        assert not is_geographic_crs("EPSG:32618")


class TestQa:
    def test_zero_pixel_usable(self):
        assert decode_qa(0, LANDSAT_C2_QA)

    def test_cloud_bit(self):
        spec = QaBitSpec((("cloud", 3),), {"cloud"})
        assert not decode_qa(8, spec)

    def test_unrelated_bit(self):
        spec = QaBitSpec((("cloud", 3), ("shadow", 4)), {"cloud", "shadow"})
        assert decode_qa(2, spec)

    def test_default_rejects(self):
        for bit in (1, 3, 4, 5):
            assert not decode_qa(1 << bit)
        for bit in (0, 2, 6, 7):
            assert decode_qa(1 << bit)

    def test_brute_force_all_words(self):
        spec = QaBitSpec((("a", 0), ("b", 9), ("c", 15)), {"a", "c"})
        words = np.arange(1 << 16)
        expected = np.array([not ((w >> 0) & 1 or (w >> 15) & 1) for w in range(1 << 16)])
        assert np.array_equal(qa_usable(words, spec), expected)
        assert all(decode_qa(w, spec) == expected[w] for w in range(0, 1 << 16, 97))

    @pytest.mark.parametrize(
        "flags,reject",
        [((("a", 1), ("a", 2)), set()), ((("a", 1), ("b", 1)), set()), ((("a", 16),), set()), ((("a", 1),), {"z"})],
    )
    def test_spec_validation(self, flags, reject):
        with pytest.raises(ValueError):
            QaBitSpec(flags, reject)

    def test_pixel_range(self):
        with pytest.raises(ValueError):
            decode_qa(1 << 16)


DTYPES = [np.uint8, np.uint16, np.int16, np.float32]


@st.composite
def grids(draw):
    dtype = draw(st.sampled_from(DTYPES))
    h = draw(st.integers(1, 40))
    w = draw(st.integers(1, 40))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    if np.dtype(dtype).kind == "f":
        vals = r.normal(scale=1e3, size=(h, w)).astype(dtype)
    else:
        info = np.iinfo(dtype)
        vals = r.integers(info.min, info.max, size=(h, w), endpoint=True).astype(dtype)
    nodata = draw(st.one_of(st.none(), st.just(float(vals.flat[0]))))
    return make_grid(
        vals,
        origin_x=draw(st.floats(-1e6, 1e6)),
        origin_y=draw(st.floats(-1e6, 1e6)),
        pixel_scale_x=draw(st.floats(1e-6, 1e3)),
        pixel_scale_y=draw(st.floats(1e-6, 1e3)),
        nodata=nodata,
        band_kind=draw(st.sampled_from(list(BandKind))),
        timestamp=draw(st.one_of(st.none(), st.integers(0, 30000), st.floats(0, 30000))),
    )


@settings(max_examples=60, deadline=None)
@given(
    grid=grids(),
    layout=st.sampled_from(["strip", "tile"]),
    compression=st.sampled_from(["none", "deflate"]),
    byteorder=st.sampled_from(["<", ">"]),
)
def test_roundtrip_property(grid, layout, compression, byteorder):
    data = write_geotiff(grid, layout=layout, compression=compression, byteorder=byteorder, block_size=16 if layout == "tile" else 3)
    assert parse_geotiff(data) == grid


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=300))
def test_arbitrary_bytes_never_crash(blob):
    try:
        parse_geotiff(blob)
    except DcwatchError:
        pass
