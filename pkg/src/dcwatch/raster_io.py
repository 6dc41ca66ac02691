"""Georeferenced raster grids, a minimal GeoTIFF reader/writer and QA bit decoding.

Only a small, well-defined subset of classic TIFF is handled: one sample per
pixel, unsigned 8/16-bit, signed 16-bit or IEEE float samples, strips or
tiles, no compression or DEFLATE, and georeferencing through
ModelPixelScale + a single ModelTiepoint. The CRS is carried as an opaque
string (``"EPSG:4326"``); no GeoKey interpretation beyond pulling out an EPSG
code is attempted.
"""
from __future__ import annotations

import dataclasses
import json
import math
import re
import struct
import xml.etree.ElementTree as ET
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DcwatchError, MalformedFile, MissingGeoreference, UnsupportedFeature

__all__ = [
    "BandKind",
    "RasterGrid",
    "QaBitSpec",
    "LANDSAT_C2_QA",
    "decode_qa",
    "qa_usable",
    "is_geographic_crs",
    "parse_geotiff",
    "write_geotiff",
    "read_geotiff",
    "save_geotiff",
]


class BandKind(str, Enum):
    REFLECTANCE = "reflectance"
    RADIANCE = "radiance"
    INDEX = "index"
    QA_BITS = "qa_bits"
    OTHER = "other"


# (SampleFormat, BitsPerSample) -> numpy kind/size. float64 is accepted on top of
# the float32 baseline so that float64 grids round-trip without loss.
_SAMPLE_TYPES = {
    (1, 8): "u1",
    (1, 16): "u2",
    (2, 16): "i2",
    (3, 32): "f4",
    (3, 64): "f8",
}
_DTYPE_TO_SAMPLE = {np.dtype(v): k for k, v in _SAMPLE_TYPES.items()}

_GEOGRAPHIC_EPSG = frozenset(
    {4326, 4269, 4258, 4267, 4283, 4490, 4612, 4617, 4674, 4755, 4937, 4979}
)

# hard ceiling on decoded pixels; protects against absurd header dimensions
MAX_PIXELS = 1 << 28


def is_geographic_crs(crs_tag: str) -> bool:
    """Whether a CRS tag denotes longitude/latitude degrees."""
    tag = (crs_tag or "").strip().upper()
    if tag in {"OGC:CRS84", "CRS84", "WGS84"} or "LONGLAT" in tag:
        return True
    m = re.fullmatch(r"EPSG:(\d+)", tag)
    return bool(m) and int(m.group(1)) in _GEOGRAPHIC_EPSG


def _epsg_code(crs_tag):
    m = re.fullmatch(r"EPSG:(\d+)", (crs_tag or "").strip().upper())
    return int(m.group(1)) if m else None


def _nodata_mask(values, nodata):
    if nodata is None or (math.isnan(nodata) and values.dtype.kind != "f"):
        return np.zeros(values.shape, dtype=bool)
    if math.isnan(nodata):
        return np.isnan(values)
    return values == nodata


@dataclass(eq=False)
class RasterGrid:
    """One band of one acquisition on a north-up grid.

    ``values`` is a ``(height, width)`` array in row-major order; its dtype is
    kept as read from disk (uint8, uint16, int16, float32 or float64).
    ``origin_x``/``origin_y`` locate the upper-left corner of the upper-left
    pixel. ``timestamp`` is in days since the caller's reference epoch.
    """

    values: np.ndarray
    origin_x: float
    origin_y: float
    pixel_scale_x: float
    pixel_scale_y: float
    crs_tag: str = "EPSG:4326"
    nodata: float | None = None
    band_kind: BandKind = BandKind.OTHER
    timestamp: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype not in _DTYPE_TO_SAMPLE:
            values = values.astype(np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"values must be a non-empty 2-D array, got shape {values.shape}")
        self.values = values
        for name in ("pixel_scale_x", "pixel_scale_y"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v}")
        for name in ("origin_x", "origin_y"):
            if not math.isfinite(float(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if self.nodata is not None:
            self.nodata = float(self.nodata)
        self.band_kind = BandKind(self.band_kind)
        if values.dtype.kind == "f":
            bad = ~np.isfinite(values) & ~self.nodata_mask()
            if bad.any():
                raise ValueError("non-nodata values must be finite")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def nodata_mask(self) -> np.ndarray:
        return _nodata_mask(self.values, self.nodata)

    def valid_mask(self) -> np.ndarray:
        return ~self.nodata_mask()

    def pixel_centers(self):
        """Map coordinates of pixel centers as two ``(height, width)`` arrays."""
        cols = np.arange(self.width)
        rows = np.arange(self.height)
        xs = self.origin_x + (cols + 0.5) * self.pixel_scale_x
        ys = self.origin_y - (rows + 0.5) * self.pixel_scale_y
        return np.meshgrid(xs, ys)

    def same_geometry(self, other: "RasterGrid") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.origin_x == other.origin_x
            and self.origin_y == other.origin_y
            and self.pixel_scale_x == other.pixel_scale_x
            and self.pixel_scale_y == other.pixel_scale_y
            and self.crs_tag == other.crs_tag
        )

    def replace(self, **changes) -> "RasterGrid":
        return dataclasses.replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        same_nodata = (self.nodata is None and other.nodata is None) or (
            self.nodata is not None
            and other.nodata is not None
            and (self.nodata == other.nodata or (math.isnan(self.nodata) and math.isnan(other.nodata)))
        )
        return (
            self.same_geometry(other)
            and same_nodata
            and self.band_kind == other.band_kind
            and self.timestamp == other.timestamp
            and self.values.dtype == other.values.dtype
            and self.values.tobytes() == other.values.tobytes()
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# QA bitmasks


@dataclass(frozen=True)
class QaBitSpec:
    """Named bits of a 16-bit quality word and which of them reject a pixel."""

    named_flags: tuple = ()
    reject_flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        flags = tuple((str(n), int(b)) for n, b in self.named_flags)
        object.__setattr__(self, "named_flags", flags)
        object.__setattr__(self, "reject_flags", frozenset(self.reject_flags))
        names = [n for n, _ in flags]
        bits = [b for _, b in flags]
        if len(set(names)) != len(names):
            raise ValueError("flag names must be unique")
        if len(set(bits)) != len(bits):
            raise ValueError("bit positions must be unique")
        if any(not 0 <= b <= 15 for b in bits):
            raise ValueError("bit positions must lie in [0, 15]")
        unknown = self.reject_flags - set(names)
        if unknown:
            raise ValueError(f"reject flags not among named flags: {sorted(unknown)}")

    @property
    def reject_bitmask(self) -> int:
        return sum(1 << b for n, b in self.named_flags if n in self.reject_flags)

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["named_flags"].items()), frozenset(d.get("reject_flags", ())))

    def to_dict(self):
        return {"named_flags": dict(self.named_flags), "reject_flags": sorted(self.reject_flags)}


# Landsat Collection-2 QA_PIXEL layout
LANDSAT_C2_QA = QaBitSpec(
    named_flags=(
        ("fill", 0),
        ("dilated-cloud", 1),
        ("cirrus", 2),
        ("cloud", 3),
        ("cloud-shadow", 4),
        ("snow", 5),
        ("clear", 6),
        ("water", 7),
    ),
    reject_flags=frozenset({"dilated-cloud", "cloud", "cloud-shadow", "snow"}),
)


def decode_qa(pixel: int, spec: QaBitSpec = LANDSAT_C2_QA) -> bool:
    """True when no reject bit of ``spec`` is set in ``pixel``."""
    pixel = int(pixel)
    if not 0 <= pixel <= 0xFFFF:
        raise ValueError(f"QA pixel {pixel} does not fit in 16 bits")
    return (pixel & spec.reject_bitmask) == 0


def qa_usable(qa, spec: QaBitSpec = LANDSAT_C2_QA) -> np.ndarray:
    """Vectorised :func:`decode_qa` over an array or a qa_bits grid."""
    arr = qa.values if isinstance(qa, RasterGrid) else np.asarray(qa)
    return (arr.astype(np.int64) & spec.reject_bitmask) == 0


# ---------------------------------------------------------------------------
# TIFF constants

_T_BYTE, _T_ASCII, _T_SHORT, _T_LONG, _T_RATIONAL = 1, 2, 3, 4, 5
_T_SBYTE, _T_UNDEF, _T_SSHORT, _T_SLONG, _T_SRATIONAL = 6, 7, 8, 9, 10
_T_FLOAT, _T_DOUBLE = 11, 12

_TYPE_FMT = {
    _T_BYTE: "B", _T_ASCII: "B", _T_SHORT: "H", _T_LONG: "I", _T_RATIONAL: "II",
    _T_SBYTE: "b", _T_UNDEF: "B", _T_SSHORT: "h", _T_SLONG: "i", _T_SRATIONAL: "ii",
    _T_FLOAT: "f", _T_DOUBLE: "d",
}
_TYPE_SIZE = {t: struct.calcsize("<" + f) for t, f in _TYPE_FMT.items()}

TAG_WIDTH = 256
TAG_HEIGHT = 257
TAG_BITS = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_DESCRIPTION = 270
TAG_STRIP_OFFSETS = 273
TAG_SPP = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_COUNTS = 279
TAG_PLANAR = 284
TAG_PREDICTOR = 317
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_PIXEL_SCALE = 33550
TAG_TIEPOINT = 33922
TAG_GEOKEYS = 34735
TAG_GDAL_METADATA = 42112
TAG_GDAL_NODATA = 42113

_COMPRESSION_NONE = 1
_COMPRESSION_DEFLATE = (8, 32946)


# ---------------------------------------------------------------------------
# Reading


def _read_ifd(data: bytes, bo: str, offset: int) -> dict:
    n = len(data)
    if offset < 8 or offset + 2 > n:
        raise MalformedFile(f"IFD offset {offset} outside file of {n} bytes")
    (count,) = struct.unpack_from(bo + "H", data, offset)
    if offset + 2 + 12 * count + 4 > n:
        raise MalformedFile("IFD entries run past end of file")
    tags = {}
    for i in range(count):
        pos = offset + 2 + 12 * i
        tag, typ, cnt = struct.unpack_from(bo + "HHI", data, pos)
        fmt = _TYPE_FMT.get(typ)
        if fmt is None:
            continue  # unknown field types are skipped, per TIFF convention
        size = _TYPE_SIZE[typ] * cnt
        if size <= 4:
            start = pos + 8
        else:
            (start,) = struct.unpack_from(bo + "I", data, pos + 8)
            if start + size > n:
                raise MalformedFile(f"value of tag {tag} runs past end of file")
        raw = data[start:start + size]
        if typ == _T_ASCII:
            tags[tag] = raw.split(b"\x00", 1)[0].decode("latin-1")
        elif typ in (_T_RATIONAL, _T_SRATIONAL):
            parts = struct.unpack(bo + fmt[0] * (2 * cnt), raw)
            tags[tag] = tuple(
                (a / b) if b else math.nan for a, b in zip(parts[::2], parts[1::2])
            )
        else:
            tags[tag] = struct.unpack(bo + fmt * cnt, raw)
    return tags


def _scalar(tags, tag, default=None, required=False):
    v = tags.get(tag)
    if v is None or isinstance(v, str) or len(v) == 0:
        if required:
            raise MalformedFile(f"required tag {tag} missing")
        return default
    return v[0]


def _int_array(tags, tag):
    v = tags.get(tag)
    if v is None or isinstance(v, str):
        raise MalformedFile(f"required tag {tag} missing")
    return [int(x) for x in v]


def _decode_block(data, offset, count, expected, deflate):
    if offset < 0 or count < 0 or offset + count > len(data):
        raise MalformedFile(f"data block at {offset}+{count} outside file")
    buf = data[offset:offset + count]
    if deflate:
        try:
            d = zlib.decompressobj()
            buf = d.decompress(buf, expected)
        except zlib.error as exc:
            raise MalformedFile(f"corrupt DEFLATE stream: {exc}") from None
    if len(buf) < expected:
        raise MalformedFile(f"data block holds {len(buf)} bytes, expected {expected}")
    return buf[:expected]


def _parse_geokeys(tags):
    keys = tags.get(TAG_GEOKEYS)
    if not keys or isinstance(keys, str) or len(keys) < 4:
        return None
    nkeys = keys[3]
    for i in range(nkeys):
        entry = keys[4 + 4 * i: 8 + 4 * i]
        if len(entry) < 4:
            break
        key_id, loc, _, value = entry
        if key_id in (2048, 3072) and loc == 0 and 0 < value < 32767:
            return f"EPSG:{value}"
    return None


def _parse_gdal_scale(text):
    scale, offset = 1.0, 0.0
    try:
        root = ET.fromstring(text)
    except ET.ParseError:
        return scale, offset
    for item in root.iter("Item"):
        name = (item.get("name") or "").upper()
        try:
            if name == "SCALE":
                scale = float(item.text)
            elif name == "OFFSET":
                offset = float(item.text)
        except (TypeError, ValueError):
            pass
    return scale, offset


def parse_geotiff(data: bytes, *, apply_scale: bool = False) -> RasterGrid:
    """Decode a GeoTIFF byte string into a :class:`RasterGrid`.

    Only the first IFD is read. With ``apply_scale`` the GDAL ``SCALE`` and
    ``OFFSET`` metadata items (tag 42112), when present, are applied and the
    result is float64.

    Raises
    ------
    UnsupportedFeature
        BigTIFF, unknown compression, predictors, multi-sample pixels or an
        unsupported sample type.
    MalformedFile
        Truncated data, out-of-range offsets, inconsistent block tables.
    MissingGeoreference
        Either ModelPixelScale or ModelTiepoint is absent.
    """
    data = bytes(data)
    try:
        return _parse(data, apply_scale)
    except DcwatchError:
        raise
    except (struct.error, ValueError, IndexError, OverflowError, TypeError) as exc:
        raise MalformedFile(f"cannot decode TIFF: {exc}") from None


def _parse(data, apply_scale):
    if len(data) < 8:
        raise MalformedFile("file shorter than TIFF header")
    order = data[:2]
    if order == b"II":
        bo = "<"
    elif order == b"MM":
        bo = ">"
    else:
        raise MalformedFile("bad byte-order mark")
    (magic,) = struct.unpack_from(bo + "H", data, 2)
    if magic == 43:
        raise UnsupportedFeature("BigTIFF is not supported")
    if magic != 42:
        raise MalformedFile(f"bad TIFF magic {magic}")
    (ifd_offset,) = struct.unpack_from(bo + "I", data, 4)
    tags = _read_ifd(data, bo, ifd_offset)

    width = int(_scalar(tags, TAG_WIDTH, required=True))
    height = int(_scalar(tags, TAG_HEIGHT, required=True))
    if width < 1 or height < 1:
        raise MalformedFile(f"invalid dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise UnsupportedFeature(f"image of {width}x{height} pixels exceeds size limit", TAG_WIDTH)

    spp = int(_scalar(tags, TAG_SPP, 1))
    if spp != 1:
        raise UnsupportedFeature(f"{spp} samples per pixel", TAG_SPP)
    bits_all = tags.get(TAG_BITS, (1,))
    bits = int(bits_all[0]) if not isinstance(bits_all, str) and bits_all else 1
    sample_format = int(_scalar(tags, TAG_SAMPLE_FORMAT, 1))
    kind = _SAMPLE_TYPES.get((sample_format, bits))
    if kind is None:
        tag = TAG_SAMPLE_FORMAT if sample_format not in (1, 2, 3) else TAG_BITS
        raise UnsupportedFeature(f"sample format {sample_format} with {bits} bits", tag)
    dtype = np.dtype(bo + kind)

    compression = int(_scalar(tags, TAG_COMPRESSION, _COMPRESSION_NONE))
    if compression == _COMPRESSION_NONE:
        deflate = False
    elif compression in _COMPRESSION_DEFLATE:
        deflate = True
    else:
        raise UnsupportedFeature(f"compression {compression}", TAG_COMPRESSION)
    predictor = int(_scalar(tags, TAG_PREDICTOR, 1))
    if predictor != 1:
        raise UnsupportedFeature(f"predictor {predictor}", TAG_PREDICTOR)

    if TAG_PIXEL_SCALE not in tags or TAG_TIEPOINT not in tags:
        raise MissingGeoreference("ModelPixelScale (33550) and ModelTiepoint (33922) are required")
    scale = tags[TAG_PIXEL_SCALE]
    tie = tags[TAG_TIEPOINT]
    if isinstance(scale, str) or isinstance(tie, str) or len(scale) < 2 or len(tie) < 6:
        raise MalformedFile("geo tags too short")
    if len(tie) > 6:
        raise UnsupportedFeature("multiple tiepoints", TAG_TIEPOINT)
    sx, sy = float(scale[0]), float(scale[1])
    if not (math.isfinite(sx) and math.isfinite(sy) and sx > 0 and sy > 0):
        raise MalformedFile(f"invalid pixel scale ({sx}, {sy})")
    i, j, _, x, y, _ = (float(v) for v in tie)
    origin_x = x - i * sx
    origin_y = y + j * sy
    if not (math.isfinite(origin_x) and math.isfinite(origin_y)):
        raise MalformedFile("non-finite tiepoint")

    itemsize = dtype.itemsize
    out = np.empty((height, width), dtype=dtype)
    if TAG_TILE_OFFSETS in tags or TAG_TILE_WIDTH in tags:
        tw = int(_scalar(tags, TAG_TILE_WIDTH, required=True))
        th = int(_scalar(tags, TAG_TILE_LENGTH, required=True))
        if tw < 1 or th < 1 or tw * th > MAX_PIXELS:
            raise MalformedFile(f"invalid tile size {tw}x{th}")
        offsets = _int_array(tags, TAG_TILE_OFFSETS)
        counts = _int_array(tags, TAG_TILE_COUNTS)
        across = -(-width // tw)
        down = -(-height // th)
        if len(offsets) != across * down or len(counts) != len(offsets):
            raise MalformedFile("tile table does not match image dimensions")
        for k, (off, cnt) in enumerate(zip(offsets, counts)):
            r, c = divmod(k, across)
            buf = _decode_block(data, off, cnt, tw * th * itemsize, deflate)
            tile = np.frombuffer(buf, dtype=dtype).reshape(th, tw)
            r0, c0 = r * th, c * tw
            rh, cw = min(th, height - r0), min(tw, width - c0)
            out[r0:r0 + rh, c0:c0 + cw] = tile[:rh, :cw]
    else:
        rps = int(_scalar(tags, TAG_ROWS_PER_STRIP, height))
        rps = min(max(rps, 1), height) if rps > 0 else height
        offsets = _int_array(tags, TAG_STRIP_OFFSETS)
        counts = _int_array(tags, TAG_STRIP_COUNTS)
        nstrips = -(-height // rps)
        if len(offsets) != nstrips or len(counts) != nstrips:
            raise MalformedFile("strip table does not match image dimensions")
        for k, (off, cnt) in enumerate(zip(offsets, counts)):
            r0 = k * rps
            rows = min(rps, height - r0)
            buf = _decode_block(data, off, cnt, rows * width * itemsize, deflate)
            out[r0:r0 + rows] = np.frombuffer(buf, dtype=dtype).reshape(rows, width)
    values = out.astype(dtype.newbyteorder("="))

    nodata = None
    if TAG_GDAL_NODATA in tags:
        text = tags[TAG_GDAL_NODATA]
        try:
            nodata = float(text.strip()) if isinstance(text, str) else None
        except ValueError:
            raise MalformedFile(f"unparseable nodata value {text!r}") from None

    meta = {}
    desc = tags.get(TAG_DESCRIPTION)
    if isinstance(desc, str) and desc.startswith("{"):
        try:
            meta = json.loads(desc)
        except ValueError:
            meta = {}
        if not isinstance(meta, dict):
            meta = {}
    crs = meta.get("crs") if isinstance(meta.get("crs"), str) else None
    crs = crs or _parse_geokeys(tags) or "unknown"
    try:
        band_kind = BandKind(meta.get("band_kind", "other"))
    except ValueError:
        band_kind = BandKind.OTHER
    timestamp = meta.get("timestamp")
    if isinstance(timestamp, bool) or not isinstance(timestamp, (int, float)) or not math.isfinite(timestamp):
        timestamp = None

    if apply_scale and isinstance(tags.get(TAG_GDAL_METADATA), str):
        gain, bias = _parse_gdal_scale(tags[TAG_GDAL_METADATA])
        if (gain, bias) != (1.0, 0.0):
            nodata_px = _nodata_mask(values, nodata)
            values = values.astype(np.float64) * gain + bias
            values[nodata_px] = nodata if nodata is not None else values[nodata_px]

    if values.dtype.kind == "f":
        if (~np.isfinite(values) & ~_nodata_mask(values, nodata)).any():
            raise MalformedFile("non-finite samples outside nodata")

    return RasterGrid(
        values=values,
        origin_x=origin_x,
        origin_y=origin_y,
        pixel_scale_x=sx,
        pixel_scale_y=sy,
        crs_tag=crs,
        nodata=nodata,
        band_kind=band_kind,
        timestamp=timestamp,
    )


# ---------------------------------------------------------------------------
# Writing


def _format_nodata(grid):
    v = grid.nodata
    if grid.values.dtype.kind in "ui" and v.is_integer():
        return str(int(v))
    return repr(v)


def _geokey_directory(crs_tag):
    code = _epsg_code(crs_tag)
    if code is None or code > 32766:
        return None
    geographic = is_geographic_crs(crs_tag)
    return (
        1, 1, 0, 3,
        1024, 0, 1, 2 if geographic else 1,  # GTModelType
        1025, 0, 1, 1,  # GTRasterType: PixelIsArea
        2048 if geographic else 3072, 0, 1, code,
    )


def write_geotiff(
    grid: RasterGrid,
    *,
    compression: str = "none",
    layout: str = "strip",
    block_size: int | None = None,
    byteorder: str = "<",
    scale_offset: tuple[float, float] | None = None,
) -> bytes:
    """Encode ``grid`` as GeoTIFF bytes.

    ``layout`` is ``"strip"`` (``block_size`` = rows per strip) or ``"tile"``
    (``block_size`` = tile edge, a multiple of 16). ``compression`` is
    ``"none"`` or ``"deflate"``. ``scale_offset`` declares GDAL SCALE/OFFSET
    metadata; the stored samples stay raw. Output is deterministic.
    """
    if compression not in ("none", "deflate"):
        raise ValueError(f"compression must be 'none' or 'deflate', got {compression!r}")
    if layout not in ("strip", "tile"):
        raise ValueError(f"layout must be 'strip' or 'tile', got {layout!r}")
    if byteorder not in ("<", ">"):
        raise ValueError("byteorder must be '<' or '>'")
    bo = byteorder
    values = grid.values
    sample_format, bits = _DTYPE_TO_SAMPLE[values.dtype]
    fdtype = values.dtype.newbyteorder(bo)
    height, width = values.shape

    def encode(block):
        raw = np.ascontiguousarray(block, dtype=fdtype).tobytes()
        return zlib.compress(raw, 6) if compression == "deflate" else raw

    blocks = []
    if layout == "tile":
        edge = block_size or 64
        if edge % 16 or edge <= 0:
            raise ValueError("tile size must be a positive multiple of 16")
        for r0 in range(0, height, edge):
            for c0 in range(0, width, edge):
                tile = np.zeros((edge, edge), dtype=values.dtype)
                part = values[r0:r0 + edge, c0:c0 + edge]
                tile[:part.shape[0], :part.shape[1]] = part
                blocks.append(encode(tile))
    else:
        rps = block_size or max(1, min(height, 8192 // max(1, width * values.dtype.itemsize)))
        if rps <= 0:
            raise ValueError("rows per strip must be positive")
        rps = min(rps, height)
        for r0 in range(0, height, rps):
            blocks.append(encode(values[r0:r0 + rps]))

    meta = {"band_kind": grid.band_kind.value, "crs": grid.crs_tag}
    if grid.timestamp is not None:
        meta["timestamp"] = grid.timestamp
    description = json.dumps(meta, sort_keys=True, separators=(",", ":"))
    gdal_metadata = None
    if scale_offset is not None:
        gain, bias = (float(v) for v in scale_offset)
        gdal_metadata = (
            f'<GDALMetadata><Item name="SCALE" sample="0" role="scale">{gain!r}</Item>'
            f'<Item name="OFFSET" sample="0" role="offset">{bias!r}</Item></GDALMetadata>'
        )

    def entries(block_offsets):
        e = [
            (TAG_WIDTH, _T_LONG, [width]),
            (TAG_HEIGHT, _T_LONG, [height]),
            (TAG_BITS, _T_SHORT, [bits]),
            (TAG_COMPRESSION, _T_SHORT, [8 if compression == "deflate" else 1]),
            (TAG_PHOTOMETRIC, _T_SHORT, [1]),
            (TAG_DESCRIPTION, _T_ASCII, description),
            (TAG_SPP, _T_SHORT, [1]),
            (TAG_PLANAR, _T_SHORT, [1]),
            (TAG_SAMPLE_FORMAT, _T_SHORT, [sample_format]),
            (TAG_PIXEL_SCALE, _T_DOUBLE, [grid.pixel_scale_x, grid.pixel_scale_y, 0.0]),
            (TAG_TIEPOINT, _T_DOUBLE, [0.0, 0.0, 0.0, grid.origin_x, grid.origin_y, 0.0]),
        ]
        counts = [len(b) for b in blocks]
        if layout == "tile":
            e += [
                (TAG_TILE_WIDTH, _T_LONG, [edge]),
                (TAG_TILE_LENGTH, _T_LONG, [edge]),
                (TAG_TILE_OFFSETS, _T_LONG, block_offsets),
                (TAG_TILE_COUNTS, _T_LONG, counts),
            ]
        else:
            e += [
                (TAG_STRIP_OFFSETS, _T_LONG, block_offsets),
                (TAG_ROWS_PER_STRIP, _T_LONG, [rps]),
                (TAG_STRIP_COUNTS, _T_LONG, counts),
            ]
        geokeys = _geokey_directory(grid.crs_tag)
        if geokeys:
            e.append((TAG_GEOKEYS, _T_SHORT, list(geokeys)))
        if scale_offset is not None:
            e.append((TAG_GDAL_METADATA, _T_ASCII, gdal_metadata))
        if grid.nodata is not None:
            e.append((TAG_GDAL_NODATA, _T_ASCII, _format_nodata(grid)))
        return sorted(e, key=lambda t: t[0])

    def payload(typ, vals):
        if typ == _T_ASCII:
            return vals.encode("latin-1") + b"\x00"
        return struct.pack(bo + _TYPE_FMT[typ] * len(vals), *vals)

    ifd_offset = 8
    n_entries = len(entries([0] * len(blocks)))
    extra_start = ifd_offset + 2 + 12 * n_entries + 4

    def layout_extra(ents):
        pos = extra_start
        placed = []
        for tag, typ, vals in ents:
            p = payload(typ, vals)
            if len(p) > 4:
                placed.append((tag, typ, vals, p, pos))
                pos += len(p) + (len(p) & 1)
            else:
                placed.append((tag, typ, vals, p, None))
        return placed, pos

    _, data_start = layout_extra(entries([0] * len(blocks)))
    block_offsets = []
    pos = data_start
    for b in blocks:
        block_offsets.append(pos)
        pos += len(b) + (len(b) & 1)
    placed, end = layout_extra(entries(block_offsets))
    assert end == data_start

    out = bytearray(b"II" if bo == "<" else b"MM")
    out += struct.pack(bo + "HI", 42, ifd_offset)
    out += struct.pack(bo + "H", len(placed))
    extra = bytearray()
    for tag, typ, vals, p, where in placed:
        count = len(p) if typ == _T_ASCII else len(vals)
        if where is None:
            out += struct.pack(bo + "HHI", tag, typ, count) + p.ljust(4, b"\x00")
        else:
            out += struct.pack(bo + "HHII", tag, typ, count, where)
            extra += p + (b"\x00" if len(p) & 1 else b"")
    out += struct.pack(bo + "I", 0)
    out += extra
    for b in blocks:
        out += b + (b"\x00" if len(b) & 1 else b"")
    return bytes(out)


def read_geotiff(path, **kwargs) -> RasterGrid:
    with open(path, "rb") as fh:
        return parse_geotiff(fh.read(), **kwargs)


def save_geotiff(grid: RasterGrid, path, **kwargs) -> None:
    with open(path, "wb") as fh:
        fh.write(write_geotiff(grid, **kwargs))
