"""Spectral indices, AOI zonal statistics and per-site series extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyMask, GridMismatch
from .raster_io import LANDSAT_C2_QA, BandKind, QaBitSpec, RasterGrid, qa_usable
from .sites import PixelMask, Site, aoi_mask
from .timeseries import DEFAULT_EPOCH, ObservationSeries

__all__ = ["BandPair", "ZonalStats", "NDVI_NODATA", "ndvi", "ndvi_array", "zonal_mean", "extract_series"]

NDVI_NODATA = -9999.0


@dataclass(frozen=True)
class BandPair:
    nir: RasterGrid
    red: RasterGrid
    qa: RasterGrid | None = None

    def __post_init__(self):
        for name, other in (("red", self.red), ("qa", self.qa)):
            if other is None:
                continue
            if not self.nir.same_geometry(other):
                raise GridMismatch(f"{name} grid geometry differs from nir")
            if other.timestamp != self.nir.timestamp:
                raise GridMismatch(f"{name} grid timestamp differs from nir")


class ZonalStats(NamedTuple):
    mean: float
    count: int
    stddev: float


def ndvi_array(nir, red):
    """Elementwise ``(nir - red) / (nir + red)``; NaN where the sum is zero."""
    nir = np.asarray(nir, dtype=np.float64)
    red = np.asarray(red, dtype=np.float64)
    total = nir + red
    out = np.full(np.broadcast(nir, red).shape, np.nan)
    np.divide(nir - red, total, out=out, where=total != 0)
    return out


def ndvi(pair: BandPair, qa_spec: QaBitSpec = LANDSAT_C2_QA, nodata: float = NDVI_NODATA) -> RasterGrid:
    """NDVI grid from a NIR/red reflectance pair.

    Pixels are set to ``nodata`` where either band is nodata, where the QA
    word has a reject bit set, or where ``nir + red == 0``.
    """
    out = ndvi_array(pair.nir.values, pair.red.values)
    invalid = pair.nir.nodata_mask() | pair.red.nodata_mask() | np.isnan(out)
    if pair.qa is not None:
        invalid |= ~qa_usable(pair.qa, qa_spec) | pair.qa.nodata_mask()
    out[invalid] = nodata
    return pair.nir.replace(values=out, nodata=nodata, band_kind=BandKind.INDEX)


def zonal_mean(grid: RasterGrid, mask: PixelMask) -> ZonalStats:
    """Mean, count and population standard deviation over selected valid pixels."""
    if mask.selected.shape != grid.values.shape:
        raise GridMismatch(f"mask shape {mask.selected.shape} != grid shape {grid.values.shape}")
    vals = grid.values[mask.selected & grid.valid_mask()].astype(np.float64).tolist()
    if not vals:
        raise EmptyMask("no selected pixel carries data")
    # correctly rounded sums, so the result does not depend on pixel order
    n = len(vals)
    mean = math.fsum(vals) / n
    var = math.fsum((v - mean) ** 2 for v in vals) / n
    return ZonalStats(mean, n, math.sqrt(var))


def extract_series(
    stack,
    site: Site,
    variable: str,
    *,
    qa_spec: QaBitSpec = LANDSAT_C2_QA,
    min_clear_fraction: float = 0.0,
    epoch=DEFAULT_EPOCH,
) -> ObservationSeries:
    """AOI-mean series for ``site`` from ``(timestamp, grid[, qa_grid])`` entries.

    QA screening happens before the statistics. A timestamp is dropped when no
    selected pixel survives screening, or when the surviving share of the
    AOI's pixels is below ``min_clear_fraction``. Nothing is imputed.
    """
    t, v = [], []
    mask_cache = {}
    for entry in stack:
        ts, grid = entry[0], entry[1]
        qa = entry[2] if len(entry) > 2 else None
        key = (grid.values.shape, grid.origin_x, grid.origin_y, grid.pixel_scale_x, grid.pixel_scale_y, grid.crs_tag)
        mask = mask_cache.get(key)
        if mask is None:
            mask = mask_cache[key] = aoi_mask(site, grid)
        selected = mask.selected
        if qa is not None:
            if not grid.same_geometry(qa):
                raise GridMismatch(f"QA grid at t={ts} does not match the data grid")
            selected = selected & qa_usable(qa, qa_spec) & qa.valid_mask()
        try:
            stats = zonal_mean(grid, PixelMask(selected))
        except EmptyMask:
            continue
        if min_clear_fraction > 0 and stats.count < min_clear_fraction * mask.count:
            continue
        t.append(float(ts))
        v.append(stats.mean)
    if len(set(t)) != len(t):
        raise ValueError("stack timestamps must be distinct")
    return ObservationSeries(variable, t, v, epoch=epoch)
