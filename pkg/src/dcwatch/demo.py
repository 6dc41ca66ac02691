"""Synthetic stand-in for a datacenter-growth region.

Generates a decade of Landsat-like NDVI band tiles with QA words, nine annual
nighttime-light grids with a one-year dip, monthly UV aerosol index grids, a
one-site registry and a one-row zone table. The effects are planted by
construction: seasonal NDVI (mean 0.6, amplitude 0.15) declining 0.01 per
year, NTL growing from about 1 to above 10 radiance units, UVAI rising 0.02
per year. Coordinates are a stand-in, not a surveyed location.
"""
from __future__ import annotations

import os
from datetime import date, timedelta

import numpy as np

from .raster_io import BandKind, RasterGrid, save_geotiff
from .sites import Site, SiteStatus, CircleAOI, sites_to_csv

__all__ = ["DEMO_SITE", "DEMO_ZONE_ROW", "NTL_LEVELS", "generate_demo_inputs"]

DEMO_EPOCH = date(1970, 1, 1)
DEMO_SITE = Site(
    id="arcola-demo",
    name="Arcola, VA (stand-in)",
    operator="synthetic",
    status=SiteStatus.EXISTING,
    lat=38.95,
    lon=-77.53,
    aoi=CircleAOI(2000.0),
    zone_id="US-MIDA-PJM",
)
DEMO_ZONE_ROW = ("US-MIDA-PJM", 2023, 430.0, 0.39, 0.07)

NDVI_MEAN = 0.6
NDVI_AMPLITUDE = 0.15
NDVI_TREND_PER_YEAR = -0.01
NDVI_PIXEL_SIGMA = 0.02
NDVI_REVISIT_DAYS = 16
NDVI_START = date(2014, 1, 5)
NDVI_YEARS = 10
P_FULLY_CLOUDY = 0.6
P_PARTLY_CLOUDY = 0.25

NTL_FIRST_YEAR = 2014
# index 7 carries the dip
NTL_LEVELS = (1.0, 1.4, 2.2, 3.3, 4.8, 6.5, 8.3, 7.2, 10.6)

UVAI_START = date(2018, 7, 1)
UVAI_MONTHS = 72
UVAI_TREND_PER_YEAR = 0.02

QA_CLEAR = 1 << 6
QA_CLOUD = (1 << 3) | (1 << 1)


def _grid(values, site, pixel_deg, kind, t, nodata=None):
    h, w = values.shape
    # the site sits on a pixel center
    return RasterGrid(
        values=values,
        origin_x=site.lon - (w // 2 + 0.5) * pixel_deg,
        origin_y=site.lat + (h // 2 + 0.5) * pixel_deg,
        pixel_scale_x=pixel_deg,
        pixel_scale_y=pixel_deg,
        crs_tag="EPSG:4326",
        nodata=nodata,
        band_kind=kind,
        timestamp=t,
    )


def _days(d):
    return float((d - DEMO_EPOCH).days)


def _write(grid, directory, band, day):
    save_geotiff(grid, os.path.join(directory, f"{band}_{day:%Y%m%d}.tif"), compression="deflate")


def _ndvi_tiles(rng, site, directory, shape=(48, 56), pixel_deg=0.001):
    h, w = shape
    spatial = rng.normal(0.0, 0.03, shape)
    red_base = rng.uniform(0.04, 0.07, shape)
    mid = _days(NDVI_START) + NDVI_YEARS * 365.25 / 2
    yy, xx = np.mgrid[0:h, 0:w]
    day = NDVI_START
    end = date(NDVI_START.year + NDVI_YEARS, 1, 1)
    while day < end:
        t = _days(day)
        signal = (
            NDVI_MEAN
            + NDVI_TREND_PER_YEAR * (t - mid) / 365.25
            + NDVI_AMPLITUDE * np.sin(2 * np.pi * t / 365.0)
        )
        ndvi = np.clip(signal + spatial + rng.normal(0.0, NDVI_PIXEL_SIGMA, shape), -0.2, 0.95)
        red = red_base * (1 + rng.normal(0.0, 0.02, shape))
        nir = red * (1 + ndvi) / (1 - ndvi)
        qa = np.full(shape, QA_CLEAR, dtype=np.uint16)
        u = rng.random()
        if u < P_FULLY_CLOUDY:
            qa[:] = QA_CLOUD
        elif u < P_FULLY_CLOUDY + P_PARTLY_CLOUDY:
            cy, cx, r = rng.uniform(0, h), rng.uniform(0, w), rng.uniform(5, 20)
            qa[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = QA_CLOUD
        _write(_grid(nir.astype(np.float32), site, pixel_deg, BandKind.REFLECTANCE, t), directory, "nir", day)
        _write(_grid(red.astype(np.float32), site, pixel_deg, BandKind.REFLECTANCE, t), directory, "red", day)
        _write(_grid(qa, site, pixel_deg, BandKind.QA_BITS, t), directory, "qa", day)
        day += timedelta(days=NDVI_REVISIT_DAYS)


def _ntl_tiles(rng, site, directory, shape=(24, 24), pixel_deg=15 / 3600):
    for k, level in enumerate(NTL_LEVELS):
        day = date(NTL_FIRST_YEAR + k, 1, 1)
        vals = level * (1 + rng.normal(0.0, 0.05, shape))
        grid = _grid(np.clip(vals, 0, None).astype(np.float32), site, pixel_deg, BandKind.RADIANCE, _days(day))
        _write(grid, directory, "ntl_radiance", day)


def _uvai_tiles(rng, site, directory, shape=(12, 12), pixel_deg=0.01):
    t0 = _days(UVAI_START)
    for m in range(UVAI_MONTHS):
        y, mo = divmod(UVAI_START.month - 1 + m, 12)
        day = date(UVAI_START.year + y, mo + 1, 1)
        t = _days(day)
        level = (
            -0.6
            + UVAI_TREND_PER_YEAR * (t - t0) / 365.25
            + 0.05 * np.sin(2 * np.pi * t / 365.0)
            + rng.normal(0.0, 0.02)
        )
        vals = level + rng.normal(0.0, 0.05, shape)
        vals[rng.random(shape) < 0.1] = -9999.0
        grid = _grid(vals.astype(np.float32), site, pixel_deg, BandKind.INDEX, t, nodata=-9999.0)
        _write(grid, directory, "uvai", day)


def generate_demo_inputs(root, seed: int = 42) -> dict:
    """Write the synthetic inputs under ``root``; return the run-config fields."""
    rng = np.random.default_rng(seed)
    dirs = {v: os.path.join(root, "rasters", v) for v in ("ndvi", "ntl_radiance", "uvai")}
    for d in dirs.values():
        os.makedirs(d, exist_ok=True)
    sites_path = os.path.join(root, "sites.csv")
    with open(sites_path, "w", encoding="utf-8") as fh:
        fh.write(sites_to_csv([DEMO_SITE]))
    zones_path = os.path.join(root, "zones.csv")
    with open(zones_path, "w", encoding="utf-8") as fh:
        fh.write("zone_id,year,carbon_intensity_gco2_kwh,low_carbon_fraction,renewable_fraction\n")
        z, y, ci, lc, rn = DEMO_ZONE_ROW
        fh.write(f"{z},{y},{ci:g},{lc:g},{rn:g}\n")
    _ndvi_tiles(rng, DEMO_SITE, dirs["ndvi"])
    _ntl_tiles(rng, DEMO_SITE, dirs["ntl_radiance"])
    _uvai_tiles(rng, DEMO_SITE, dirs["uvai"])
    return {
        "sites_path": sites_path,
        "zone_intensity_path": zones_path,
        "raster_dirs": dirs,
        "epoch": DEMO_EPOCH.isoformat(),
        "seed": seed,
    }
