"""Datacenter site records, their areas of interest, and AOI pixel masks."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AoiError, ValidationError
from .raster_io import RasterGrid, is_geographic_crs

__all__ = [
    "SiteStatus",
    "CircleAOI",
    "BBoxAOI",
    "Site",
    "PixelMask",
    "DEFAULT_RADIUS_M",
    "EARTH_RADIUS_M",
    "load_sites",
    "sites_to_csv",
    "haversine_m",
    "aoi_mask",
]

DEFAULT_RADIUS_M = 2000.0
EARTH_RADIUS_M = 6_371_000.0

CSV_COLUMNS = ("id", "name", "operator", "status", "lat", "lon", "aoi_kind", "aoi_params", "zone_id")


class SiteStatus(str, Enum):
    EXISTING = "existing"
    PROPOSED = "proposed"


@dataclass(frozen=True)
class CircleAOI:
    radius_m: float

    kind = "circle"

    def params(self):
        return _fmt(self.radius_m)


@dataclass(frozen=True)
class BBoxAOI:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    kind = "bbox"

    def params(self):
        return " ".join(_fmt(v) for v in (self.min_lon, self.min_lat, self.max_lon, self.max_lat))


def _fmt(v):
    return repr(float(v)).removesuffix(".0") if float(v).is_integer() else repr(float(v))


@dataclass(frozen=True)
class Site:
    """A datacenter location.

    For grids in a projected CRS the AOI is placed in map units: the circle is
    centred on ``map_xy`` and bbox bounds are read as map coordinates.
    """

    id: str
    name: str
    operator: str
    status: SiteStatus
    lat: float
    lon: float
    aoi: CircleAOI | BBoxAOI = CircleAOI(DEFAULT_RADIUS_M)
    zone_id: str | None = None
    map_xy: tuple[float, float] | None = None


@dataclass(frozen=True, eq=False)
class PixelMask:
    selected: np.ndarray

    @property
    def width(self):
        return self.selected.shape[1]

    @property
    def height(self):
        return self.selected.shape[0]

    @property
    def count(self):
        return int(self.selected.sum())

    def __eq__(self, other):
        return isinstance(other, PixelMask) and np.array_equal(self.selected, other.selected)

    __hash__ = None


# ---------------------------------------------------------------------------
# loading


def _float(raw, record, field, issues):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        issues.append((record, field, f"not a number: {raw!r}"))
        return None
    if not math.isfinite(v):
        issues.append((record, field, f"not finite: {raw!r}"))
        return None
    return v


def _parse_aoi(kind, params, default_radius_m, record, issues):
    kind = (kind or "").strip().lower()
    if isinstance(params, str):
        parts = [p for p in params.replace(";", " ").replace(",", " ").split() if p]
    elif params is None:
        parts = []
    elif isinstance(params, (int, float)):
        parts = [params]
    else:
        parts = list(params)
    if kind in ("", "default") and not parts:
        return CircleAOI(default_radius_m)
    if kind in ("circle", ""):
        if len(parts) != 1:
            issues.append((record, "aoi_params", "circle AOI takes one radius in meters"))
            return None
        r = _float(parts[0], record, "aoi_params", issues)
        if r is None:
            return None
        if r <= 0:
            issues.append((record, "aoi_params", f"radius must be positive, got {r}"))
            return None
        return CircleAOI(r)
    if kind == "bbox":
        if len(parts) != 4:
            issues.append((record, "aoi_params", "bbox AOI takes min_lon min_lat max_lon max_lat"))
            return None
        vals = [_float(p, record, "aoi_params", issues) for p in parts]
        if any(v is None for v in vals):
            return None
        box = BBoxAOI(*vals)
        if not (box.min_lon < box.max_lon and box.min_lat < box.max_lat):
            issues.append((record, "aoi_params", "bbox minimum must be below maximum on both axes"))
            return None
        return box
    issues.append((record, "aoi_kind", f"unknown AOI kind {kind!r}"))
    return None


def _build_site(props, record, default_radius_m, issues, seen):
    n_before = len(issues)
    sid = str(props.get("id") or "").strip()
    if not sid:
        issues.append((record, "id", "missing id"))
    elif sid in seen:
        issues.append((record, "id", f"duplicate id {sid!r}"))
    status_raw = str(props.get("status") or "").strip().lower()
    try:
        status = SiteStatus(status_raw)
    except ValueError:
        status = None
        issues.append((record, "status", f"unknown status {status_raw!r}"))
    lat = _float(props.get("lat"), record, "lat", issues)
    if lat is not None and not -90 <= lat <= 90:
        issues.append((record, "lat", f"latitude {lat} outside [-90, 90]"))
    lon = _float(props.get("lon"), record, "lon", issues)
    if lon is not None and not -180 <= lon <= 180:
        issues.append((record, "lon", f"longitude {lon} outside [-180, 180]"))
    aoi = _parse_aoi(props.get("aoi_kind"), props.get("aoi_params"), default_radius_m, record, issues)
    map_xy = None
    if props.get("map_x") not in (None, "") or props.get("map_y") not in (None, ""):
        mx = _float(props.get("map_x"), record, "map_x", issues)
        my = _float(props.get("map_y"), record, "map_y", issues)
        if mx is not None and my is not None:
            map_xy = (mx, my)
    if len(issues) > n_before:
        return None
    seen.add(sid)
    zone = props.get("zone_id")
    zone = str(zone).strip() if zone not in (None, "") else None
    return Site(
        id=sid,
        name=str(props.get("name") or ""),
        operator=str(props.get("operator") or ""),
        status=status,
        lat=lat,
        lon=lon,
        aoi=aoi,
        zone_id=zone or None,
        map_xy=map_xy,
    )


def _records_from_geojson(text):
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ValidationError([(None, None, f"invalid GeoJSON: {exc}")]) from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise ValidationError([(None, "type", "expected a GeoJSON FeatureCollection")])
    out = []
    for i, feat in enumerate(doc.get("features") or []):
        props = dict((feat or {}).get("properties") or {})
        geom = (feat or {}).get("geometry") or {}
        if geom.get("type") != "Point" or len(geom.get("coordinates") or ()) < 2:
            props["_geometry_error"] = "geometry must be a Point"
        else:
            props["lon"], props["lat"] = geom["coordinates"][:2]
        aoi = props.get("aoi")
        if isinstance(aoi, dict):
            props.setdefault("aoi_kind", aoi.get("kind"))
            props.setdefault("aoi_params", aoi.get("radius_m", aoi.get("bbox")))
        out.append((props.get("id") or f"#{i + 1}", props))
    return out


def _records_from_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in ("id", "status", "lat", "lon") if c not in (reader.fieldnames or ())]
    if reader.fieldnames and missing:
        raise ValidationError([(None, c, "column missing from header") for c in missing])
    return [(row.get("id") or f"line {reader.line_num}", row) for row in reader]


def load_sites(text: str, *, default_radius_m: float = DEFAULT_RADIUS_M) -> list[Site]:
    """Parse a CSV or GeoJSON site document.

    CSV header: ``id,name,operator,status,lat,lon,aoi_kind,aoi_params,zone_id``
    (optional ``map_x,map_y``). ``aoi_params`` is a radius in meters for
    ``circle`` or four space-separated bounds for ``bbox``; an empty AOI means
    a circle of ``default_radius_m``.

    All records are checked before raising, so a single
    :class:`~dcwatch.errors.ValidationError` lists every problem.
    """
    stripped = text.lstrip()
    if not stripped:
        return []
    records = _records_from_geojson(stripped) if stripped.startswith("{") else _records_from_csv(text)
    issues = []
    seen = set()
    sites = []
    for record, props in records:
        if "_geometry_error" in props:
            issues.append((record, "geometry", props["_geometry_error"]))
            continue
        site = _build_site(props, record, default_radius_m, issues, seen)
        if site is not None:
            sites.append(site)
    if issues:
        raise ValidationError(issues)
    return sites


def sites_to_csv(sites) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in sites:
        w.writerow([s.id, s.name, s.operator, s.status.value, repr(s.lat), repr(s.lon),
                    s.aoi.kind, s.aoi.params(), s.zone_id or ""])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# masks


def haversine_m(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_M):
    """Great-circle distance in meters; broadcasts over numpy arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def aoi_mask(site: Site, grid: RasterGrid) -> PixelMask:
    """Select the pixels of ``grid`` whose centers fall inside the site's AOI.

    Circles use haversine distance for geographic grids and Euclidean
    distance for projected grids; bbox bounds are inclusive.
    """
    xs, ys = grid.pixel_centers()
    geographic = is_geographic_crs(grid.crs_tag)
    aoi = site.aoi
    if isinstance(aoi, BBoxAOI):
        sel = (xs >= aoi.min_lon) & (xs <= aoi.max_lon) & (ys >= aoi.min_lat) & (ys <= aoi.max_lat)
    elif geographic:
        sel = haversine_m(site.lat, site.lon, ys, xs) <= aoi.radius_m
    else:
        if site.map_xy is None:
            raise AoiError(
                f"site {site.id}: grid CRS {grid.crs_tag!r} is projected; map_xy is needed to place the AOI"
            )
        cx, cy = site.map_xy
        sel = np.hypot(xs - cx, ys - cy) <= aoi.radius_m
    return PixelMask(np.asarray(sel, dtype=bool))
