"""Per-site reports: flag rules, canonical JSON and SVG time-series charts."""
from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timedelta
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .errors import EmptySeries, NoAnalyses
from .sites import BBoxAOI, CircleAOI, Site, SiteStatus
from .timeseries import VARIABLE_UNITS, Direction, HarmonicFit, ObservationSeries, TrendResult, predict

__all__ = [
    "NdviSection",
    "NtlSection",
    "UvaiSection",
    "EnergySection",
    "SiteReport",
    "FLAG_VEGETATION_DECLINE",
    "FLAG_NTL_SURGE",
    "FLAG_UVAI_INCREASE",
    "DEFAULT_SURGE_THRESHOLD",
    "build_report",
    "derive_flags",
    "render_json",
    "report_from_json",
    "render_svg_timeseries",
    "write_atomic",
]

FLAG_VEGETATION_DECLINE = "vegetation-decline"
FLAG_NTL_SURGE = "ntl-surge"
FLAG_UVAI_INCREASE = "uvai-increase"
DEFAULT_SURGE_THRESHOLD = 10.0
SIGNIFICANT_DIGITS = 9


def _canon(x):
    """Round floats to 9 significant digits; non-finite becomes None."""
    if isinstance(x, bool) or x is None or isinstance(x, (str, int, Direction)):
        return x
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.{SIGNIFICANT_DIGITS}g}") if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, dict):
        return {k: _canon(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return type(x)(_canon(v) for v in x)
    raise TypeError(f"cannot canonicalise {type(x).__name__}")


def _canon_trend(tr: TrendResult | None):
    if tr is None:
        return None
    return dataclasses.replace(
        tr, **{f.name: _canon(getattr(tr, f.name)) for f in dataclasses.fields(tr) if f.name != "direction"}
    )


@dataclass(frozen=True)
class NdviSection:
    fit: dict | None
    trend: TrendResult

    @classmethod
    def from_analysis(cls, fit: HarmonicFit | None, trend: TrendResult):
        summary = None
        if fit is not None:
            summary = fit.to_dict()
            summary["beta_per_year"] = fit.beta_per_year
            summary["amplitude"] = fit.amplitude
        return cls(summary, trend)

    def canonical(self):
        return NdviSection(_canon(self.fit), _canon_trend(self.trend))

    def to_dict(self):
        d = {"trend": self.trend.to_dict()}
        if self.fit is not None:
            d["fit"] = self.fit
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("fit"), TrendResult.from_dict(d["trend"]))


@dataclass(frozen=True)
class NtlSection:
    annual: dict  # year -> value
    ratio: float | None
    baseline_year: int | None
    target_year: int | None
    dips: tuple = ()
    trend: TrendResult | None = None

    def canonical(self):
        return NtlSection(
            {int(k): _canon(v) for k, v in sorted(self.annual.items())},
            _canon(self.ratio),
            self.baseline_year,
            self.target_year,
            tuple(int(y) for y in self.dips),
            _canon_trend(self.trend),
        )

    def to_dict(self):
        d = {
            "annual": {str(k): v for k, v in sorted(self.annual.items())},
            "ratio": self.ratio,
            "baseline_year": self.baseline_year,
            "target_year": self.target_year,
            "dips": list(self.dips),
        }
        if self.trend is not None:
            d["trend"] = self.trend.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            {int(k): v for k, v in d["annual"].items()},
            d.get("ratio"),
            d.get("baseline_year"),
            d.get("target_year"),
            tuple(d.get("dips", ())),
            TrendResult.from_dict(d["trend"]) if "trend" in d else None,
        )


@dataclass(frozen=True)
class UvaiSection:
    trend: TrendResult

    def canonical(self):
        return UvaiSection(_canon_trend(self.trend))

    def to_dict(self):
        return {"trend": self.trend.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(TrendResult.from_dict(d["trend"]))


@dataclass(frozen=True)
class EnergySection:
    zone_id: str | None
    year: int | None
    carbon_intensity_gco2_kwh: float | None
    low_carbon_fraction: float | None = None
    renewable_fraction: float | None = None
    fleet: dict | None = None

    def canonical(self):
        return dataclasses.replace(self, **{
            k: _canon(getattr(self, k))
            for k in ("carbon_intensity_gco2_kwh", "low_carbon_fraction", "renewable_fraction", "fleet")
        })

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _site_to_dict(site: Site):
    aoi = site.aoi
    if isinstance(aoi, CircleAOI):
        aoi_d = {"kind": "circle", "radius_m": aoi.radius_m}
    else:
        aoi_d = {"kind": "bbox", "bbox": [aoi.min_lon, aoi.min_lat, aoi.max_lon, aoi.max_lat]}
    d = {
        "id": site.id,
        "name": site.name,
        "operator": site.operator,
        "status": site.status.value,
        "lat": site.lat,
        "lon": site.lon,
        "aoi": aoi_d,
        "zone_id": site.zone_id,
    }
    if site.map_xy is not None:
        d["map_xy"] = list(site.map_xy)
    return d


def _site_from_dict(d):
    a = d["aoi"]
    aoi = CircleAOI(a["radius_m"]) if a["kind"] == "circle" else BBoxAOI(*a["bbox"])
    return Site(
        id=d["id"],
        name=d["name"],
        operator=d["operator"],
        status=SiteStatus(d["status"]),
        lat=d["lat"],
        lon=d["lon"],
        aoi=aoi,
        zone_id=d.get("zone_id"),
        map_xy=tuple(d["map_xy"]) if d.get("map_xy") is not None else None,
    )


def _canon_site(site: Site) -> Site:
    aoi = site.aoi
    if isinstance(aoi, CircleAOI):
        aoi = CircleAOI(_canon(float(aoi.radius_m)))
    else:
        aoi = BBoxAOI(*(_canon(float(v)) for v in (aoi.min_lon, aoi.min_lat, aoi.max_lon, aoi.max_lat)))
    map_xy = tuple(_canon(float(v)) for v in site.map_xy) if site.map_xy is not None else None
    return dataclasses.replace(site, lat=_canon(float(site.lat)), lon=_canon(float(site.lon)), aoi=aoi, map_xy=map_xy)


@dataclass(frozen=True)
class SiteReport:
    site: Site
    ndvi: NdviSection | None = None
    ntl: NtlSection | None = None
    uvai: UvaiSection | None = None
    energy: EnergySection | None = None
    flags: tuple = ()
    surge_threshold: float = DEFAULT_SURGE_THRESHOLD
    generated_at: str = ""
    tool_version: str = __version__

    def to_dict(self):
        d = {
            "site": _site_to_dict(self.site),
            "flags": list(self.flags),
            "surge_threshold": self.surge_threshold,
            "generated_at": self.generated_at,
            "tool_version": self.tool_version,
        }
        for name in ("ndvi", "ntl", "uvai", "energy"):
            section = getattr(self, name)
            if section is not None:
                d[name] = section.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            site=_site_from_dict(d["site"]),
            ndvi=NdviSection.from_dict(d["ndvi"]) if "ndvi" in d else None,
            ntl=NtlSection.from_dict(d["ntl"]) if "ntl" in d else None,
            uvai=UvaiSection.from_dict(d["uvai"]) if "uvai" in d else None,
            energy=EnergySection.from_dict(d["energy"]) if "energy" in d else None,
            flags=tuple(d.get("flags", ())),
            surge_threshold=d.get("surge_threshold", DEFAULT_SURGE_THRESHOLD),
            generated_at=d.get("generated_at", ""),
            tool_version=d.get("tool_version", ""),
        )


def derive_flags(ndvi=None, ntl=None, uvai=None, surge_threshold=DEFAULT_SURGE_THRESHOLD) -> tuple:
    flags = []
    if ndvi is not None and ndvi.trend.direction == Direction.DECREASING:
        flags.append(FLAG_VEGETATION_DECLINE)
    if ntl is not None and ntl.ratio is not None and ntl.ratio >= surge_threshold:
        flags.append(FLAG_NTL_SURGE)
    if uvai is not None and uvai.trend.direction == Direction.INCREASING:
        flags.append(FLAG_UVAI_INCREASE)
    return tuple(flags)


def build_report(
    site: Site,
    *,
    ndvi: NdviSection | None = None,
    ntl: NtlSection | None = None,
    uvai: UvaiSection | None = None,
    energy: EnergySection | None = None,
    surge_threshold: float = DEFAULT_SURGE_THRESHOLD,
    generated_at: str = "",
    tool_version: str = __version__,
) -> SiteReport:
    """Assemble a report and derive its flags.

    Numbers are rounded to 9 significant digits here, so the report equals
    its own JSON round trip.
    """
    if ndvi is None and ntl is None and uvai is None and energy is None:
        raise NoAnalyses(f"site {site.id}: nothing to report")
    if not surge_threshold > 0:
        raise ValueError("surge_threshold must be positive")
    ndvi = ndvi.canonical() if ndvi else None
    ntl = ntl.canonical() if ntl else None
    uvai = uvai.canonical() if uvai else None
    energy = energy.canonical() if energy else None
    surge_threshold = _canon(float(surge_threshold))
    return SiteReport(
        site=_canon_site(site),
        ndvi=ndvi,
        ntl=ntl,
        uvai=uvai,
        energy=energy,
        flags=derive_flags(ndvi, ntl, uvai, surge_threshold),
        surge_threshold=surge_threshold,
        generated_at=generated_at,
        tool_version=tool_version,
    )


def render_json(report: SiteReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def report_from_json(text: str) -> SiteReport:
    return SiteReport.from_dict(json.loads(text))


def write_atomic(path, content) -> None:
    """Write text or bytes to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    data = content.encode("utf-8") if isinstance(content, str) else content
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# SVG


def _nice_ticks(lo, hi, target=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    n = int(math.floor((hi - first) / step + 1e-9)) + 1
    return [first + k * step for k in range(n)]


def _fmt_num(v):
    return f"{v:.2f}"


def _tick_label(v):
    return f"{v:.6g}"


def render_svg_timeseries(
    series: ObservationSeries,
    fit: HarmonicFit | None = None,
    title: str = "",
    *,
    width: int = 720,
    height: int = 400,
    samples: int = 240,
) -> str:
    """Static SVG scatter of ``series`` with an optional fitted curve.

    Observations are ``<circle class="obs">`` markers; the fit is a single
    ``<path class="fit">`` sampled at ``samples`` points across the time span.
    """
    if len(series) == 0:
        raise EmptySeries("cannot plot an empty series")
    left, right, top, bottom = 72, 20, 40, 56
    pw, ph = width - left - right, height - top - bottom

    t = series.t
    t0, t1 = float(t[0]), float(t[-1])
    if t1 == t0:
        t0, t1 = t0 - 1.0, t1 + 1.0
    curve_t = curve_v = None
    ys = list(series.values)
    if fit is not None:
        curve_t = np.linspace(t0, t1, max(samples, 100))
        curve_v = np.asarray(predict(fit, curve_t))
        ys.extend(curve_v.tolist())
    y0, y1 = min(ys), max(ys)
    pad = 0.05 * (y1 - y0) if y1 > y0 else max(abs(y0) * 0.05, 0.5)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return left + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    name, units = VARIABLE_UNITS.get(series.variable, (series.variable, "units"))
    base = datetime.combine(series.epoch, datetime.min.time())
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(title or name)}</title>',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text class="title" x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title or name)}</text>',
        f'<g class="axes" stroke="black" stroke-width="1">'
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>'
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/></g>',
    ]

    # x ticks at January 1st when the span covers years, else in days
    d0, d1 = base + timedelta(days=t0), base + timedelta(days=t1)
    if d1.year - d0.year >= 1:
        years = range(d0.year + (d0 > datetime(d0.year, 1, 1)), d1.year + 1)
        step = max(1, math.ceil(len(years) / 10))
        xticks = [((datetime(y, 1, 1) - base).days, str(y)) for y in years[::step]]
        xlabel = "Date (year)"
    else:
        xticks = [(v, _tick_label(v)) for v in _nice_ticks(t0, t1)]
        xlabel = f"Days since {series.epoch.isoformat()}"
    out.append('<g class="xticks" text-anchor="middle">')
    for v, label in xticks:
        x = sx(v)
        out.append(
            f'<line x1="{_fmt_num(x)}" y1="{top + ph}" x2="{_fmt_num(x)}" y2="{top + ph + 5}" stroke="black"/>'
            f'<text x="{_fmt_num(x)}" y="{top + ph + 18}">{escape(label)}</text>'
        )
    out.append("</g>")
    out.append('<g class="yticks" text-anchor="end">')
    for v in _nice_ticks(y0, y1):
        y = sy(v)
        out.append(
            f'<line x1="{left - 5}" y1="{_fmt_num(y)}" x2="{left}" y2="{_fmt_num(y)}" stroke="black"/>'
            f'<text x="{left - 8}" y="{_fmt_num(y + 4)}">{escape(_tick_label(v))}</text>'
        )
    out.append("</g>")
    out.append(f'<text class="xlabel" x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text class="ylabel" x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(f"{name} ({units})")}</text>'
    )

    if curve_t is not None:
        pts = " L ".join(f"{_fmt_num(sx(a))},{_fmt_num(sy(b))}" for a, b in zip(curve_t, curve_v))
        out.append(f'<path class="fit" d="M {pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    out.append('<g class="observations" fill="#1f77b4">')
    for a, b in zip(series.t, series.values):
        out.append(f'<circle class="obs" cx="{_fmt_num(sx(a))}" cy="{_fmt_num(sy(b))}" r="3"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
