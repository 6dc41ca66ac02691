"""Batch pipeline: load sites and raster stacks, analyse each site, write reports."""
from __future__ import annotations

import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timezone

from . import __version__
from .energy import fleet_average_intensity, load_zone_intensities, zone_record_for_year
from .errors import DcwatchError, InsufficientData, NoMatches, NonpositiveBaseline, RankDeficient
from .indices import BandPair, extract_series, ndvi
from .raster_io import LANDSAT_C2_QA, QaBitSpec, read_geotiff
from .report import (
    EnergySection,
    NdviSection,
    NtlSection,
    UvaiSection,
    build_report,
    render_json,
    render_svg_timeseries,
    write_atomic,
)
from .sites import load_sites
from .timeseries import (
    DEFAULT_EPOCH,
    annual_aggregate,
    annual_values,
    detect_dips,
    fit_harmonic,
    mann_kendall,
    ols_slope,
    change_ratio,
)

log = logging.getLogger(__name__)

VARIABLES = ("ndvi", "ntl_radiance", "uvai")
# accepted filename prefixes per variable directory
BAND_PREFIXES = {
    "ndvi": ("ndvi", "nir", "red", "qa"),
    "ntl_radiance": ("ntl_radiance", "ntl"),
    "uvai": ("uvai",),
}
FILENAME_RE = re.compile(r"^(?P<band>[a-z][a-z0-9_]*?)_(?P<date>\d{8})\.tiff?$")


class ConfigError(DcwatchError):
    pass


@dataclass
class RunConfig:
    sites_path: str | None = None
    raster_dirs: dict = field(default_factory=dict)
    zone_intensity_path: str | None = None
    output_dir: str = "out"
    aoi_default_radius_m: float = 2000.0
    qa_spec: QaBitSpec = LANDSAT_C2_QA
    include_trend: bool = True
    significance: float = 0.05
    surge_threshold: float = 10.0
    seed: int = 42
    epoch: date = DEFAULT_EPOCH
    min_clear_fraction: float = 0.0
    workers: int = 4
    energy_year: int | None = None
    generated_at: str | None = None
    apply_scale: bool = False

    def __post_init__(self):
        if isinstance(self.epoch, str):
            self.epoch = date.fromisoformat(self.epoch)
        if isinstance(self.qa_spec, dict):
            self.qa_spec = QaBitSpec.from_dict(self.qa_spec)
        unknown = set(self.raster_dirs) - set(VARIABLES)
        if unknown:
            raise ConfigError(f"unknown raster variables {sorted(unknown)}; expected {VARIABLES}")
        for name in ("aoi_default_radius_m", "surge_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.significance < 1:
            raise ConfigError("significance must lie in (0, 1)")
        if not 0 <= self.min_clear_fraction <= 1:
            raise ConfigError("min_clear_fraction must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path=None, **overrides):
        """Config from an optional JSON file with keyword overrides applied on top."""
        d = {}
        if path is not None:
            try:
                with open(path) as fh:
                    d = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            except ValueError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
            if not isinstance(d, dict):
                raise ConfigError(f"config {path} must be a JSON object")
        d.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["epoch"] = self.epoch.isoformat()
        d["qa_spec"] = self.qa_spec.to_dict()
        return d


# ---------------------------------------------------------------------------
# raster stacks


def _scan(directory, prefixes):
    """``{date: {band: path}}`` for files named ``<band>_<YYYYMMDD>.tif``."""
    found = {}
    for name in sorted(os.listdir(directory)):
        m = FILENAME_RE.match(name)
        if not m or m.group("band") not in prefixes:
            continue
        day = datetime.strptime(m.group("date"), "%Y%m%d").date()
        found.setdefault(day, {})[m.group("band")] = os.path.join(directory, name)
    return found


def load_stack(directory, variable, config: RunConfig):
    """Read one variable's directory into ``[(t_days, grid), ...]`` sorted by time.

    NDVI directories hold either ``ndvi_<date>.tif`` or ``nir_``/``red_``
    (optionally ``qa_``) triplets; NDVI is then computed with QA screening.
    Timestamps come from the filenames, in days since ``config.epoch``.
    """
    stack = []
    for day, bands in sorted(_scan(directory, BAND_PREFIXES[variable]).items()):
        t = float((day - config.epoch).days)
        read = lambda b: read_geotiff(bands[b], apply_scale=config.apply_scale)  # noqa: E731
        if variable == "ndvi":
            if "ndvi" in bands:
                entry = (t, read("ndvi"), read("qa")) if "qa" in bands else (t, read("ndvi"))
            elif "nir" in bands and "red" in bands:
                qa = read("qa") if "qa" in bands else None
                pair = BandPair(read("nir"), read("red"), qa)
                entry = (t, ndvi(pair, config.qa_spec))
            else:
                log.warning("%s: %s has no ndvi or nir/red pair; skipped", directory, day)
                continue
        else:
            band = next(b for b in BAND_PREFIXES[variable] if b in bands)
            entry = (t, read(band))
        stack.append(entry)
    return stack


# ---------------------------------------------------------------------------
# per-site analysis


@dataclass
class SiteOutcome:
    site_id: str
    report: object = None
    series: dict = field(default_factory=dict)
    error: str | None = None
    notes: list = field(default_factory=list)


def _as_of(series_by_var, config):
    if config.generated_at:
        return config.generated_at
    sde = os.environ.get("SOURCE_DATE_EPOCH")
    if sde:
        return datetime.fromtimestamp(int(sde), tz=timezone.utc).isoformat()
    latest = [s.dates()[-1] for s in series_by_var.values() if len(s)]
    return max(latest).date().isoformat() if latest else config.epoch.isoformat()


def analyse_site(site, stacks, zone_records, all_sites, config: RunConfig) -> SiteOutcome:
    out = SiteOutcome(site.id)
    alpha = config.significance
    sections = {}
    extract = dict(qa_spec=config.qa_spec, min_clear_fraction=config.min_clear_fraction, epoch=config.epoch)

    if stacks.get("ndvi"):
        series = extract_series(stacks["ndvi"], site, "ndvi", **extract)
        out.series["ndvi"] = series
        if len(series) >= 2:
            fit = None
            try:
                fit = fit_harmonic(series, include_trend=config.include_trend)
            except (InsufficientData, RankDeficient) as exc:
                out.notes.append(f"ndvi fit skipped: {exc}")
            sections["ndvi"] = NdviSection.from_analysis(fit, mann_kendall(series, alpha))
            out.series["ndvi_fit"] = fit
        else:
            out.notes.append(f"ndvi: {len(series)} usable observations; section omitted")

    if stacks.get("ntl_radiance"):
        series = extract_series(stacks["ntl_radiance"], site, "ntl_radiance", **extract)
        annual = annual_aggregate(series, "mean")
        out.series["ntl_radiance"] = annual
        by_year = annual_values(annual)
        if len(by_year) >= 2:
            first, last = min(by_year), max(by_year)
            try:
                ratio = change_ratio(annual, first, last)
            except NonpositiveBaseline as exc:
                ratio = None
                out.notes.append(f"ntl ratio undefined: {exc}")
            sections["ntl"] = NtlSection(
                annual=by_year,
                ratio=ratio,
                baseline_year=first,
                target_year=last,
                dips=tuple(detect_dips(annual)) if len(by_year) >= 3 else (),
                trend=ols_slope(annual, alpha) if len(by_year) >= 3 else None,
            )
        else:
            out.notes.append(f"ntl: {len(by_year)} annual values; section omitted")

    if stacks.get("uvai"):
        series = extract_series(stacks["uvai"], site, "uvai", **extract)
        out.series["uvai"] = series
        if len(series) >= 2:
            sections["uvai"] = UvaiSection(mann_kendall(series, alpha))
        else:
            out.notes.append(f"uvai: {len(series)} usable observations; section omitted")

    if zone_records and site.zone_id:
        year = config.energy_year or max(r.year for r in zone_records)
        rec = zone_record_for_year(zone_records, site.zone_id, year)
        if rec is not None:
            try:
                fleet = fleet_average_intensity(all_sites, zone_records, year).to_dict()
            except NoMatches:
                fleet = None
            sections["energy"] = EnergySection(
                zone_id=rec.zone_id,
                year=rec.year,
                carbon_intensity_gco2_kwh=rec.carbon_intensity,
                low_carbon_fraction=rec.low_carbon_fraction,
                renewable_fraction=rec.renewable_fraction,
                fleet=fleet,
            )
        else:
            out.notes.append(f"energy: no record for zone {site.zone_id} in or before {year}")

    out.report = build_report(
        site,
        surge_threshold=config.surge_threshold,
        generated_at=_as_of({k: v for k, v in out.series.items() if k in VARIABLES}, config),
        tool_version=__version__,
        **sections,
    )
    return out


def write_outputs(outcome: SiteOutcome, output_dir) -> list[str]:
    written = []
    report = outcome.report
    path = os.path.join(output_dir, f"{outcome.site_id}.report.json")
    write_atomic(path, render_json(report))
    written.append(path)
    titles = {
        "ndvi": "Vegetation index (NDVI)",
        "ntl_radiance": "Annual nighttime lights",
        "uvai": "UV aerosol index",
    }
    for var in VARIABLES:
        series = outcome.series.get(var)
        if series is None or len(series) == 0:
            continue
        fit = outcome.series.get("ndvi_fit") if var == "ndvi" else None
        svg = render_svg_timeseries(series, fit, f"{titles[var]}: {report.site.name or report.site.id}")
        path = os.path.join(output_dir, f"{outcome.site_id}.{var}.svg")
        write_atomic(path, svg)
        written.append(path)
    return written


@dataclass
class RunResult:
    outcomes: list
    exit_code: int


def _read_text(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None


def run(config: RunConfig) -> RunResult:
    """Execute the full pipeline. Raises :class:`ConfigError` for I/O/config problems."""
    if not config.sites_path:
        raise ConfigError("sites_path is required")
    sites = load_sites(_read_text(config.sites_path, "sites file"), default_radius_m=config.aoi_default_radius_m)
    zone_records = []
    if config.zone_intensity_path:
        zone_records = load_zone_intensities(_read_text(config.zone_intensity_path, "zone table"))

    present = {v: d for v, d in config.raster_dirs.items() if d and os.path.isdir(d)}
    if not present:
        raise ConfigError("no raster directory exists for any variable")
    for v, d in config.raster_dirs.items():
        if v not in present:
            log.warning("raster directory for %s not found: %s", v, d)

    os.makedirs(config.output_dir, exist_ok=True)
    shared = {}

    def shared_stack(var):
        if var not in shared:
            try:
                shared[var] = load_stack(present[var], var, config)
            except (DcwatchError, OSError) as exc:
                shared[var] = exc
        return shared[var]

    # per-site subdirectories override the shared directory contents
    def site_stacks(site):
        stacks = {}
        for var, d in present.items():
            sub = os.path.join(d, site.id)
            stack = load_stack(sub, var, config) if os.path.isdir(sub) else shared_stack(var)
            if isinstance(stack, Exception):
                raise stack
            stacks[var] = stack
        return stacks

    for var in present:
        shared_stack(var)

    def work(site):
        try:
            outcome = analyse_site(site, site_stacks(site), zone_records, sites, config)
            write_outputs(outcome, config.output_dir)
            return outcome
        except (DcwatchError, OSError, ValueError) as exc:
            return SiteOutcome(site.id, error=f"{type(exc).__name__}: {exc}")

    ordered = sorted(sites, key=lambda s: s.id)
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = list(pool.map(work, ordered))
    for o in outcomes:
        for note in o.notes:
            log.info("%s: %s", o.site_id, note)
        if o.error:
            log.error("%s: failed: %s", o.site_id, o.error)
    ok = sum(1 for o in outcomes if o.error is None)
    exit_code = 0 if ok or not outcomes else 1
    return RunResult(outcomes, exit_code)


def summary_table(outcomes) -> str:
    rows = [("site", "flags", "ndvi beta/yr", "ntl ratio", "uvai slope/yr")]
    for o in outcomes:
        if o.error:
            rows.append((o.site_id, "FAILED: " + o.error, "", "", ""))
            continue
        r = o.report
        beta = r.ndvi.fit.get("beta_per_year") if r.ndvi and r.ndvi.fit else None
        ratio = r.ntl.ratio if r.ntl else None
        uv = r.uvai.trend.slope_per_year if r.uvai else None
        rows.append((
            o.site_id,
            ",".join(r.flags) or "-",
            "-" if beta is None else f"{beta:+.4f}",
            "-" if ratio is None or math.isnan(ratio) else f"{ratio:.2f}x",
            "-" if uv is None else f"{uv:+.4f}",
        ))
    widths = [max(len(str(row[i])) for row in rows) for i in range(5)]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
