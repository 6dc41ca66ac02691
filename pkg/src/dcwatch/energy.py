"""Grid-zone carbon intensity, datacenter PUE, and fleet aggregates."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import NoMatches, ValidationError

__all__ = [
    "ZoneIntensityRecord",
    "PueRecord",
    "FleetIntensity",
    "REPORTED_PUE",
    "load_zone_intensities",
    "zone_record_for_year",
    "fleet_average_intensity",
    "attributed_emission",
]

ZONE_CSV_COLUMNS = ("zone_id", "year", "carbon_intensity_gco2_kwh", "low_carbon_fraction", "renewable_fraction")


@dataclass(frozen=True)
class ZoneIntensityRecord:
    zone_id: str
    year: int
    carbon_intensity: float  # gCO2/kWh
    low_carbon_fraction: float | None = None
    renewable_fraction: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.carbon_intensity) and self.carbon_intensity >= 0):
            raise ValueError("carbon_intensity must be a nonnegative number")
        for name in ("low_carbon_fraction", "renewable_fraction"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        lc, rn = self.low_carbon_fraction, self.renewable_fraction
        if lc is not None and rn is not None and rn > lc:
            raise ValueError("renewable_fraction cannot exceed low_carbon_fraction")


@dataclass(frozen=True)
class PueRecord:
    operator: str
    scope: str  # "global", "region:<label>" or "site:<label>"
    year: int
    pue: float

    def __post_init__(self):
        if not self.pue >= 1.0:
            raise ValueError("PUE is at least 1.0")


# operator-published efficiency figures
REPORTED_PUE = (
    PueRecord("Microsoft", "global", 2022, 1.18),
    PueRecord("Microsoft", "region:Americas", 2022, 1.17),
    PueRecord("Microsoft", "region:Asia Pacific", 2022, 1.405),
    PueRecord("Microsoft", "region:Europe, Middle East, Africa", 2022, 1.185),
    PueRecord("Google", "global", 2023, 1.10),
)


def _opt_fraction(raw, record, field_name, issues):
    if raw is None or str(raw).strip() == "":
        return None
    try:
        v = float(raw)
    except ValueError:
        issues.append((record, field_name, f"not a number: {raw!r}"))
        return None
    if not 0 <= v <= 1:
        issues.append((record, field_name, f"fraction {v} outside [0, 1]"))
        return None
    return v


def load_zone_intensities(text: str) -> list[ZoneIntensityRecord]:
    """Parse the yearly zone CSV (``zone_id,year,carbon_intensity_gco2_kwh,...``)."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        return []
    missing = [c for c in ZONE_CSV_COLUMNS[:3] if c not in reader.fieldnames]
    if missing:
        raise ValidationError([(None, c, "column missing from header") for c in missing])
    records, issues = [], []
    for row in reader:
        rec = f"line {reader.line_num}"
        n_before = len(issues)
        zone = (row.get("zone_id") or "").strip()
        if not zone:
            issues.append((rec, "zone_id", "missing zone_id"))
        try:
            year = int(row["year"])
        except (TypeError, ValueError):
            issues.append((rec, "year", f"not a year: {row.get('year')!r}"))
        try:
            ci = float(row["carbon_intensity_gco2_kwh"])
            if not (math.isfinite(ci) and ci >= 0):
                issues.append((rec, "carbon_intensity_gco2_kwh", f"intensity {ci} must be nonnegative"))
        except (TypeError, ValueError):
            issues.append((rec, "carbon_intensity_gco2_kwh", "not a number"))
        lc = _opt_fraction(row.get("low_carbon_fraction"), rec, "low_carbon_fraction", issues)
        rn = _opt_fraction(row.get("renewable_fraction"), rec, "renewable_fraction", issues)
        if lc is not None and rn is not None and rn > lc:
            issues.append((rec, "renewable_fraction", f"renewable {rn} exceeds low-carbon {lc}"))
        if len(issues) == n_before:
            records.append(ZoneIntensityRecord(zone, year, ci, lc, rn))
    if issues:
        raise ValidationError(issues)
    return records


def zone_record_for_year(records, zone_id, year):
    """Record for ``zone_id`` in ``year``, else the nearest earlier year, else None."""
    best = None
    for r in records:
        if r.zone_id == zone_id and r.year <= year and (best is None or r.year > best.year):
            best = r
    return best


@dataclass(frozen=True)
class FleetIntensity:
    mean_gco2_per_kwh: float
    n_matched: int
    unmatched_site_ids: list = field(default_factory=list)
    year: int | None = None
    # site id -> year actually used when the requested year was missing
    year_fallbacks: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mean_gco2_per_kwh": self.mean_gco2_per_kwh,
            "n_matched": self.n_matched,
            "unmatched_site_ids": list(self.unmatched_site_ids),
            "year": self.year,
            "year_fallbacks": dict(sorted(self.year_fallbacks.items())),
        }


def fleet_average_intensity(sites, records, year: int) -> FleetIntensity:
    """Unweighted mean zone intensity over the sites whose zone has data.

    A zone lacking ``year`` falls back to its latest earlier year; the site
    is listed in ``year_fallbacks``. Sites with no usable record are
    reported in ``unmatched_site_ids``.
    """
    matched, unmatched, fallbacks = [], [], {}
    for site in sites:
        rec = zone_record_for_year(records, site.zone_id, year) if site.zone_id else None
        if rec is None:
            unmatched.append(site.id)
            continue
        if rec.year != year:
            fallbacks[site.id] = rec.year
        matched.append(rec.carbon_intensity)
    if not matched:
        raise NoMatches(f"no site has zone intensity data for {year} or earlier")
    return FleetIntensity(
        mean_gco2_per_kwh=math.fsum(matched) / len(matched),
        n_matched=len(matched),
        unmatched_site_ids=unmatched,
        year=year,
        year_fallbacks=fallbacks,
    )


def attributed_emission(it_energy_kwh: float, intensity: float, pue: float) -> float:
    """Grams of CO2 for ``it_energy_kwh`` of IT load at facility overhead ``pue``."""
    if it_energy_kwh < 0 or intensity < 0:
        raise ValueError("energy and intensity must be nonnegative")
    if pue < 1:
        raise ValueError("PUE is at least 1.0")
    return it_energy_kwh * pue * intensity
