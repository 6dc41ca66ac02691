"""Command-line entry point.

Exit codes: 0 success, 1 validation or analysis failure, 2 I/O or config failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from datetime import date

from . import __version__
from .energy import fleet_average_intensity, load_zone_intensities, zone_record_for_year
from .errors import DcwatchError, ValidationError
from .pipeline import ConfigError, RunConfig, run, summary_table
from .report import _canon
from .sites import load_sites
from .timeseries import fit_harmonic, mann_kendall, ols_slope, read_series_csv

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _emit(obj, out_path=None):
    text = json.dumps(_canon(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_sites_validate(args) -> int:
    try:
        text = _read(args.sites)
    except OSError as exc:
        print(f"error: cannot read {args.sites}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    try:
        sites = load_sites(text, default_radius_m=args.radius)
    except ValidationError as exc:
        for issue in exc.issues:
            print(ValidationError.format_issue(issue))
        return EXIT_FAIL
    counts = Counter(s.status.value for s in sites)
    print(f"{len(sites)} sites ({counts['existing']} existing, {counts['proposed']} proposed)")
    return EXIT_OK


def _config_from_args(args, **extra) -> RunConfig:
    raster_dirs = {}
    for var, attr in (("ndvi", "ndvi_dir"), ("ntl_radiance", "ntl_dir"), ("uvai", "uvai_dir")):
        if getattr(args, attr, None):
            raster_dirs[var] = getattr(args, attr)
    overrides = dict(
        sites_path=getattr(args, "sites", None),
        zone_intensity_path=getattr(args, "zones", None),
        output_dir=getattr(args, "output_dir", None),
        aoi_default_radius_m=getattr(args, "radius", None),
        include_trend=getattr(args, "include_trend", None),
        significance=getattr(args, "significance", None),
        surge_threshold=getattr(args, "surge_threshold", None),
        workers=getattr(args, "workers", None),
        seed=getattr(args, "seed", None),
        min_clear_fraction=getattr(args, "min_clear_fraction", None),
        raster_dirs=raster_dirs or None,
    )
    overrides.update(extra)
    return RunConfig.load(getattr(args, "config", None), **overrides)


def _run_and_report(config) -> int:
    try:
        result = run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        for issue in exc.issues:
            print(ValidationError.format_issue(issue), file=sys.stderr)
        return EXIT_FAIL
    print(summary_table(result.outcomes))
    return result.exit_code


def cmd_run(args) -> int:
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return _run_and_report(config)


def cmd_demo(args) -> int:
    from .demo import generate_demo_inputs

    out = args.output_dir or "demo-out"
    inputs = os.path.join(out, "inputs")
    try:
        os.makedirs(inputs, exist_ok=True)
        fields = generate_demo_inputs(inputs, seed=args.seed)
    except OSError as exc:
        print(f"error: cannot write demo inputs under {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    config = RunConfig.load(
        None,
        **fields,
        output_dir=os.path.join(out, "reports"),
        workers=args.workers or 4,
    )
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return _run_and_report(config)


def cmd_fit(args) -> int:
    try:
        series = read_series_csv(_read(args.series), epoch=date.fromisoformat(args.epoch))
    except OSError as exc:
        print(f"error: cannot read {args.series}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {args.series}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        fit = fit_harmonic(series, include_trend=args.include_trend, period_days=args.period)
    except DcwatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    d = fit.to_dict()
    d["beta_per_year"] = fit.beta_per_year
    _emit(d, args.out)
    return EXIT_OK


def cmd_trend(args) -> int:
    try:
        series = read_series_csv(_read(args.series), epoch=date.fromisoformat(args.epoch))
    except OSError as exc:
        print(f"error: cannot read {args.series}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {args.series}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    method = mann_kendall if args.method == "mann_kendall" else ols_slope
    try:
        result = method(series, alpha=args.alpha)
    except DcwatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    d = result.to_dict()
    d["slope_per_year"] = result.slope_per_year
    _emit(d, args.out)
    return EXIT_OK


def cmd_energy(args) -> int:
    try:
        sites_text, zones_text = _read(args.sites), _read(args.zones)
    except OSError as exc:
        print(f"error: cannot read {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    try:
        sites = load_sites(sites_text)
        records = load_zone_intensities(zones_text)
    except ValidationError as exc:
        for issue in exc.issues:
            print(ValidationError.format_issue(issue), file=sys.stderr)
        return EXIT_FAIL
    if not records:
        print("error: zone table is empty", file=sys.stderr)
        return EXIT_FAIL
    year = args.year or max(r.year for r in records)
    try:
        fleet = fleet_average_intensity(sites, records, year)
    except DcwatchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    d = fleet.to_dict()
    per_site = {}
    for s in sites:
        rec = zone_record_for_year(records, s.zone_id, year) if s.zone_id else None
        per_site[s.id] = None if rec is None else {
            "zone_id": rec.zone_id,
            "year": rec.year,
            "carbon_intensity_gco2_kwh": rec.carbon_intensity,
            "low_carbon_fraction": rec.low_carbon_fraction,
            "renewable_fraction": rec.renewable_fraction,
        }
    d["sites"] = per_site
    _emit(d, args.out)
    return EXIT_OK


def _add_run_options(p):
    p.add_argument("--config", help="JSON run configuration; flags override its fields")
    p.add_argument("--sites", help="site registry (CSV or GeoJSON)")
    p.add_argument("--zones", help="zone intensity CSV")
    p.add_argument("--ndvi-dir")
    p.add_argument("--ntl-dir")
    p.add_argument("--uvai-dir")
    p.add_argument("--output-dir")
    p.add_argument("--radius", type=float, help="default AOI radius in meters")
    p.add_argument("--trend", dest="include_trend", action="store_true", default=None)
    p.add_argument("--no-trend", dest="include_trend", action="store_false")
    p.add_argument("--significance", type=float)
    p.add_argument("--surge-threshold", type=float)
    p.add_argument("--min-clear-fraction", type=float)
    p.add_argument("--workers", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="dcwatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sites-validate", help="validate a site registry")
    p.add_argument("sites")
    p.add_argument("--radius", type=float, default=2000.0)
    p.set_defaults(func=cmd_sites_validate)

    p = sub.add_parser("run", help="analyse every site and write reports")
    _add_run_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("demo", help="generate synthetic inputs and run the pipeline on them")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output-dir", default="demo-out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_demo)

    for name, func, helptext in (
        ("fit", cmd_fit, "fit the harmonic model to a series CSV"),
        ("trend", cmd_trend, "trend test on a series CSV"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("series", help="CSV with t_days,value[,weight]")
        p.add_argument("--epoch", default="1970-01-01")
        p.add_argument("--out")
        if name == "fit":
            p.add_argument("--period", type=float, default=365.0)
            p.add_argument("--no-trend", dest="include_trend", action="store_false", default=True)
        else:
            p.add_argument("--method", choices=("mann_kendall", "ols"), default="mann_kendall")
            p.add_argument("--alpha", type=float, default=0.05)
        p.set_defaults(func=func)

    p = sub.add_parser("energy", help="fleet carbon-intensity summary")
    p.add_argument("--sites", required=True)
    p.add_argument("--zones", required=True)
    p.add_argument("--year", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_energy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
