"""Satellite-based environmental change monitoring around datacenter sites."""

__version__ = "0.1.0"

from .energy import (  # noqa: E402
    FleetIntensity,
    PueRecord,
    ZoneIntensityRecord,
    attributed_emission,
    fleet_average_intensity,
    load_zone_intensities,
)
from .estimators import HarmonicRegressor, MannKendallTrend, NDVITransformer, OLSTrend  # noqa: E402
from .indices import BandPair, ndvi, extract_series, zonal_mean  # noqa: E402
from .raster_io import (  # noqa: E402
    LANDSAT_C2_QA,
    BandKind,
    QaBitSpec,
    RasterGrid,
    decode_qa,
    parse_geotiff,
    write_geotiff,
)
from .report import SiteReport, build_report, render_json, render_svg_timeseries  # noqa: E402
from .sites import BBoxAOI, CircleAOI, Site, SiteStatus, aoi_mask, load_sites  # noqa: E402
from .timeseries import (  # noqa: E402
    HarmonicFit,
    ObservationSeries,
    TrendResult,
    annual_aggregate,
    change_ratio,
    detect_dips,
    fit_harmonic,
    mann_kendall,
    ols_slope,
    predict,
)
