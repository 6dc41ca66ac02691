"""Observation series and the numerics run on them.

The seasonal model is a single harmonic pair with an optional linear trend::

    value(t) = mu + beta*t + alpha1*cos(2*pi*t/N) + alpha2*sin(2*pi*t/N)

fitted by (weighted) ordinary least squares through a column-equilibrated QR
factorisation. Trend significance comes from Mann-Kendall with Sen's slope,
or from a plain OLS line for short annual series.
"""
from __future__ import annotations

import calendar
import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import linalg, stats

from .errors import (
    DegenerateAbscissa,
    InsufficientData,
    MissingYear,
    NonpositiveBaseline,
    RankDeficient,
)

__all__ = [
    "Observation",
    "ObservationSeries",
    "HarmonicFit",
    "TrendResult",
    "Direction",
    "DEFAULT_EPOCH",
    "CONDITION_LIMIT",
    "fit_harmonic",
    "predict",
    "harmonic_design",
    "mann_kendall",
    "mann_kendall_score",
    "sen_slope",
    "ols_slope",
    "annual_aggregate",
    "annual_values",
    "change_ratio",
    "detect_dips",
    "read_series_csv",
    "series_to_csv",
]

DEFAULT_EPOCH = date(1970, 1, 1)
DAYS_PER_YEAR = 365.25
CONDITION_LIMIT = 1e10

VARIABLE_UNITS = {
    "ndvi": ("NDVI", "unitless"),
    "ntl_radiance": ("NTL radiance", "nW cm-2 sr-1"),
    "uvai": ("UV aerosol index", "unitless"),
}


class Observation(NamedTuple):
    t: float
    value: float
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Irregular ``(t, value, weight)`` samples of one variable at one site.

    ``t`` is in days since ``epoch``. Samples are kept sorted by ``t``
    (stable, so duplicate times keep their input order).
    """

    variable: str
    t: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None
    epoch: date = DEFAULT_EPOCH

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        w = np.ones_like(t) if self.weights is None else np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(t) == len(v) == len(w)):
            raise ValueError("t, values and weights must have equal length")
        if not (np.isfinite(t).all() and np.isfinite(v).all()):
            raise ValueError("t and values must be finite")
        if not (np.isfinite(w).all() and (w > 0).all()):
            raise ValueError("weights must be positive and finite")
        order = np.argsort(t, kind="stable")
        for name, arr in (("t", t), ("values", v), ("weights", w)):
            arr = arr[order]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if isinstance(self.epoch, datetime):
            object.__setattr__(self, "epoch", self.epoch.date())

    @classmethod
    def from_observations(cls, variable, observations, epoch=DEFAULT_EPOCH):
        obs = [Observation(*o) for o in observations]
        return cls(
            variable,
            [o.t for o in obs],
            [o.value for o in obs],
            [o.weight for o in obs],
            epoch=epoch,
        )

    def __len__(self):
        return len(self.t)

    @property
    def observations(self) -> list[Observation]:
        return [Observation(float(a), float(b), float(c)) for a, b, c in zip(self.t, self.values, self.weights)]

    def dates(self) -> list[datetime]:
        base = datetime.combine(self.epoch, datetime.min.time())
        return [base + timedelta(days=float(x)) for x in self.t]

    def years(self) -> np.ndarray:
        return np.array([d.year for d in self.dates()], dtype=int)

    def day_of(self, year, fraction=0.5) -> float:
        """Days since epoch of a point ``fraction`` of the way through ``year``."""
        start = (date(year, 1, 1) - self.epoch).days
        return start + fraction * (366 if calendar.isleap(year) else 365)

    def __eq__(self, other):
        if not isinstance(other, ObservationSeries):
            return NotImplemented
        return (
            self.variable == other.variable
            and self.epoch == other.epoch
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None


def series_to_csv(series: ObservationSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_days", "value", "weight"])
    for o in series.observations:
        w.writerow([repr(o.t), repr(o.value), repr(o.weight)])
    return buf.getvalue()


def read_series_csv(text: str, variable: str = "other", epoch: date = DEFAULT_EPOCH) -> ObservationSeries:
    """Parse ``t_days,value[,weight]`` CSV text."""
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames or not {"t_days", "value"} <= set(reader.fieldnames):
        raise ValueError("series CSV needs t_days and value columns")
    t, v, w = [], [], []
    for row in reader:
        t.append(float(row["t_days"]))
        v.append(float(row["value"]))
        wt = row.get("weight")
        w.append(float(wt) if wt not in (None, "") else 1.0)
    return ObservationSeries(variable, t, v, w, epoch=epoch)


# ---------------------------------------------------------------------------
# harmonic model

_COEF_NAMES = ("mu", "alpha1", "alpha2", "beta")


@dataclass(frozen=True)
class HarmonicFit:
    mu: float
    alpha1: float
    alpha2: float
    beta: float | None
    period_days: float
    n_obs: int
    rmse: float
    rank_ok: bool
    stderr: dict = field(default_factory=dict)
    condition: float = 1.0

    @property
    def amplitude(self) -> float:
        return math.hypot(self.alpha1, self.alpha2)

    @property
    def beta_per_year(self) -> float | None:
        return None if self.beta is None else self.beta * DAYS_PER_YEAR

    def coefficients(self) -> dict:
        d = {"mu": self.mu, "alpha1": self.alpha1, "alpha2": self.alpha2}
        if self.beta is not None:
            d["beta"] = self.beta
        return d

    def predict(self, t):
        return predict(self, t)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "beta": self.beta,
            "period_days": self.period_days,
            "n_obs": self.n_obs,
            "rmse": self.rmse,
            "rank_ok": self.rank_ok,
            "stderr": dict(self.stderr),
            "condition": self.condition,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def harmonic_design(t, period_days=365.0, include_trend=False) -> np.ndarray:
    """Design matrix with columns ``[1, cos, sin]`` (``+ [t]`` with trend)."""
    t = np.asarray(t, dtype=float).reshape(-1)
    w = 2.0 * np.pi * t / period_days
    cols = [np.ones_like(t), np.cos(w), np.sin(w)]
    if include_trend:
        cols.append(t)
    return np.column_stack(cols)


def _harmonic_lstsq(t, y, w, include_trend, period_days, condition_limit=CONDITION_LIMIT) -> HarmonicFit:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(t) if w is None else np.asarray(w, dtype=float)
    if not (period_days > 0 and math.isfinite(period_days)):
        raise ValueError("period_days must be positive")
    p = 4 if include_trend else 3
    n = len(t)
    if n < p:
        raise InsufficientData(f"{n} observations cannot determine {p} coefficients")

    X = harmonic_design(t, period_days, include_trend)
    sw = np.sqrt(w)
    A = X * sw[:, None]
    b = y * sw
    # equilibrate columns so the condition estimate ignores units of t
    norms = np.linalg.norm(A, axis=0)
    if (norms == 0).any():
        raise RankDeficient("a design column is identically zero", math.inf)
    As = A / norms
    sv = np.linalg.svd(As, compute_uv=False)
    cond = math.inf if sv[-1] == 0 else float(sv[0] / sv[-1])
    if cond > condition_limit:
        raise RankDeficient("design matrix is numerically rank deficient", cond)

    Q, R = np.linalg.qr(As)
    z = linalg.solve_triangular(R, Q.T @ b)
    coef = z / norms
    resid = y - X @ coef
    rss = float(np.sum(w * resid**2))
    rmse = math.sqrt(rss / float(np.sum(w)))

    dof = n - p
    if dof > 0:
        rinv = linalg.solve_triangular(R, np.eye(p))
        cov = (rinv @ rinv.T) / np.outer(norms, norms) * (rss / dof)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        se = np.full(p, np.nan)

    return HarmonicFit(
        mu=float(coef[0]),
        alpha1=float(coef[1]),
        alpha2=float(coef[2]),
        beta=float(coef[3]) if include_trend else None,
        period_days=float(period_days),
        n_obs=n,
        rmse=rmse,
        rank_ok=True,
        stderr={name: float(s) for name, s in zip(_COEF_NAMES, se)},
        condition=cond,
    )


def fit_harmonic(series: ObservationSeries, include_trend: bool = False, period_days: float = 365.0) -> HarmonicFit:
    """Fit the one-harmonic seasonal model to ``series`` by weighted OLS.

    Raises :class:`InsufficientData` with fewer observations than
    coefficients and :class:`RankDeficient` when the column-equilibrated
    condition number exceeds 1e10 (all samples at one time, or a span too
    short to separate the cosine and sine terms).
    """
    return _harmonic_lstsq(series.t, series.values, series.weights, include_trend, period_days)


def predict(fit: HarmonicFit, t):
    """Evaluate a fitted harmonic model at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    w = 2.0 * np.pi * t_arr / fit.period_days
    out = fit.mu + fit.alpha1 * np.cos(w) + fit.alpha2 * np.sin(w)
    if fit.beta is not None:
        out = out + fit.beta * t_arr
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# trend tests


class Direction(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    NONE = "none"


@dataclass(frozen=True)
class TrendResult:
    method: str
    slope: float
    p_value: float
    direction: Direction
    n_obs: int
    alpha: float = 0.05
    intercept: float | None = None
    s_statistic: int | None = None
    tau: float | None = None
    z: float | None = None
    rmse: float | None = None
    slope_stderr: float | None = None

    @property
    def slope_per_year(self) -> float:
        return self.slope * DAYS_PER_YEAR

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "slope": self.slope,
            "p_value": self.p_value,
            "direction": self.direction.value,
            "n_obs": self.n_obs,
            "alpha": self.alpha,
        }
        for k in ("intercept", "s_statistic", "tau", "z", "rmse", "slope_stderr"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d

    @classmethod
    def from_dict(cls, d):
        kw = {k: d.get(k) for k in cls.__dataclass_fields__ if k in d}
        kw["direction"] = Direction(kw["direction"])
        return cls(**kw)


def _direction(stat, p_value, alpha):
    if p_value >= alpha or stat == 0:
        return Direction.NONE
    return Direction.INCREASING if stat > 0 else Direction.DECREASING


def mann_kendall_score(values) -> tuple[int, float]:
    """Kendall ``S`` and ``tau`` of a sequence already in time order."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if n < 2:
        raise InsufficientData("Mann-Kendall needs at least 2 observations")
    i, j = np.triu_indices(n, k=1)
    s = int(np.sign(v[j] - v[i]).sum())
    return s, s / (n * (n - 1) / 2)


def _mk_variance(values):
    n = len(values)
    _, ties = np.unique(values, return_counts=True)
    return (n * (n - 1) * (2 * n + 5) - np.sum(ties * (ties - 1) * (2 * ties + 5))) / 18.0


def sen_slope(t, values) -> float:
    """Median of pairwise slopes over pairs with distinct times."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    i, j = np.triu_indices(len(t), k=1)
    dt = t[j] - t[i]
    keep = dt != 0
    if not keep.any():
        return math.nan
    return float(np.median((v[j][keep] - v[i][keep]) / dt[keep]))


def mann_kendall(series: ObservationSeries, alpha: float = 0.05) -> TrendResult:
    """Mann-Kendall monotonic trend test with Sen's slope.

    The p-value uses the tie-corrected variance of S and a continuity
    correction of one. Fewer than four observations still yield S, tau and
    slope, but are reported with ``p_value = 1`` (no significance claim).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    v = series.values
    n = len(v)
    s, tau = mann_kendall_score(v)
    slope = sen_slope(series.t, v)
    if n < 4:
        z, p = 0.0, 1.0
    else:
        var = _mk_variance(v)
        if var <= 0 or s == 0:
            z = 0.0
        else:
            z = (s - 1) / math.sqrt(var) if s > 0 else (s + 1) / math.sqrt(var)
        p = float(min(1.0, 2.0 * stats.norm.sf(abs(z))))
    intercept = float(np.median(v - slope * series.t)) if math.isfinite(slope) else None
    return TrendResult(
        method="mann_kendall",
        slope=slope,
        p_value=p,
        direction=_direction(s, p, alpha),
        n_obs=n,
        alpha=alpha,
        intercept=intercept,
        s_statistic=s,
        tau=float(tau),
        z=float(z),
    )


def ols_slope(series: ObservationSeries, alpha: float = 0.05) -> TrendResult:
    """Least-squares line through ``series`` with a two-sided t-test on the slope."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    t, v = series.t, series.values
    n = len(t)
    if n < 3:
        raise InsufficientData("OLS trend needs at least 3 observations")
    if np.ptp(t) == 0:
        raise DegenerateAbscissa("all observations share one time")
    t0 = t.mean()
    X = np.column_stack([np.ones(n), t - t0])
    (a, slope), *_ = np.linalg.lstsq(X, v, rcond=None)
    resid = v - X @ np.array([a, slope])
    rss = float(resid @ resid)
    sxx = float(((t - t0) ** 2).sum())
    se = math.sqrt(rss / (n - 2) / sxx)
    if se == 0:
        p = 1.0 if slope == 0 else 0.0
    else:
        p = float(min(1.0, 2.0 * stats.t.sf(abs(slope / se), n - 2)))
    return TrendResult(
        method="ols",
        slope=float(slope),
        p_value=p,
        direction=_direction(slope, p, alpha),
        n_obs=n,
        alpha=alpha,
        intercept=float(a - slope * t0),
        rmse=math.sqrt(rss / n),
        slope_stderr=se,
    )


# ---------------------------------------------------------------------------
# annual series


def annual_aggregate(series: ObservationSeries, statistic: str = "mean") -> ObservationSeries:
    """One observation per calendar year, placed at mid-year."""
    funcs = {"mean": np.mean, "median": np.median}
    if statistic not in funcs:
        raise ValueError(f"statistic must be 'mean' or 'median', got {statistic!r}")
    if len(series) == 0:
        return ObservationSeries(series.variable, [], [], epoch=series.epoch)
    years = series.years()
    out_t, out_v = [], []
    for y in np.unique(years):
        out_t.append(series.day_of(int(y)))
        out_v.append(float(funcs[statistic](series.values[years == y])))
    return ObservationSeries(series.variable, out_t, out_v, epoch=series.epoch)


def annual_values(annual: ObservationSeries) -> dict[int, float]:
    """``{year: value}`` of an annual series; rejects more than one value per year."""
    out = {}
    for y, v in zip(annual.years(), annual.values):
        y = int(y)
        if y in out:
            raise ValueError(f"year {y} occurs more than once; aggregate the series first")
        out[y] = float(v)
    return out


def change_ratio(annual: ObservationSeries, baseline_year: int, target_year: int) -> float:
    by_year = annual_values(annual)
    for y in (baseline_year, target_year):
        if y not in by_year:
            raise MissingYear(f"year {y} not in series")
    base = by_year[baseline_year]
    if base <= 0:
        raise NonpositiveBaseline(f"baseline value {base} for {baseline_year} is not positive")
    return by_year[target_year] / base


def detect_dips(annual: ObservationSeries) -> list[int]:
    """Years strictly below both neighbouring available years."""
    by_year = sorted(annual_values(annual).items())
    if len(by_year) < 3:
        raise InsufficientData("dip detection needs at least 3 annual values")
    return [
        y for (_, prev), (y, cur), (_, nxt) in zip(by_year, by_year[1:], by_year[2:])
        if cur < prev and cur < nxt
    ]
