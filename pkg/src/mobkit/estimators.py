"""Mobility estimators, trend fits, and labor-market descriptives.

The core object is the within-cohort rank-rank slope (the
intergenerational rank association, IRA): the OLS slope of the child's
income percentile rank on the parent's. A log-log elasticity (IGE), a
participation filter, a linear trend fit across cohorts with an optional
two-series equality test, the Duncan dissimilarity index, the full-time
series break correction, and an occupational-composition shift
regression round out the module. All regressions report HC1 robust
standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from mobkit._ols import ols, slope_fit


@dataclass(frozen=True)
class EstimateRecord:
    """Slope, intercept, robust SE and sample size of one regression."""

    cohort: int
    slope: float
    intercept: float
    se_slope: float
    n: int
    spec_label: str = "all"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an estimate needs n >= 2")
        if not np.isfinite(self.slope):
            raise ValueError("non-finite slope")
        if self.se_slope < 0:
            raise ValueError("negative standard error")


@dataclass(frozen=True)
class TrendRecord:
    """Linear trend of per-cohort slopes; coefficients scaled by 100."""

    spec_label: str
    year_range: tuple[int, int]
    slope_x100: float
    se_x100: float
    p_equal_trends: float | None = None
    n_points: int = 0

    def __post_init__(self):
        if self.year_range[0] >= self.year_range[1]:
            raise ValueError("year range must span at least two years")
        if self.se_x100 < 0:
            raise ValueError("negative standard error")


@dataclass(frozen=True)
class SegregationSeries:
    """Duncan index by year with values normalized to a base year."""

    values: dict[int, float]
    base_year: int
    normalized: dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_values(cls, values: dict[int, float], base_year: int) -> "SegregationSeries":
        if base_year not in values:
            raise ValueError(f"base year {base_year} not in series")
        base = values[base_year]
        if base == 0:
            raise ValueError("base-year index is zero, cannot normalize")
        normalized = {year: v / base for year, v in values.items()}
        return cls(values=dict(values), base_year=base_year, normalized=normalized)


def ira(
    child_ranks,
    parent_ranks,
    cohort: int = 0,
    spec_label: str = "all",
) -> EstimateRecord:
    """Rank-rank regression for one cohort.

    OLS of child percentile rank on parent percentile rank. Because both
    margins are midranks with identical variance, the slope coincides
    with the Spearman-type rank correlation of the underlying incomes.
    """
    child_ranks = np.asarray(child_ranks, dtype=float)
    parent_ranks = np.asarray(parent_ranks, dtype=float)
    try:
        slope, intercept, se, n = slope_fit(parent_ranks, child_ranks)
    except ValueError as exc:
        raise ValueError(f"degenerate regressor in cohort {cohort}: {exc}") from exc
    return EstimateRecord(cohort, slope, intercept, se, n, spec_label)


def ige(
    child_income,
    parent_income,
    cohort: int = 0,
    spec_label: str = "all",
) -> EstimateRecord:
    """Log-log income elasticity for one cohort, zero incomes excluded."""
    child_income = np.asarray(child_income, dtype=float)
    parent_income = np.asarray(parent_income, dtype=float)
    keep = (child_income > 0) & (parent_income > 0)
    if keep.sum() < 2:
        raise ValueError(f"cohort {cohort}: fewer than 2 positive-income pairs")
    slope, intercept, se, n = slope_fit(np.log(parent_income[keep]), np.log(child_income[keep]))
    return EstimateRecord(cohort, slope, intercept, se, n, spec_label)


def participation_filter(
    pairs: pd.DataFrame,
    threshold: float,
    scope: str = "both",
) -> pd.DataFrame:
    """Keep pairs whose scoped incomes strictly exceed ``threshold``.

    ``scope`` is ``"child"``, ``"parent"`` or ``"both"``. The comparison
    is strict, so a threshold of zero removes exactly the zero earners.
    Ranks must be recomputed on the filtered table.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    if scope not in ("child", "parent", "both"):
        raise ValueError("scope must be 'child', 'parent' or 'both'")
    keep = pd.Series(True, index=pairs.index)
    if scope in ("child", "both"):
        keep &= pairs["child_income"] > threshold
    if scope in ("parent", "both"):
        keep &= pairs["parent_income"] > threshold
    return pairs.loc[keep].copy()


def trend_fit(
    estimates: list[EstimateRecord],
    year_range: tuple[int, int] | None = None,
    spec_label: str | None = None,
) -> TrendRecord:
    """OLS of per-cohort slopes on cohort year, reported times 100."""
    if year_range is not None:
        estimates = [e for e in estimates if year_range[0] <= e.cohort <= year_range[1]]
    if len(estimates) < 2:
        raise ValueError("trend fit needs at least 2 cohort estimates")
    years = np.array([e.cohort for e in estimates], dtype=float)
    slopes = np.array([e.slope for e in estimates], dtype=float)
    trend, _, se, n = slope_fit(years, slopes)
    label = spec_label if spec_label is not None else estimates[0].spec_label
    return TrendRecord(
        spec_label=label,
        year_range=(int(years.min()), int(years.max())),
        slope_x100=100.0 * trend,
        se_x100=100.0 * se,
        n_points=n,
    )


def compare_trends(
    series_a: list[EstimateRecord],
    series_b: list[EstimateRecord],
    year_range: tuple[int, int] | None = None,
) -> tuple[TrendRecord, TrendRecord, float]:
    """Test equality of two series' linear trends.

    Stacks the two estimate series and regresses the slopes on year, a
    series indicator, and their interaction; the HC1 p-value on the
    interaction is the equality test. Returns both trend records (the
    first carrying ``p_equal_trends``) and the p-value.
    """
    ta = trend_fit(series_a, year_range)
    tb = trend_fit(series_b, year_range)
    if year_range is not None:
        series_a = [e for e in series_a if year_range[0] <= e.cohort <= year_range[1]]
        series_b = [e for e in series_b if year_range[0] <= e.cohort <= year_range[1]]
    years = np.array([e.cohort for e in series_a + series_b], dtype=float)
    slopes = np.array([e.slope for e in series_a + series_b], dtype=float)
    which = np.array([0.0] * len(series_a) + [1.0] * len(series_b))
    years_c = years - years.mean()
    fit = ols(slopes, np.column_stack([years_c, which, which * years_c]))
    p = fit.pvalue(3)
    ta = TrendRecord(ta.spec_label, ta.year_range, ta.slope_x100, ta.se_x100, p, ta.n_points)
    return ta, tb, p


def duncan_index(female_shares, male_shares) -> float:
    """Duncan dissimilarity: half the summed absolute share differences.

    Both share vectors must sum to one. 0 means identical occupational
    distributions, 1 complete segregation.
    """
    f = np.asarray(female_shares, dtype=float)
    m = np.asarray(male_shares, dtype=float)
    if f.shape != m.shape:
        raise ValueError("share vectors must have equal length")
    for name, shares in (("female", f), ("male", m)):
        if abs(shares.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} shares sum to {shares.sum()}, expected 1")
        if np.any(shares < 0):
            raise ValueError(f"{name} shares must be non-negative")
    return float(0.5 * np.abs(f - m).sum())


def segregation_series(
    shares_by_year: dict[int, tuple[np.ndarray, np.ndarray]],
    base_year: int,
) -> SegregationSeries:
    """Duncan index per year from (female, male) share vectors, normalized."""
    values = {year: duncan_index(f, m) for year, (f, m) in shares_by_year.items()}
    return SegregationSeries.from_values(values, base_year)


def fulltime_correction(
    series: dict[int, float],
    break_year: int,
    fit_window,
) -> dict[int, float]:
    """Splice a full-time-rate series across a definition break.

    Years before the break are unchanged. The break year is replaced by
    the linear extrapolation of the ``fit_window`` pre-break rates. Years
    after the break are rescaled so the complement of the rate keeps its
    observed proportion to the break-year complement:

        corrected_t = 1 - (1 - r_t) * (1 - r_hat_break) / (1 - r_break)
    """
    fit_years = sorted(fit_window)
    if not fit_years:
        raise ValueError("empty fit window")
    for y in fit_years:
        if y >= break_year:
            raise ValueError("fit window must precede the break year")
        if y not in series:
            raise ValueError(f"fit-window year {y} missing from series")
    if break_year not in series:
        raise ValueError("break year missing from series")
    observed_break = series[break_year]
    if observed_break == 1.0:
        raise ValueError("degenerate break level: observed rate is 1")

    xs = np.array(fit_years, dtype=float)
    ys = np.array([series[y] for y in fit_years], dtype=float)
    slope, intercept, _, _ = slope_fit(xs, ys)
    fitted_break = intercept + slope * break_year

    scale = (1.0 - fitted_break) / (1.0 - observed_break)
    out = {}
    for year, rate in series.items():
        if year < break_year:
            out[year] = rate
        elif year == break_year:
            out[year] = fitted_break
        else:
            out[year] = 1.0 - (1.0 - rate) * scale
    return out


def occupational_shift(
    shares_early: dict, shares_late: dict,
    education_means: dict, group_sizes: dict,
) -> tuple[pd.DataFrame, float]:
    """Relate occupation-share changes to the group's mean education.

    Inputs are keyed by occupation group: shares in the early and late
    cohort windows, mean years of education, and a group size used as
    the regression weight. Groups absent (zero share) from both windows
    are dropped. Returns per-group rows and the size-weighted OLS slope
    of the share change on mean education.
    """
    groups = sorted(set(shares_early) | set(shares_late))
    rows = []
    for g in groups:
        early = shares_early.get(g, 0.0)
        late = shares_late.get(g, 0.0)
        if early == 0.0 and late == 0.0:
            continue
        rows.append({
            "group": g,
            "share_early": early,
            "share_late": late,
            "delta_share": late - early,
            "edu_mean": education_means[g],
            "size": group_sizes.get(g, 0.0),
        })
    table = pd.DataFrame(rows)
    if len(table) < 2:
        raise ValueError("degenerate regressor: need at least 2 occupied groups")
    w = table["size"].to_numpy(dtype=float)
    if w.sum() <= 0:
        w = np.ones(len(table))
    x = table["edu_mean"].to_numpy(dtype=float)
    y = table["delta_share"].to_numpy(dtype=float)
    xbar = np.average(x, weights=w)
    ybar = np.average(y, weights=w)
    sxx = float(np.sum(w * (x - xbar) ** 2))
    if sxx == 0.0:
        raise ValueError("degenerate regressor: education means are constant")
    slope = float(np.sum(w * (x - xbar) * (y - ybar)) / sxx)
    return table, slope


def estimates_to_frame(estimates: list[EstimateRecord]) -> pd.DataFrame:
    """Tabular view of estimate records, one row per (spec_label, cohort)."""
    return pd.DataFrame(
        [
            {
                "spec_label": e.spec_label,
                "cohort": e.cohort,
                "slope": e.slope,
                "intercept": e.intercept,
                "se_slope": e.se_slope,
                "n": e.n,
            }
            for e in estimates
        ]
    )


def trends_to_frame(trends: list[TrendRecord]) -> pd.DataFrame:
    """Tabular view of trend records."""
    return pd.DataFrame(
        [
            {
                "spec_label": t.spec_label,
                "start": t.year_range[0],
                "end": t.year_range[1],
                "slope_x100": t.slope_x100,
                "se_x100": t.se_x100,
                "p_equal_trends": "" if t.p_equal_trends is None else t.p_equal_trends,
                "n_points": t.n_points,
            }
            for t in trends
        ]
    )
