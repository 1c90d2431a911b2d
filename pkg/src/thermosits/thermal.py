"""Growing-degree-day computation from daily temperature series.

The daily contribution is the capped daily mean temperature above a base:
clip((tmin + tmax)/2, t_base, t_cap) - t_base. Accumulating it from a start
day gives a non-decreasing thermal timeline that can replace day-of-year
as the temporal position of an observation.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DAYS_PER_YEAR",
    "TemperatureSeries",
    "ThermalConfig",
    "ThermalTimeline",
    "load_temperature_csv",
    "daily_contribution",
    "accumulate",
    "gdd_at_days",
]

DAYS_PER_YEAR = 365

TEMPERATURE_CSV_HEADER = ["region_id", "day_of_year", "tmin_c", "tmax_c"]


@dataclass
class TemperatureSeries:
    """Daily min/max air temperature (degrees C) for days 1..365 of one year."""

    region_id: str
    tmin_c: np.ndarray
    tmax_c: np.ndarray

    def __post_init__(self):
        self.tmin_c = np.asarray(self.tmin_c, dtype=np.float64)
        self.tmax_c = np.asarray(self.tmax_c, dtype=np.float64)
        if self.tmin_c.shape != (DAYS_PER_YEAR,) or self.tmax_c.shape != (DAYS_PER_YEAR,):
            raise ValueError(
                f"temperature series {self.region_id!r}: need exactly "
                f"{DAYS_PER_YEAR} days, got {self.tmin_c.shape} / {self.tmax_c.shape}"
            )
        bad = np.nonzero(self.tmin_c > self.tmax_c)[0]
        if bad.size:
            raise ValueError(
                f"temperature series {self.region_id!r}: tmin > tmax on day {bad[0] + 1}"
            )


@dataclass(frozen=True)
class ThermalConfig:
    """Base/cap temperatures (degrees C) and the accumulation start day."""

    t_base: float = 0.0
    t_cap: float = 30.0
    accumulation_start_day: int = 1

    def __post_init__(self):
        if not self.t_base < self.t_cap:
            raise ValueError(f"thermal config: t_base {self.t_base} must be < t_cap {self.t_cap}")
        if not 1 <= self.accumulation_start_day <= DAYS_PER_YEAR:
            raise ValueError(
                f"thermal config: start day {self.accumulation_start_day} outside 1..{DAYS_PER_YEAR}"
            )


@dataclass
class ThermalTimeline:
    """Cumulative GDD per calendar day; index d-1 holds the value at day d."""

    region_id: str
    gdd: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.gdd = np.asarray(self.gdd, dtype=np.float64)
        if self.gdd.shape != (DAYS_PER_YEAR,):
            raise ValueError(f"thermal timeline {self.region_id!r}: need {DAYS_PER_YEAR} days")
        if np.any(np.diff(self.gdd) < 0):
            raise ValueError(f"thermal timeline {self.region_id!r}: not non-decreasing")


def daily_contribution(tmin: float, tmax: float, cfg: ThermalConfig = ThermalConfig()) -> float:
    """GDD contribution of one day; the cap clips the daily average."""
    if tmin > tmax:
        raise ValueError(f"daily_contribution: tmin {tmin} > tmax {tmax}")
    avg = 0.5 * (tmin + tmax)
    return min(max(avg, cfg.t_base), cfg.t_cap) - cfg.t_base


def accumulate(series: TemperatureSeries, cfg: ThermalConfig = ThermalConfig()) -> ThermalTimeline:
    """Cumulative GDD from the configured start day; earlier days stay at 0."""
    avg = 0.5 * (series.tmin_c + series.tmax_c)
    contrib = np.clip(avg, cfg.t_base, cfg.t_cap) - cfg.t_base
    contrib[: cfg.accumulation_start_day - 1] = 0.0
    return ThermalTimeline(region_id=series.region_id, gdd=np.cumsum(contrib))


def gdd_at_days(timeline: ThermalTimeline, observation_days) -> np.ndarray:
    """Cumulative GDD at each observation day (1-based day of year)."""
    days = np.asarray(observation_days, dtype=np.int64)
    if days.size and (days.min() < 1 or days.max() > DAYS_PER_YEAR):
        raise ValueError(
            f"gdd_at_days: day {days.min() if days.min() < 1 else days.max()} "
            f"outside 1..{DAYS_PER_YEAR}"
        )
    return timeline.gdd[days - 1].copy()


def load_temperature_csv(path) -> list[TemperatureSeries]:
    """Parse `region_id,day_of_year,tmin_c,tmax_c` rows into complete series.

    Every region must cover days 1..365 exactly once; violations are
    rejected naming the region, day, or line at fault.
    """
    per_region_min: dict[str, np.ndarray] = {}
    per_region_max: dict[str, np.ndarray] = {}
    seen: dict[str, np.ndarray] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TEMPERATURE_CSV_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(TEMPERATURE_CSV_HEADER)!r}, got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            region = row[0].strip()
            try:
                day = int(row[1])
                tmin = float(row[2])
                tmax = float(row[3])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from None
            if not 1 <= day <= DAYS_PER_YEAR:
                raise ValueError(f"{path}:{lineno}: day {day} outside 1..{DAYS_PER_YEAR}")
            if tmin > tmax:
                raise ValueError(
                    f"{path}:{lineno}: region {region!r} day {day}: tmin {tmin} > tmax {tmax}"
                )
            if region not in per_region_min:
                per_region_min[region] = np.zeros(DAYS_PER_YEAR)
                per_region_max[region] = np.zeros(DAYS_PER_YEAR)
                seen[region] = np.zeros(DAYS_PER_YEAR, dtype=bool)
                order.append(region)
            if seen[region][day - 1]:
                raise ValueError(f"{path}:{lineno}: region {region!r} day {day} duplicated")
            per_region_min[region][day - 1] = tmin
            per_region_max[region][day - 1] = tmax
            seen[region][day - 1] = True
    if not order:
        raise ValueError(f"{path}: no temperature rows")
    out = []
    for region in order:
        missing = np.nonzero(~seen[region])[0]
        if missing.size:
            raise ValueError(f"{path}: region {region!r} missing day {missing[0] + 1}")
        out.append(TemperatureSeries(region, per_region_min[region], per_region_max[region]))
    return out
