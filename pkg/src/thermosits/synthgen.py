"""Synthetic multi-region SITS generator with thermal-time phenology.

Regions get a sinusoidal annual temperature cycle (coldest near the phase
day); crop classes are double-logistic growth curves defined over
cumulative GDD, so the same class planted in a warmer region reaches every
growth stage earlier in calendar time. Classes that share spectra but
differ in season start ("timing pairs") are separable only through
temporal position, which is exactly the regime the positional encoders are
meant to handle.
"""

import json
import os
from dataclasses import dataclass, asdict, replace

import numpy as np

from .dataset import Dataset, ParcelSample, write_manifest, write_parcels, temperature_csv_text
from .checkpoint import write_atomic
from .rngs import substream
from .thermal import (
    DAYS_PER_YEAR,
    TemperatureSeries,
    ThermalConfig,
    ThermalTimeline,
    accumulate,
    gdd_at_days,
)

__all__ = [
    "ClimateModel",
    "CropPrototype",
    "RegionSpec",
    "DatasetSpec",
    "gen_region_temperature",
    "gen_parcel",
    "gen_dataset",
    "observation_day_grid",
    "draw_observation_days",
    "growth_signal",
    "make_shift_twin",
    "canonical_benchmark_spec",
    "MIN_OBSERVATIONS",
]

MIN_OBSERVATIONS = 4
DIURNAL_HALF_RANGE_C = 5.0  # only the daily mean matters for GDD


@dataclass(frozen=True)
class ClimateModel:
    """Annual temperature cycle: mean, seasonal amplitude, coldest-day phase,
    and i.i.d. daily noise (all degrees C except the phase day)."""

    mean_temp_c: float
    seasonal_amplitude_c: float = 10.0
    phase_day: float = 15.0
    daily_noise_c: float = 0.0

    def __post_init__(self):
        if self.seasonal_amplitude_c < 0 or self.daily_noise_c < 0:
            raise ValueError("climate amplitude and noise must be >= 0")


@dataclass(frozen=True)
class CropPrototype:
    """Double-logistic growth in thermal time plus per-channel reflectances."""

    class_id: str
    base: tuple
    amplitude: tuple
    g_sos: float
    g_eos: float
    rise_rate: float = 120.0
    fall_rate: float = 120.0
    pixel_noise: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        object.__setattr__(self, "amplitude", tuple(float(v) for v in self.amplitude))
        if len(self.base) != len(self.amplitude):
            raise ValueError(f"class {self.class_id!r}: base/amplitude channel counts differ")
        if not 0 <= self.g_sos < self.g_eos:
            raise ValueError(f"class {self.class_id!r}: need 0 <= g_sos < g_eos")
        if self.rise_rate <= 0 or self.fall_rate <= 0 or self.pixel_noise < 0:
            raise ValueError(f"class {self.class_id!r}: bad rate or noise")

    def same_spectra(self, other: "CropPrototype") -> bool:
        return self.base == other.base and self.amplitude == other.amplitude


@dataclass(frozen=True)
class RegionSpec:
    region_id: str
    climate: ClimateModel


@dataclass(frozen=True)
class DatasetSpec:
    regions: tuple
    classes: tuple
    parcels_per_class: int
    pixels_per_parcel: int = 8
    channels: int = 4
    cadence_days: int = 5
    dropout_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.regions) < 2:
            raise ValueError("dataset spec: need at least 2 regions")
        if len(self.classes) < 2:
            raise ValueError("dataset spec: need at least 2 classes")
        if len({r.region_id for r in self.regions}) != len(self.regions):
            raise ValueError("dataset spec: duplicate region ids")
        if len({c.class_id for c in self.classes}) != len(self.classes):
            raise ValueError("dataset spec: duplicate class ids")
        if self.parcels_per_class < 1 or self.pixels_per_parcel < 1:
            raise ValueError("dataset spec: parcel and pixel counts must be >= 1")
        if self.cadence_days < 1:
            raise ValueError("dataset spec: cadence must be >= 1 day")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dataset spec: dropout probability must be in [0, 1)")
        for c in self.classes:
            if len(c.base) != self.channels:
                raise ValueError(f"class {c.class_id!r}: {len(c.base)} channels, spec says {self.channels}")
        if not self._has_timing_pair():
            raise ValueError(
                "dataset spec: class list needs a timing pair "
                "(identical spectra, different season start)"
            )

    def _has_timing_pair(self) -> bool:
        for i, a in enumerate(self.classes):
            for b in self.classes[i + 1:]:
                if a.same_spectra(b) and a.g_sos != b.g_sos:
                    return True
        return False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetSpec":
        raw = json.loads(text)
        raw["regions"] = tuple(
            RegionSpec(r["region_id"], ClimateModel(**r["climate"])) for r in raw["regions"]
        )
        raw["classes"] = tuple(CropPrototype(**c) for c in raw["classes"])
        return cls(**raw)


def gen_region_temperature(climate: ClimateModel, rng: np.random.Generator):
    """Daily (tmin, tmax) arrays for one synthetic year.

    tavg(d) = mean - amplitude * cos(2 pi ((d - phase) mod 365) / 365) + noise,
    so the annual minimum sits at the phase day and two climates differing
    only in phase produce exactly circularly-shifted series (at zero noise).
    """
    days = np.arange(1, DAYS_PER_YEAR + 1, dtype=np.float64)
    arg = np.mod(days - climate.phase_day, DAYS_PER_YEAR)
    tavg = climate.mean_temp_c - climate.seasonal_amplitude_c * np.cos(
        2.0 * np.pi * arg / DAYS_PER_YEAR
    )
    if climate.daily_noise_c > 0:
        tavg = tavg + climate.daily_noise_c * rng.standard_normal(DAYS_PER_YEAR)
    return tavg - DIURNAL_HALF_RANGE_C, tavg + DIURNAL_HALF_RANGE_C


def region_temperature_series(region: RegionSpec, rng: np.random.Generator) -> TemperatureSeries:
    tmin, tmax = gen_region_temperature(region.climate, rng)
    return TemperatureSeries(region.region_id, tmin, tmax)


def growth_signal(gdd_values: np.ndarray, proto: CropPrototype) -> np.ndarray:
    """Double-logistic greenness as a function of cumulative GDD, in [0, 1)."""
    g = np.asarray(gdd_values, dtype=np.float64)
    rise = 1.0 / (1.0 + np.exp(-(g - proto.g_sos) / proto.rise_rate))
    fall = 1.0 / (1.0 + np.exp(-(g - proto.g_eos) / proto.fall_rate))
    return rise - fall


def observation_day_grid(cadence_days: int) -> np.ndarray:
    """Every cadence-th day of the year."""
    return np.arange(cadence_days, DAYS_PER_YEAR + 1, cadence_days, dtype=np.int64)


def draw_observation_days(spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """Cadence grid thinned by independent dropout; redrawn until at least
    MIN_OBSERVATIONS survive."""
    grid = observation_day_grid(spec.cadence_days)
    if grid.size < MIN_OBSERVATIONS:
        raise ValueError(
            f"cadence {spec.cadence_days} leaves only {grid.size} candidate days"
        )
    if spec.dropout_prob == 0.0:
        return grid.copy()
    for _ in range(1000):
        keep = rng.random(grid.size) >= spec.dropout_prob
        if keep.sum() >= MIN_OBSERVATIONS:
            return grid[keep]
    raise RuntimeError("observation dropout failed to keep enough days after 1000 draws")


def gen_parcel(proto: CropPrototype, timeline: ThermalTimeline, spec: DatasetSpec,
               rng: np.random.Generator, days: np.ndarray | None = None,
               parcel_id: str = "", split: str = "train") -> ParcelSample:
    """One parcel: reflectance = base + amplitude * growth(GDD) + pixel noise,
    clamped to [0, 1]."""
    if days is None:
        days = draw_observation_days(spec, rng)
    days = np.asarray(days, dtype=np.int64)
    g = gdd_at_days(timeline, days)
    v = growth_signal(g, proto)                                   # (T,)
    base = np.asarray(proto.base)
    amp = np.asarray(proto.amplitude)
    clean = base + amp * v[:, None]                               # (T, C)
    pixels = np.repeat(clean[:, None, :], spec.pixels_per_parcel, axis=1)
    if proto.pixel_noise > 0:
        pixels = pixels + proto.pixel_noise * rng.standard_normal(pixels.shape)
    pixels = np.clip(pixels, 0.0, 1.0)
    return ParcelSample(
        parcel_id=parcel_id or f"{timeline.region_id}-{proto.class_id}-0",
        region_id=timeline.region_id,
        split=split,
        label=proto.class_id,
        days=days,
        pixels=pixels,
    )


def _split_counts(n: int) -> tuple:
    """70/10/20 by integer floor; the remainder lands in test."""
    n_train = (7 * n) // 10
    n_val = n // 10
    return n_train, n_val, n - n_train - n_val


def gen_dataset(spec: DatasetSpec, out_dir=None,
                thermal_cfg: ThermalConfig = ThermalConfig()) -> Dataset:
    """Build the full multi-region dataset; optionally write it to disk.

    All randomness derives from (spec.seed, region, class, index) substreams,
    so the output is byte-identical across runs and parcels could be drawn
    in any order.
    """
    series = {}
    timelines = {}
    for region in spec.regions:
        s = region_temperature_series(region, substream(spec.seed, "temps", region.region_id))
        series[region.region_id] = s
        timelines[region.region_id] = accumulate(s, thermal_cfg)
    parcels = []
    for region in spec.regions:
        rid = region.region_id
        for proto in spec.classes:
            n = spec.parcels_per_class
            n_train, n_val, _ = _split_counts(n)
            order = substream(spec.seed, "split", rid, proto.class_id).permutation(n)
            split_of = np.empty(n, dtype=object)
            split_of[order[:n_train]] = "train"
            split_of[order[n_train:n_train + n_val]] = "val"
            split_of[order[n_train + n_val:]] = "test"
            for idx in range(n):
                parcels.append(gen_parcel(
                    proto, timelines[rid], spec,
                    substream(spec.seed, "parcel", rid, proto.class_id, idx),
                    parcel_id=f"{rid}-{proto.class_id}-{idx:04d}",
                    split=split_of[idx],
                ))
    manifest = {
        "format": "thermosits-dataset-v1",
        "seed": spec.seed,
        "spec": json.loads(spec.to_json()),
        "thermal": {
            "t_base": thermal_cfg.t_base,
            "t_cap": thermal_cfg.t_cap,
            "accumulation_start_day": thermal_cfg.accumulation_start_day,
        },
    }
    ds = Dataset(parcels, series, manifest, root=out_dir)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_parcels(os.path.join(out_dir, "parcels.jsonl"), parcels)
        write_atomic(os.path.join(out_dir, "temperatures.csv"),
                     temperature_csv_text([series[r.region_id] for r in spec.regions]).encode("utf-8"))
        write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return ds


def make_shift_twin(climate: ClimateModel, delta_days: int) -> ClimateModel:
    """Climate whose temperature series is the exact delta-day shift of the
    given one. Requires a noise-free climate; noise would break exactness."""
    if climate.daily_noise_c != 0:
        raise ValueError("shift twins need a noise-free climate")
    return replace(climate, phase_day=climate.phase_day + delta_days)


# Canonical three-region benchmark: cool/mid/warm climates whose season
# starts differ by roughly 15 days per step, five classes of which four form
# two timing pairs. Tuned so held-out generalization separates calendar- and
# thermal-position models decisively.
_BENCH_CHANNELS = 4


def _bench_classes() -> tuple:
    spectra_a = {"base": (0.10, 0.16, 0.10, 0.30), "amplitude": (0.08, 0.22, 0.55, 0.35)}
    spectra_b = {"base": (0.14, 0.12, 0.16, 0.24), "amplitude": (0.30, 0.50, 0.20, 0.45)}
    spectra_c = {"base": (0.22, 0.20, 0.12, 0.40), "amplitude": (0.55, 0.10, 0.40, 0.12)}
    noise = 0.03
    return (
        CropPrototype("early_a", g_sos=700.0, g_eos=1700.0, pixel_noise=noise, **spectra_a),
        CropPrototype("late_a", g_sos=1500.0, g_eos=2500.0, pixel_noise=noise, **spectra_a),
        CropPrototype("early_b", g_sos=900.0, g_eos=1900.0, pixel_noise=noise, **spectra_b),
        CropPrototype("late_b", g_sos=1700.0, g_eos=2700.0, pixel_noise=noise, **spectra_b),
        CropPrototype("steady_c", g_sos=400.0, g_eos=2900.0, pixel_noise=noise, **spectra_c),
    )


def canonical_benchmark_spec(seed: int = 0, parcels_per_class: int = 200) -> DatasetSpec:
    """Three-region leave-one-region-out benchmark used by the acceptance
    suite: ~30 days of phenology shift between the coolest and warmest
    regions, GDD ranges of roughly 1800-3800 degree-days."""
    regions = (
        RegionSpec("cool", ClimateModel(mean_temp_c=6.0, seasonal_amplitude_c=10.0,
                                        phase_day=15.0, daily_noise_c=0.8)),
        RegionSpec("mid", ClimateModel(mean_temp_c=8.5, seasonal_amplitude_c=10.0,
                                       phase_day=15.0, daily_noise_c=0.8)),
        RegionSpec("warm", ClimateModel(mean_temp_c=11.0, seasonal_amplitude_c=10.0,
                                        phase_day=15.0, daily_noise_c=0.8)),
    )
    return DatasetSpec(
        regions=regions,
        classes=_bench_classes(),
        parcels_per_class=parcels_per_class,
        pixels_per_parcel=8,
        channels=_BENCH_CHANNELS,
        cadence_days=8,
        dropout_prob=0.3,
        seed=seed,
    )
