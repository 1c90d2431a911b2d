"""Parcel dataset container and on-disk formats.

A dataset directory holds three files:

    parcels.jsonl      one parcel per line:
                       {"parcel_id", "region_id", "split", "label",
                        "days": [int x T], "pixels": [[[float x C] x S] x T]}
    temperatures.csv   region_id,day_of_year,tmin_c,tmax_c (days 1..365)
    manifest.json      generator spec and seed

Pixels are stored already normalized to [0, 1]. Raw 16-bit acquisitions can
be ingested with `load_parcels(..., raw_16bit=True)`, which divides by
2^16 - 1 on the way in.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import write_atomic
from .thermal import TemperatureSeries, load_temperature_csv

__all__ = [
    "SPLITS",
    "ParcelSample",
    "Dataset",
    "load_dataset",
    "load_parcels",
    "write_parcels",
    "write_manifest",
    "temperature_csv_text",
]

SPLITS = ("train", "val", "test")

RAW16_SCALE = 2**16 - 1


@dataclass
class ParcelSample:
    """One labeled parcel: T observation days with an S x C pixel set each."""

    parcel_id: str
    region_id: str
    split: str
    label: str
    days: np.ndarray
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.days = np.asarray(self.days, dtype=np.int64)
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.split not in SPLITS:
            raise ValueError(f"parcel {self.parcel_id!r}: unknown split {self.split!r}")
        if self.days.ndim != 1 or self.pixels.ndim != 3 \
                or self.pixels.shape[0] != self.days.size:
            raise ValueError(
                f"parcel {self.parcel_id!r}: days {self.days.shape} vs pixels {self.pixels.shape}"
            )
        if np.any(np.diff(self.days) <= 0):
            raise ValueError(f"parcel {self.parcel_id!r}: observation days must increase")
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise ValueError(f"parcel {self.parcel_id!r}: pixel values outside [0, 1]")

    @property
    def n_obs(self) -> int:
        return self.days.size


class Dataset:
    """Parcels plus per-region temperatures; labels map to sorted class ids."""

    def __init__(self, parcels: list, temperatures: dict, manifest: dict, root=None):
        self.parcels = list(parcels)
        self.temperatures = dict(temperatures)
        self.manifest = dict(manifest)
        self.root = root
        self.class_names = sorted({p.label for p in self.parcels})
        self.label_index = {c: i for i, c in enumerate(self.class_names)}
        self.regions = sorted({p.region_id for p in self.parcels})
        for p in self.parcels:
            if p.region_id not in self.temperatures:
                raise ValueError(f"parcel {p.parcel_id!r}: no temperatures for region {p.region_id!r}")

    @property
    def channels(self) -> int:
        return self.parcels[0].pixels.shape[2] if self.parcels else 0

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def select(self, regions=None, splits=None) -> list:
        regions = set(regions) if regions is not None else None
        splits = set(splits) if splits is not None else None
        return [
            p for p in self.parcels
            if (regions is None or p.region_id in regions)
            and (splits is None or p.split in splits)
        ]


def _parcel_from_record(rec: dict, lineno: int, raw_16bit: bool) -> ParcelSample:
    try:
        pixels = np.asarray(rec["pixels"], dtype=np.float64)
        if raw_16bit:
            pixels = pixels / RAW16_SCALE
        return ParcelSample(
            parcel_id=rec["parcel_id"],
            region_id=rec["region_id"],
            split=rec["split"],
            label=str(rec["label"]),
            days=rec["days"],
            pixels=pixels,
        )
    except KeyError as exc:
        raise ValueError(f"parcels line {lineno}: missing field {exc}") from None


def load_parcels(path, raw_16bit: bool = False) -> list:
    parcels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            parcels.append(_parcel_from_record(rec, lineno, raw_16bit))
    return parcels


def load_dataset(root) -> Dataset:
    parcels = load_parcels(os.path.join(root, "parcels.jsonl"))
    series = load_temperature_csv(os.path.join(root, "temperatures.csv"))
    with open(os.path.join(root, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    return Dataset(parcels, {s.region_id: s for s in series}, manifest, root=root)


def _parcel_record(p: ParcelSample) -> str:
    rec = {
        "parcel_id": p.parcel_id,
        "region_id": p.region_id,
        "split": p.split,
        "label": p.label,
        "days": p.days.tolist(),
        "pixels": p.pixels.tolist(),
    }
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def write_parcels(path, parcels) -> None:
    text = "".join(_parcel_record(p) + "\n" for p in parcels)
    write_atomic(path, text.encode("utf-8"))


def write_manifest(path, manifest: dict) -> None:
    write_atomic(path, (json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode("utf-8"))


def temperature_csv_text(series_list) -> str:
    lines = ["region_id,day_of_year,tmin_c,tmax_c"]
    for s in series_list:
        for d in range(s.tmin_c.size):
            lines.append(f"{s.region_id},{d + 1},{float(s.tmin_c[d])!r},{float(s.tmax_c[d])!r}")
    return "\n".join(lines) + "\n"
