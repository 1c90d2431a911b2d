"""Flat `key = value` run configuration with a closed schema.

Dotted keys group related settings (`train.*`, `model.*`, `pe.*`,
`thermal.*`, `loro.*`). Unknown keys are rejected up front, flag overrides
(`--set key=value`) replace exactly one key each, and the merged result can
be written back out as a valid config file for provenance.
"""

from .model import VARIANTS, ModelConfig
from .experiment import TrainConfig
from .thermal import ThermalConfig

__all__ = ["UsageError", "RunConfig", "SCHEMA"]


class UsageError(ValueError):
    """Bad invocation: unknown key/flag/subcommand or malformed value."""


def _parse_int(s):
    return int(s)


def _parse_float(s):
    return float(s)


def _parse_str(s):
    return s


def _parse_variant(s):
    if s not in VARIANTS:
        raise UsageError(f"unknown variant {s!r}; expected one of {', '.join(VARIANTS)}")
    return s


def _parse_variant_list(s):
    out = [v.strip() for v in s.split(",") if v.strip()]
    for v in out:
        _parse_variant(v)
    if not out:
        raise UsageError("variant list is empty")
    return out


def _parse_int_list(s):
    out = [int(v) for v in s.split(",") if v.strip()]
    if not out:
        raise UsageError("integer list is empty")
    return out


def _parse_optional_variant(s):
    return _parse_variant(s) if s else ""


def _fmt_list(v):
    return ",".join(str(x) for x in v)


# key -> (parser, formatter, default)
SCHEMA = {
    "data.dir": (_parse_str, str, ""),
    "output.dir": (_parse_str, str, "out"),
    "pe.kind": (_parse_variant, str, "tpe_sin"),
    "pe.tau": (_parse_float, repr, 0.0),  # 0 -> the position kind's default
    "pe.max_shift_days": (_parse_int, str, 60),
    "train.epochs": (_parse_int, str, 100),
    "train.batch_size": (_parse_int, str, 128),
    "train.lr": (_parse_float, repr, 1e-3),
    "train.weight_decay": (_parse_float, repr, 1e-4),
    "train.seed": (_parse_int, str, 0),
    "train.pixels": (_parse_int, str, 8),
    "train.regions": (_parse_str, str, "all"),
    "model.dim": (_parse_int, str, 128),
    "model.heads": (_parse_int, str, 16),
    "model.key_dim": (_parse_int, str, 8),
    "model.mlp1_hidden": (_parse_int_list, _fmt_list, [32, 64]),
    "model.head_hidden": (_parse_int_list, _fmt_list, [64, 32]),
    "model.fourier_hidden": (_parse_int, str, 0),  # 0 -> model.dim
    "model.concat_divisor": (_parse_float, repr, 1.0),
    "thermal.t_base": (_parse_float, repr, 0.0),
    "thermal.t_cap": (_parse_float, repr, 30.0),
    "thermal.start_day": (_parse_int, str, 1),
    "loro.variants": (_parse_variant_list, _fmt_list,
                      ["calendar", "calendar_shiftaug", "none",
                       "tpe_sin", "tpe_concat", "tpe_fourier", "tpe_recurrent"]),
    "loro.seeds": (_parse_int_list, _fmt_list, [1, 2, 3]),
    "loro.jobs": (_parse_int, str, 1),
    "loro.upper_bound": (_parse_optional_variant, str, "tpe_recurrent"),
}


class RunConfig:
    """Validated key/value view over the schema above."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, _, default) in SCHEMA.items()}
        if values:
            for k, v in values.items():
                self.set_parsed(k, v)

    def __getitem__(self, key):
        return self.values[key]

    def set_raw(self, key: str, raw: str) -> None:
        if key not in SCHEMA:
            raise UsageError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(raw.strip())
        except UsageError:
            raise
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: bad value {raw.strip()!r} ({exc})") from None

    def set_parsed(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise UsageError(f"unknown config key {key!r}")
        self.values[key] = value

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
                key, _, raw = stripped.partition("=")
                try:
                    cfg.set_raw(key.strip(), raw)
                except UsageError as exc:
                    raise UsageError(f"{path}:{lineno}: {exc}") from None
        return cfg

    def apply_overrides(self, pairs) -> None:
        """`--set key=value` overrides; each names exactly one schema key."""
        for pair in pairs or ():
            if "=" not in pair:
                raise UsageError(f"--set expects key=value, got {pair!r}")
            key, _, raw = pair.partition("=")
            self.set_raw(key.strip(), raw)

    def to_text(self) -> str:
        lines = []
        for key in sorted(SCHEMA):
            fmt = SCHEMA[key][1]
            lines.append(f"{key} = {fmt(self.values[key])}")
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------
    # typed views

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            base_lr=self["train.lr"],
            weight_decay=self["train.weight_decay"],
            seed=self["train.seed"],
            pixel_sample=self["train.pixels"],
        )

    def model_config(self, channels: int, classes: int) -> ModelConfig:
        return ModelConfig(
            variant=self["pe.kind"],
            channels=channels,
            classes=classes,
            dim=self["model.dim"],
            heads=self["model.heads"],
            key_dim=self["model.key_dim"],
            mlp1_hidden=tuple(self["model.mlp1_hidden"]),
            head_hidden=tuple(self["model.head_hidden"]),
            tau=self["pe.tau"] or None,
            fourier_hidden=self["model.fourier_hidden"] or None,
            concat_divisor=self["model.concat_divisor"],
            max_shift_days=self["pe.max_shift_days"],
        )

    def thermal_config(self) -> ThermalConfig:
        return ThermalConfig(
            t_base=self["thermal.t_base"],
            t_cap=self["thermal.t_cap"],
            accumulation_start_day=self["thermal.start_day"],
        )

    def regions(self):
        raw = self["train.regions"].strip()
        if raw in ("", "all"):
            return None
        return [r.strip() for r in raw.split(",") if r.strip()]
