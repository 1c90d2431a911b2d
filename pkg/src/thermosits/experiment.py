"""Training, evaluation, and the leave-one-region-out benchmark.

Training follows a plain recipe: shuffled mini-batches, cross-entropy loss,
Adam with decoupled weight decay, cosine-annealed learning rate, and the
checkpoint with the best validation macro F1 retained. Every random draw
comes from substreams named by (seed, purpose, epoch), so a (config, seed)
pair fully determines every logged number.

The leave-one-region-out harness trains on all regions but one and
evaluates on the complete parcel set of the held-out region; upper-bound
mode instead trains on every region's train split and evaluates on the
held-out region's test split.
"""

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .dataset import Dataset, load_dataset
from .metrics import EvalReport, confusion_matrix, report_from_confusion
from .model import Model, ModelConfig, PixelSetBatch, build_model, position_kind
from .optim import OptimizerState, adam_step, cosine_lr
from .rngs import substream
from .thermal import ThermalConfig, accumulate, gdd_at_days

__all__ = [
    "TrainConfig",
    "TrainResult",
    "train",
    "evaluate",
    "leave_one_region_out",
    "flatten_table_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    seed: int = 0
    pixel_sample: int = 8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(f"batch size must be >= 2 (batch norm), got {self.batch_size}")


@dataclass
class TrainResult:
    model: Model
    log: list          # one dict per epoch
    best_epoch: int
    best_val_macro_f1: float


def region_timelines(dataset: Dataset, thermal_cfg: ThermalConfig) -> dict:
    return {rid: accumulate(series, thermal_cfg)
            for rid, series in dataset.temperatures.items()}


class _Prepped:
    """Parcels in canonical order with precomputed positions for one variant."""

    def __init__(self, dataset: Dataset, parcels: list, kind: str | None, timelines: dict):
        self.parcels = sorted(parcels, key=lambda p: p.parcel_id)
        self.labels = np.array([dataset.label_index[p.label] for p in self.parcels],
                               dtype=np.int64)
        self.kind = kind
        if kind == "thermal":
            self.positions = [gdd_at_days(timelines[p.region_id], p.days) for p in self.parcels]
        elif kind == "calendar":
            self.positions = [p.days.astype(np.float64) for p in self.parcels]
        else:
            self.positions = None

    def __len__(self):
        return len(self.parcels)


def _pixel_columns(n_have: int, n_want: int, rng=None) -> np.ndarray:
    if rng is None:
        return np.arange(n_want) % n_have           # deterministic evaluation draw
    if n_have >= n_want:
        return rng.choice(n_have, size=n_want, replace=False)
    return rng.integers(0, n_have, size=n_want)     # with replacement when short


def _assemble(prep: _Prepped, idx: np.ndarray, pixel_sample: int,
              rng=None, shifts=None) -> tuple:
    """Pad a parcel subset into a PixelSetBatch plus its label vector."""
    chosen = [prep.parcels[i] for i in idx]
    b = len(chosen)
    t_max = max(p.n_obs for p in chosen)
    c = chosen[0].pixels.shape[2]
    values = np.zeros((b, t_max, pixel_sample, c))
    mask = np.zeros((b, t_max), dtype=bool)
    positions = None if prep.positions is None else np.zeros((b, t_max))
    for row, (i, p) in enumerate(zip(idx, chosen)):
        t = p.n_obs
        cols = _pixel_columns(p.pixels.shape[1], pixel_sample, rng)
        values[row, :t] = p.pixels[:, cols, :]
        mask[row, :t] = True
        if positions is not None:
            pos = prep.positions[i]
            if shifts is not None:
                pos = pos + shifts[row]
            positions[row, :t] = pos
            positions[row, t:] = pos[-1]
    return PixelSetBatch(values, positions, mask), prep.labels[idx]


def _batch_bounds(n: int, batch_size: int) -> list:
    """Contiguous batch index ranges; a trailing singleton is merged into the
    previous batch so batch-norm always sees at least two samples."""
    bounds = list(range(0, n, batch_size)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        del bounds[-2]
    return list(zip(bounds[:-1], bounds[1:]))


def _predict(model: Model, prep: _Prepped, batch_size: int, pixel_sample: int) -> np.ndarray:
    preds = np.empty(len(prep), dtype=np.int64)
    order = np.arange(len(prep))
    for lo, hi in _batch_bounds(len(prep), batch_size):
        batch, _ = _assemble(prep, order[lo:hi], pixel_sample)
        logits = model.forward(batch, training=False)
        preds[lo:hi] = np.argmax(logits.data, axis=1)
    return preds


def train(dataset: Dataset, cfg: TrainConfig, model_cfg: ModelConfig,
          thermal_cfg: ThermalConfig = ThermalConfig(),
          regions=None, log_fn=None) -> TrainResult:
    """Train one variant on the train split, keep the best-validation model.

    `regions` restricts which regions contribute train/val parcels (all by
    default). `log_fn`, when given, receives each epoch's log record.
    """
    model_cfg = replace(model_cfg, channels=dataset.channels, classes=dataset.n_classes)
    timelines = region_timelines(dataset, thermal_cfg)
    kind = position_kind(model_cfg.variant)
    train_parcels = dataset.select(regions=regions, splits=["train"])
    val_parcels = dataset.select(regions=regions, splits=["val"])
    if not train_parcels or not val_parcels:
        raise ValueError(
            f"train: empty split (train={len(train_parcels)}, val={len(val_parcels)})"
        )
    prep_train = _Prepped(dataset, train_parcels, kind, timelines)
    prep_val = _Prepped(dataset, val_parcels, kind, timelines)

    model = build_model(model_cfg, cfg.seed)
    params = model.trainable()
    opt = OptimizerState({n: t.data.shape for n, t in params.items()},
                         weight_decay=cfg.weight_decay)
    shiftaug = model_cfg.variant == "calendar_shiftaug"

    best_state = {n: a.copy() for n, a in model.state_arrays().items()}
    best_f1 = -1.0
    best_epoch = -1
    log = []
    n_train = len(prep_train)
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr)
        order = substream(cfg.seed, "shuffle", epoch).permutation(n_train)
        pix_rng = substream(cfg.seed, "pixels", epoch)
        shifts_all = None
        if shiftaug:
            shifts_all = substream(cfg.seed, "shiftaug", epoch).integers(
                -model_cfg.max_shift_days, model_cfg.max_shift_days + 1, size=n_train
            )
        loss_sum = 0.0
        for lo, hi in _batch_bounds(n_train, cfg.batch_size):
            idx = order[lo:hi]
            shifts = shifts_all[lo:hi] if shifts_all is not None else None
            batch, labels = _assemble(prep_train, idx, cfg.pixel_sample, pix_rng, shifts)
            logits = model.forward(batch, training=True)
            loss = ad.cross_entropy(logits, labels)
            loss.backward()
            grads = {n: t.grad for n, t in params.items() if t.grad is not None}
            adam_step(params, grads, opt, lr)
            for t in params.values():
                t.grad = None
            loss_sum += loss.item() * len(idx)

        val_preds = _predict(model, prep_val, cfg.batch_size, cfg.pixel_sample)
        cm = confusion_matrix(val_preds, prep_val.labels, dataset.n_classes)
        val_report = report_from_confusion(cm, dataset.class_names, "val",
                                           model_cfg.variant, cfg.seed)
        improved = val_report.macro_f1 > best_f1
        if improved:
            best_f1 = val_report.macro_f1
            best_epoch = epoch
            best_state = {n: a.copy() for n, a in model.state_arrays().items()}
        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": loss_sum / n_train,
            "val_macro_f1": val_report.macro_f1,
            "val_oa": val_report.overall_accuracy,
            "best": improved,
        }
        log.append(record)
        if log_fn is not None:
            log_fn(record)

    model.load_state_arrays(best_state)
    return TrainResult(model=model, log=log, best_epoch=best_epoch, best_val_macro_f1=best_f1)


def evaluate(model: Model, dataset: Dataset, region_id: str,
             splits=None, thermal_cfg: ThermalConfig = ThermalConfig(),
             batch_size: int = 128, pixel_sample: int | None = None,
             seed: int = 0) -> EvalReport:
    """Deterministic evaluation of one region (all splits unless given)."""
    if model.config.channels != dataset.channels:
        raise ValueError(
            f"evaluate: model expects {model.config.channels} channels, "
            f"dataset has {dataset.channels}"
        )
    if model.config.classes != dataset.n_classes:
        raise ValueError(
            f"evaluate: model expects {model.config.classes} classes, "
            f"dataset has {dataset.n_classes}"
        )
    if region_id not in dataset.regions:
        raise ValueError(f"evaluate: unknown region {region_id!r}")
    parcels = dataset.select(regions=[region_id], splits=splits)
    if not parcels:
        raise ValueError(f"evaluate: no parcels for region {region_id!r} in splits {splits}")
    timelines = region_timelines(dataset, thermal_cfg)
    prep = _Prepped(dataset, parcels, position_kind(model.config.variant), timelines)
    if pixel_sample is None:
        pixel_sample = parcels[0].pixels.shape[1]
    preds = _predict(model, prep, batch_size, pixel_sample)
    cm = confusion_matrix(preds, prep.labels, dataset.n_classes)
    return report_from_confusion(cm, dataset.class_names, region_id,
                                 model.config.variant, seed)


# ---------------------------------------------------------------------------
# leave-one-region-out harness
# ---------------------------------------------------------------------------


def run_single(dataset: Dataset, variant: str, held_out: str, seed: int,
               cfg: TrainConfig, model_cfg: ModelConfig,
               thermal_cfg: ThermalConfig = ThermalConfig(),
               upper_bound: bool = False):
    """One benchmark cell: train and score against the held-out region.

    Held-out mode never sees the region during training and scores its full
    parcel pool; upper-bound mode trains on every region's train split and
    scores the held-out test split only.
    """
    cfg = replace(cfg, seed=seed)
    model_cfg = replace(model_cfg, variant=variant)
    if upper_bound:
        train_regions = None
        eval_splits = ["test"]
    else:
        train_regions = [r for r in dataset.regions if r != held_out]
        eval_splits = None
    result = train(dataset, cfg, model_cfg, thermal_cfg, regions=train_regions)
    report = evaluate(result.model, dataset, held_out, splits=eval_splits,
                      thermal_cfg=thermal_cfg, batch_size=cfg.batch_size,
                      pixel_sample=cfg.pixel_sample, seed=seed)
    return report, result.log


_WORKER_DATASET = None


def _loro_init(root):
    global _WORKER_DATASET
    _WORKER_DATASET = load_dataset(root)


def _loro_task(task: dict):
    report, _ = run_single(
        _WORKER_DATASET,
        task["variant"],
        task["held_out"],
        task["seed"],
        TrainConfig(**task["train_cfg"]),
        ModelConfig.from_meta(task["model_cfg"]),
        ThermalConfig(**task["thermal_cfg"]),
        upper_bound=task["upper_bound"],
    )
    return task["key"], report.to_dict()


def _aggregate(runs: list) -> dict:
    f1 = np.array([r["macro_f1"] for r in runs])
    oa = np.array([r["overall_accuracy"] for r in runs])
    return {
        "macro_f1_mean": float(f1.mean()),
        "macro_f1_std": float(f1.std()),
        "oa_mean": float(oa.mean()),
        "oa_std": float(oa.std()),
        "runs": [{"seed": r["seed"], "macro_f1": r["macro_f1"],
                  "oa": r["overall_accuracy"]} for r in runs],
    }


def leave_one_region_out(dataset: Dataset, variants, seeds,
                         cfg: TrainConfig, model_cfg: ModelConfig,
                         thermal_cfg: ThermalConfig = ThermalConfig(),
                         upper_bound_variant: str | None = "tpe_recurrent",
                         jobs: int = 1, progress=None) -> dict:
    """Full benchmark table over (variant, held-out region, seed).

    With jobs > 1 the runs fan out to worker processes; this needs a dataset
    loaded from disk (`dataset.root`) so workers can load it once each.
    Results are keyed, so completion order never affects the table.
    """
    if len(dataset.regions) < 2:
        raise ValueError("leave_one_region_out: need at least 2 regions")
    variants = list(variants)
    seeds = [int(s) for s in seeds]
    tasks = []
    for variant in variants:
        for region in dataset.regions:
            for seed in seeds:
                tasks.append({"key": (variant, region, seed, False), "variant": variant,
                              "held_out": region, "seed": seed, "upper_bound": False})
    if upper_bound_variant:
        for region in dataset.regions:
            for seed in seeds:
                tasks.append({"key": (upper_bound_variant, region, seed, True),
                              "variant": upper_bound_variant, "held_out": region,
                              "seed": seed, "upper_bound": True})
    for task in tasks:
        task["train_cfg"] = {
            "epochs": cfg.epochs, "batch_size": cfg.batch_size, "base_lr": cfg.base_lr,
            "weight_decay": cfg.weight_decay, "seed": task["seed"],
            "pixel_sample": cfg.pixel_sample,
        }
        task["model_cfg"] = replace(model_cfg, variant=task["variant"],
                                    channels=dataset.channels,
                                    classes=dataset.n_classes).to_meta()
        task["thermal_cfg"] = {
            "t_base": thermal_cfg.t_base, "t_cap": thermal_cfg.t_cap,
            "accumulation_start_day": thermal_cfg.accumulation_start_day,
        }

    results = {}
    if jobs > 1 and dataset.root is not None:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_loro_init,
                                 initargs=(dataset.root,)) as pool:
            for i, (key, report) in enumerate(pool.map(_loro_task, tasks)):
                results[key] = report
                if progress:
                    progress(i + 1, len(tasks), key)
    else:
        if jobs > 1:
            print("loro: dataset has no on-disk root; running serially", file=sys.stderr)
        for i, task in enumerate(tasks):
            key, report = _loro_task_local(dataset, task)
            results[key] = report
            if progress:
                progress(i + 1, len(tasks), key)

    cells = {}
    for variant in variants:
        cells[variant] = {}
        for region in dataset.regions:
            runs = [results[(variant, region, s, False)] for s in seeds]
            cells[variant][region] = _aggregate(runs)
    avg = {
        variant: {
            "macro_f1_mean": float(np.mean([cells[variant][r]["macro_f1_mean"]
                                            for r in dataset.regions])),
            "oa_mean": float(np.mean([cells[variant][r]["oa_mean"]
                                      for r in dataset.regions])),
        }
        for variant in variants
    }
    table = {
        "regions": dataset.regions,
        "variants": variants,
        "seeds": seeds,
        "cells": cells,
        "avg": avg,
        "upper_bound_variant": upper_bound_variant or None,
        "reports": [results[k] for k in sorted(results, key=lambda k: (k[3], k[0], k[1], k[2]))],
    }
    if upper_bound_variant:
        ub = {}
        for region in dataset.regions:
            runs = [results[(upper_bound_variant, region, s, True)] for s in seeds]
            ub[region] = _aggregate(runs)
        table["upper_bound"] = ub
        table["upper_bound_avg"] = {
            "macro_f1_mean": float(np.mean([ub[r]["macro_f1_mean"] for r in dataset.regions])),
            "oa_mean": float(np.mean([ub[r]["oa_mean"] for r in dataset.regions])),
        }
    return table


def _loro_task_local(dataset: Dataset, task: dict):
    report, _ = run_single(
        dataset,
        task["variant"],
        task["held_out"],
        task["seed"],
        TrainConfig(**task["train_cfg"]),
        ModelConfig.from_meta(task["model_cfg"]),
        ThermalConfig(**task["thermal_cfg"]),
        upper_bound=task["upper_bound"],
    )
    return task["key"], report.to_dict()


def flatten_table_csv(table: dict) -> str:
    """Per-run CSV flattening of a benchmark table for external plotting."""
    lines = ["variant,held_out_region,seed,upper_bound,macro_f1,overall_accuracy"]
    for variant in table["variants"]:
        for region in table["regions"]:
            for run in table["cells"][variant][region]["runs"]:
                lines.append(f"{variant},{region},{run['seed']},0,"
                             f"{run['macro_f1']!r},{run['oa']!r}")
    if table.get("upper_bound"):
        ubv = table["upper_bound_variant"]
        for region in table["regions"]:
            for run in table["upper_bound"][region]["runs"]:
                lines.append(f"{ubv},{region},{run['seed']},1,"
                             f"{run['macro_f1']!r},{run['oa']!r}")
    return "\n".join(lines) + "\n"
