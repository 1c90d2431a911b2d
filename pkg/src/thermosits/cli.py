"""Command-line entry point.

Subcommands: gen-data, gdd, train, eval, loro, report. All outputs are
written atomically and every run persists its merged configuration next to
its artifacts, so reruns with identical inputs and seed overwrite with
byte-identical files. Exit status: 0 success, 2 usage error, 1 runtime
failure. Timing goes to stderr only, keeping artifacts deterministic.
"""

import argparse
import json
import os
import sys
import time

from .checkpoint import write_atomic
from .config import RunConfig, UsageError
from .dataset import load_dataset
from .experiment import evaluate, flatten_table_csv, leave_one_region_out, train
from .model import load_model, save_model
from .synthgen import DatasetSpec, gen_dataset
from .thermal import ThermalConfig, accumulate, load_temperature_csv

__all__ = ["main"]


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write_text(path, text: str) -> None:
    write_atomic(path, text.encode("utf-8"))


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    cfg.apply_overrides(getattr(args, "set", None))
    return cfg


def _cmd_gen_data(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = DatasetSpec.from_json(fh.read())
    gen_dataset(spec, out_dir=args.out)
    print(f"gen-data: wrote dataset to {args.out}", file=sys.stderr)
    return 0


def _cmd_gdd(args) -> int:
    series = {s.region_id: s for s in load_temperature_csv(args.temps)}
    if args.region not in series:
        raise ValueError(f"gdd: region {args.region!r} not in {sorted(series)}")
    cfg = ThermalConfig(t_base=args.t_base, t_cap=args.t_cap,
                        accumulation_start_day=args.start_day)
    timeline = accumulate(series[args.region], cfg)
    out = ["day_of_year,gdd"]
    out.extend(f"{d + 1},{float(g)!r}" for d, g in enumerate(timeline.gdd))
    print("\n".join(out))
    return 0


def _persist_config(cfg: RunConfig, out_dir: str) -> None:
    _write_text(os.path.join(out_dir, "effective-config.txt"), cfg.to_text())


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    if not cfg["data.dir"]:
        raise UsageError("train: config key data.dir is required")
    dataset = load_dataset(cfg["data.dir"])
    out_dir = cfg["output.dir"]
    os.makedirs(out_dir, exist_ok=True)
    started = time.perf_counter()
    result = train(
        dataset,
        cfg.train_config(),
        cfg.model_config(dataset.channels, dataset.n_classes),
        cfg.thermal_config(),
        regions=cfg.regions(),
    )
    elapsed = time.perf_counter() - started
    save_model(os.path.join(out_dir, "model.ckpt"), result.model)
    log_text = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in result.log)
    _write_text(os.path.join(out_dir, "train_log.jsonl"), log_text)
    _persist_config(cfg, out_dir)
    print(
        f"train: {cfg['pe.kind']} best val F1 {result.best_val_macro_f1:.4f} "
        f"at epoch {result.best_epoch}; {elapsed:.1f}s "
        f"({elapsed / max(len(result.log), 1):.2f}s/epoch)",
        file=sys.stderr,
    )
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    dataset = load_dataset(args.data)
    splits = None if args.split == "all" else [args.split]
    thermal = ThermalConfig(t_base=args.t_base, t_cap=args.t_cap,
                            accumulation_start_day=args.start_day)
    report = evaluate(model, dataset, args.region, splits=splits, thermal_cfg=thermal,
                      pixel_sample=args.pixels or None)
    text = _json_text(report.to_dict())
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return 0


def _cmd_loro(args) -> int:
    cfg = _load_config(args)
    if not cfg["data.dir"]:
        raise UsageError("loro: config key data.dir is required")
    dataset = load_dataset(cfg["data.dir"])
    out_dir = cfg["output.dir"]
    os.makedirs(out_dir, exist_ok=True)

    def progress(done, total, key):
        print(f"loro: {done}/{total} {key[0]} holdout={key[1]} seed={key[2]}"
              f"{' (upper bound)' if key[3] else ''}", file=sys.stderr)

    started = time.perf_counter()
    table = leave_one_region_out(
        dataset,
        cfg["loro.variants"],
        cfg["loro.seeds"],
        cfg.train_config(),
        cfg.model_config(dataset.channels, dataset.n_classes),
        cfg.thermal_config(),
        upper_bound_variant=cfg["loro.upper_bound"] or None,
        jobs=cfg["loro.jobs"],
        progress=progress,
    )
    _write_text(os.path.join(out_dir, "loro_table.json"), _json_text(table))
    _write_text(os.path.join(out_dir, "loro_table.csv"), flatten_table_csv(table))
    _persist_config(cfg, out_dir)
    print(f"loro: finished in {time.perf_counter() - started:.1f}s", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    with open(args.infile, encoding="utf-8") as fh:
        table = json.load(fh)
    sys.stdout.write(render_table(table))
    return 0


def render_table(table: dict) -> str:
    """Text table: one row per variant, F1/OA per region plus the average."""
    regions = table["regions"]
    name_w = max([len(v) for v in table["variants"]] + [len("upper_bound"), 6]) + 2
    header = "Method".ljust(name_w)
    for r in regions:
        header += f"{r:>12} F1    OA "
    header += f"{'Avg.':>12} F1    OA "
    lines = [header, "-" * len(header)]

    def row(name, cells, avg):
        line = name.ljust(name_w)
        for r in regions:
            line += f"{100 * cells[r]['macro_f1_mean']:>15.1f} {100 * cells[r]['oa_mean']:>5.1f}"
        line += f"{100 * avg['macro_f1_mean']:>15.1f} {100 * avg['oa_mean']:>5.1f}"
        return line

    for variant in table["variants"]:
        lines.append(row(variant, table["cells"][variant], table["avg"][variant]))
    if table.get("upper_bound"):
        lines.append("-" * len(header))
        lines.append(row("upper_bound", table["upper_bound"], table["upper_bound_avg"]))
        lines.append(f"(upper bound trained as {table['upper_bound_variant']} on all regions)")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermosits",
        description="Thermal-time positional encodings for SITS crop classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="dataset spec JSON file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("gdd", help="print per-day cumulative GDD as CSV")
    p.add_argument("--temps", required=True, help="temperature CSV file")
    p.add_argument("--region", required=True)
    p.add_argument("--t-base", type=float, default=0.0)
    p.add_argument("--t-cap", type=float, default=30.0)
    p.add_argument("--start-day", type=int, default=1)
    p.set_defaults(fn=_cmd_gdd)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one region")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--region", required=True)
    p.add_argument("--split", choices=["all", "train", "val", "test"], default="all")
    p.add_argument("--pixels", type=int, default=0, help="pixel sample size (0 = all)")
    p.add_argument("--t-base", type=float, default=0.0)
    p.add_argument("--t-cap", type=float, default=30.0)
    p.add_argument("--start-day", type=int, default=1)
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("loro", help="leave-one-region-out benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--jobs", type=int, default=0,
                   help="override loro.jobs worker count")
    p.set_defaults(fn=_cmd_loro)

    p = sub.add_parser("report", help="render a benchmark table as text")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "loro" and args.jobs:
        args.set = (args.set or []) + [f"loro.jobs={args.jobs}"]
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"thermosits: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"thermosits: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
