"""Command-line interface.

Subcommands: train-teacher, train-dst, eval, export, analyze-cost, sweep,
attn-dump. Every subcommand accepts --config <json> and --seed; explicit
flags override config-file values. Config JSON mirrors the model/train
dataclasses::

    {"model": {...ModelConfig fields...},
     "train": {...TrainConfig fields...},
     "data": {"seed": 0, "train_size": 20000, "val_size": 2000}}
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import export_submodel, load_checkpoint, save_checkpoint
from .costs import cost_table, cost_table_csv
from .data import QUESTION_LEN, NUM_REGIONS, generate_dataset, generate_sample
from .evaluation import attention_dump_json, capture_attention, evaluate, metrics_csv, run_sweep
from .model import ModelConfig
from .presets import toy_dst_train_config, toy_model_config, toy_teacher_train_config
from .training import TrainConfig, train_dst, train_teacher


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _model_config(cfg: dict) -> ModelConfig:
    base = toy_model_config().to_dict()
    base.pop("embed_dim")  # re-derive from width unless explicitly configured
    base.update(cfg.get("model", {}))
    return ModelConfig.from_dict(base)


def _train_config(cfg: dict, base: TrainConfig, seed: int | None) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    if seed is not None:
        section["seed"] = seed
    return dataclasses.replace(base, **section) if section else base


def _data_params(cfg: dict, seed: int | None) -> dict:
    section = {"seed": 0, "train_size": 20000, "val_size": 2000, "test_size": 2000}
    section.update(cfg.get("data", {}))
    if seed is not None:
        section["seed"] = seed
    return section


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_log(path: str | None, rows: list) -> None:
    if path:
        Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def cmd_train_teacher(args) -> int:
    cfg = _load_config(args.config)
    model_cfg = _model_config(cfg)
    train_cfg = _train_config(cfg, toy_teacher_train_config(), args.seed)
    data = _data_params(cfg, args.seed)
    train_set = generate_dataset(data["seed"], data["train_size"], "train")
    log: list = []
    store = train_teacher(model_cfg, train_cfg, train_set, log)
    save_checkpoint(args.out, store)
    _write_log(args.log, log)
    val = generate_dataset(data["seed"], data["val_size"], "val")
    acc = evaluate(store, store.largest(), val)
    print(f"teacher checkpoint written to {args.out}; val accuracy {acc:.4f}")
    return 0


def cmd_train_dst(args) -> int:
    cfg = _load_config(args.config)
    train_cfg = _train_config(cfg, toy_dst_train_config(), args.seed)
    data = _data_params(cfg, args.seed)
    teacher = load_checkpoint(args.teacher)
    train_set = generate_dataset(data["seed"], data["train_size"], "train")
    log: list = []
    dst = train_dst(teacher, train_cfg, train_set, log)
    save_checkpoint(args.out, dst)
    _write_log(args.log, log)
    print(f"distilled master checkpoint written to {args.out} ({len(log)} iterations)")
    return 0


def _arch_from_args(store, args):
    return store.arch_by_ratio(args.width_ratio, args.depth_ratio)


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    data = _data_params(cfg, args.seed)
    store = load_checkpoint(args.checkpoint)
    arch = _arch_from_args(store, args)
    samples = generate_dataset(data["seed"], data[f"{args.split}_size"], args.split)
    acc = evaluate(store, arch, samples)
    print(f"{arch.label} {args.split} accuracy: {acc:.6f}")
    return 0


def cmd_export(args) -> int:
    store = load_checkpoint(args.checkpoint)
    arch = _arch_from_args(store, args)
    sub = export_submodel(store, arch)
    save_checkpoint(args.out, sub)
    params = sum(t.data.size for _, t in sub.trainable())
    print(f"standalone {arch.label} submodel written to {args.out} ({params} parameters)")
    return 0


def cmd_analyze_cost(args) -> int:
    cfg = _load_config(args.config)
    store = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if store is not None:
        model_cfg, archs = store.config, store.selected()
    else:
        model_cfg = _model_config(cfg)
        from .model import ParamStore

        archs = ParamStore.build(model_cfg, args.seed or 0).selected()
    reports = cost_table(model_cfg, archs, args.question_len, args.num_regions)
    _write(args.out, cost_table_csv(reports))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    data = _data_params(cfg, args.seed)
    store = load_checkpoint(args.checkpoint)
    samples = generate_dataset(data["seed"], data[f"{args.split}_size"], args.split)
    rows = run_sweep(store, samples, args.split, data["seed"])
    _write(args.out, metrics_csv(rows))
    return 0


def cmd_attn_dump(args) -> int:
    cfg = _load_config(args.config)
    data = _data_params(cfg, args.seed)
    store = load_checkpoint(args.checkpoint)
    arch = _arch_from_args(store, args)
    sample = generate_sample(data["seed"], args.sample_index)
    captured = capture_attention(store, arch, sample)
    _write(args.out, attention_dump_json(captured) + "\n")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override config seeds")


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width-ratio", required=True, help="e.g. 1/2")
    p.add_argument("--depth-ratio", required=True, help="e.g. 1/3")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slimformer",
                                     description="Doubly slimmable transformer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train the full reference model")
    _add_common(p)
    p.add_argument("--out", required=True, help="teacher checkpoint path")
    p.add_argument("--log", help="JSONL training log path")
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("train-dst", help="distill the slimmable master from a teacher")
    _add_common(p)
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument("--out", required=True, help="master checkpoint path")
    p.add_argument("--log", help="JSONL per-iteration metrics log")
    p.set_defaults(fn=cmd_train_dst)

    p = sub.add_parser("eval", help="evaluate one submodel")
    _add_common(p)
    _add_arch_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("export", help="export one submodel as a standalone checkpoint")
    _add_common(p)
    _add_arch_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("analyze-cost", help="parameter/FLOPs table over the selected set")
    _add_common(p)
    p.add_argument("--checkpoint", help="derive architectures from this checkpoint")
    p.add_argument("--question-len", type=int, default=QUESTION_LEN)
    p.add_argument("--num-regions", type=int, default=NUM_REGIONS)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(fn=cmd_analyze_cost)

    p = sub.add_parser("sweep", help="accuracy vs cost over every selected submodel")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("attn-dump", help="attention maps of one sample as JSON")
    _add_common(p)
    _add_arch_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--out", help="JSON path (default stdout)")
    p.set_defaults(fn=cmd_attn_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
