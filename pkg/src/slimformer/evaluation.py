"""Evaluation, accuracy-vs-cost sweeps, and attention-map export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import tensor as T
from .archspace import ArchDescriptor
from .checkpoint import require_selected
from .costs import cost_report
from .data import Sample, batch_of, iter_batches
from .model import ParamStore, backbone_forward


def evaluate(store: ParamStore, arch: ArchDescriptor, samples, batch_size: int = 256) -> float:
    """argmax(logits) == label rate; integer counting, order-independent."""
    require_selected(store, arch)
    if not samples:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    with T.no_grad():
        for batch in iter_batches(samples, batch_size):
            logits = backbone_forward(store, arch, batch).logits.data
            hits += int((logits.argmax(axis=-1) == batch.answers).sum())
    return hits / len(samples)


def capture_attention(store: ParamStore, arch: ArchDescriptor, sample: Sample) -> dict:
    """Row-stochastic attention matrices for every kept layer and active head.

    Encoder blocks carry the self-attention map; decoder blocks carry the
    self and guided maps. Each map has shape (active_heads, rows, cols).
    """
    require_selected(store, arch)
    with T.no_grad():
        out = backbone_forward(store, arch, batch_of([sample]), capture=True)
    maps = out.attention

    def strip(block: dict) -> dict:
        return {key: (value[0] if isinstance(value, np.ndarray) else value)
                for key, value in block.items()}

    return {
        "arch": {"width": arch.width, "depth": arch.depth, "kept_layers": list(arch.kept_layers)},
        "encoder": [strip(b) for b in maps["encoder"]],
        "decoder": [strip(b) for b in maps["decoder"]],
    }


def attention_dump_json(captured: dict) -> str:
    def convert(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, dict):
            return {k: convert(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [convert(v) for v in obj]
        return obj

    return json.dumps(convert(captured), sort_keys=True)


@dataclass(frozen=True)
class MetricsRow:
    width_ratio: Fraction
    depth_ratio: Fraction
    accuracy: float
    total_params: int
    backbone_params: int
    flops: int
    split: str
    seed: int


METRICS_CSV_COLUMNS = ("d_ratio", "l_ratio", "accuracy", "total_params",
                       "backbone_params", "flops", "split", "seed")


def run_sweep(store: ParamStore, samples, split: str, seed: int,
              question_len: int | None = None, num_regions: int | None = None) -> list[MetricsRow]:
    """Evaluate every selected architecture and join with the cost table,
    sorted by FLOPs ascending."""
    if question_len is None:
        question_len = samples[0].question.shape[-1]
    if num_regions is None:
        num_regions = samples[0].regions.shape[-2]
    rows = []
    for arch in store.selected():
        acc = evaluate(store, arch, samples)
        report = cost_report(store.config, arch, question_len, num_regions)
        rows.append(MetricsRow(
            width_ratio=arch.width_ratio, depth_ratio=arch.depth_ratio, accuracy=acc,
            total_params=report.total_params, backbone_params=report.backbone_params,
            flops=report.flops, split=split, seed=seed,
        ))
    return sorted(rows, key=lambda r: r.flops)


def metrics_csv(rows: list[MetricsRow]) -> str:
    """Header row, '.' decimals, '\\n' line endings; accuracy to 6 places."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            str(r.width_ratio), str(r.depth_ratio), f"{r.accuracy:.6f}",
            r.total_params, r.backbone_params, r.flops, r.split, r.seed,
        ])
    return buf.getvalue()


ABLATION_CSV_COLUMNS = ("study", "variant", "mean_accuracy", "accuracy_smallest",
                        "accuracy_largest", "seed")


def ablation_csv(rows: list[dict]) -> str:
    """Comparison table for ablation runs: one row per trained variant."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r["study"], r["variant"], f"{r['mean_accuracy']:.6f}",
            f"{r['accuracy_smallest']:.6f}", f"{r['accuracy_largest']:.6f}", r["seed"],
        ])
    return buf.getvalue()


def sweep_summary(store: ParamStore, samples, split: str, seed: int) -> dict:
    """Mean/extremes of a sweep, used by the ablation harness."""
    rows = run_sweep(store, samples, split, seed)
    return {
        "mean_accuracy": float(np.mean([r.accuracy for r in rows])),
        "accuracy_smallest": rows[0].accuracy,
        "accuracy_largest": rows[-1].accuracy,
        "rows": rows,
    }
