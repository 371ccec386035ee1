"""Exact parameter counting and analytic FLOPs estimation per architecture.

Counting conventions (fixed so tests can assert exact integers):
  - one matrix product (a×b)@(b×c) costs 2abc FLOPs (multiply-accumulate = 2)
  - elementwise ops (bias add, residual, ReLU, scaling) cost 1 per element
  - softmax and layer norm cost 5 per element
  - table lookups and concatenation cost 0

``backbone`` params are all tensors with at least one sliced axis plus the
kept layer stack; ``fixed`` params are the unslimmed non-layer tensors
(embedders, classifier, fusion norm), identical for every architecture.
``backbone_flops`` covers the kept encoder/decoder layers only — the part of
the forward whose cost scales with both width and depth; ``flops`` is the
full per-sample forward.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .archspace import ArchDescriptor
from .model import ModelConfig, parameter_schema, slicing_tag, view_shape


@dataclass(frozen=True)
class CostReport:
    arch: ArchDescriptor
    backbone_params: int
    fixed_params: int
    total_params: int
    flops: int
    backbone_flops: int


def _layer_index(name: str) -> int | None:
    parts = name.split(".")
    if parts[0] in ("enc", "dec"):
        return int(parts[1])
    return None


def _prod(shape) -> int:
    out = 1
    for s in shape:
        out *= s
    return out


def count_params(config: ModelConfig, arch: ArchDescriptor) -> tuple[int, int, int]:
    """(backbone, fixed, total) scalar parameters for one architecture.

    Enumerates every trainable master tensor: layer tensors are counted at
    their sliced view shape for kept layers only; other sliced tensors at
    their view shape; unslimmed non-layer tensors form the fixed floor.
    """
    spec = config.spec(arch.width)
    kept = set(arch.kept_layers)
    backbone = 0
    fixed = 0
    for info in parameter_schema(config):
        if not info.trainable:
            continue
        layer = _layer_index(info.name)
        if layer is not None:
            if layer in kept:
                backbone += _prod(view_shape(info, spec))
        elif slicing_tag(info, config.width_mode) == "unslimmed":
            fixed += _prod(info.shape)
        else:
            backbone += _prod(view_shape(info, spec))
    return backbone, fixed, backbone + fixed


def _matmul(a: int, b: int, c: int) -> int:
    return 2 * a * b * c


def _attention_flops(sq: int, skv: int, d_io: int, d_attn: int, heads: int) -> int:
    """One MHA call: q over sq rows, k/v over skv rows."""
    total = _matmul(sq, d_io, d_attn) + sq * d_attn          # q projection + bias
    total += 2 * (_matmul(skv, d_io, d_attn) + skv * d_attn)  # k, v projections + biases
    total += _matmul(sq, d_attn, skv)                         # scores q·kᵀ over all heads
    total += sq * skv * heads                                 # 1/sqrt(D_H) scaling
    total += 5 * sq * skv * heads                             # softmax
    total += _matmul(sq, skv, d_attn)                         # weights · v
    total += _matmul(sq, d_attn, d_io) + sq * d_io            # output projection + bias
    return total


def _ffn_flops(s: int, d_io: int, d_mid: int) -> int:
    total = _matmul(s, d_io, d_mid) + s * d_mid   # w1 + bias
    total += s * d_mid                            # relu
    total += _matmul(s, d_mid, d_io) + s * d_io   # w2ᵀ + bias
    return total


def _ln_flops(s: int, d_io: int) -> int:
    return 5 * s * d_io


def _residual_ln(s: int, d_io: int) -> int:
    return s * d_io + _ln_flops(s, d_io)


def _encoder_layer_flops(s: int, spec) -> int:
    d_io, d_attn, heads, d_mid = spec.io_width, spec.attn_width, spec.active_heads, spec.ffn_width
    total = _attention_flops(s, s, d_io, d_attn, heads) + _residual_ln(s, d_io)
    total += _ffn_flops(s, d_io, d_mid) + _residual_ln(s, d_io)
    return total


def _decoder_layer_flops(n: int, m: int, spec) -> int:
    d_io, d_attn, heads, d_mid = spec.io_width, spec.attn_width, spec.active_heads, spec.ffn_width
    total = _attention_flops(n, n, d_io, d_attn, heads) + _residual_ln(n, d_io)
    total += _attention_flops(n, m, d_io, d_attn, heads) + _residual_ln(n, d_io)
    total += _ffn_flops(n, d_io, d_mid) + _residual_ln(n, d_io)
    return total


def _reduce_flops(s: int, d_io: int, d_mid: int) -> int:
    total = _matmul(s, d_io, d_mid) + s * d_mid + s * d_mid   # w1 + bias + relu
    total += _matmul(s, d_mid, 1) + s                          # w2 + bias
    total += 5 * s                                             # softmax over rows
    total += _matmul(1, s, d_io)                               # weighted pooling
    return total


def count_flops(config: ModelConfig, arch: ArchDescriptor,
                question_len: int, num_regions: int) -> tuple[int, int]:
    """(total, backbone) forward FLOPs for one sample at the given sequence lengths."""
    if question_len < 1 or num_regions < 1:
        raise ValueError("sequence lengths must be >= 1")
    m, n = question_len, num_regions
    spec = config.spec(arch.width)
    e, d_io = config.embed_dim, spec.io_width
    l = arch.depth

    embed = m * e                                             # position add (lookup is free)
    embed += _matmul(n, config.region_feat_dim, e) + n * e    # region projection + bias

    if config.variant == "encoder-decoder":
        project = _matmul(m, e, d_io) + _matmul(n, e, d_io)
        backbone = l * (_encoder_layer_flops(m, spec) + _decoder_layer_flops(n, m, spec))
        w1_mid = view_shape({i.name: i for i in parameter_schema(config)}["reduce.q.w1"], spec)[1]
        heads = _reduce_flops(m, d_io, w1_mid) + _reduce_flops(n, d_io, w1_mid)
        fuse = 2 * _matmul(1, d_io, e) + e + _ln_flops(1, e)
    else:
        s = 1 + m + n
        project = _matmul(s, e, d_io)
        backbone = l * _encoder_layer_flops(s, spec)
        heads = 0
        fuse = _matmul(1, d_io, e) + _ln_flops(1, e)
    classify = _matmul(1, e, config.num_answers) + config.num_answers

    total = embed + project + backbone + heads + fuse + classify
    return total, backbone


def cost_report(config: ModelConfig, arch: ArchDescriptor,
                question_len: int, num_regions: int) -> CostReport:
    backbone_p, fixed_p, total_p = count_params(config, arch)
    flops, backbone_f = count_flops(config, arch, question_len, num_regions)
    return CostReport(arch, backbone_p, fixed_p, total_p, flops, backbone_f)


def cost_table(config: ModelConfig, archs: list[ArchDescriptor],
               question_len: int, num_regions: int) -> list[CostReport]:
    """One report per architecture, sorted by total FLOPs ascending."""
    reports = [cost_report(config, a, question_len, num_regions) for a in archs]
    return sorted(reports, key=lambda r: (r.flops, r.total_params))


COST_CSV_COLUMNS = ("arch_width", "arch_depth", "kept_layers", "backbone_params",
                    "fixed_params", "total_params", "flops")


def cost_table_csv(reports: list[CostReport]) -> str:
    """The cost table as CSV text: header row, '.' decimals, '\\n' line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COST_CSV_COLUMNS)
    for r in reports:
        writer.writerow([
            r.arch.width, r.arch.depth, ";".join(str(i) for i in r.arch.kept_layers),
            r.backbone_params, r.fixed_params, r.total_params, r.flops,
        ])
    return buf.getvalue()
