"""Slimmable transformer building blocks.

Every op here runs at an arbitrary active width d by slicing the leading
rows/columns of master weight tensors. Per-head width stays constant under
slimming; the active head count drops to H·d/D, neglecting the last heads.
The default slim-all mode slims input, output, and intermediate dims
together; slim-intermediate (ablation) keeps layer in/out dims at the
reference width and shrinks only heads and the FFN intermediate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import tensor as T
from .tensor import ShapeError, Tensor

WIDTH_MODES = ("slim-all", "slim-intermediate")


@dataclass(frozen=True)
class SlimSpec:
    """Active width configuration for one forward pass."""

    ref_width: int
    ref_heads: int
    width: int
    mode: str = "slim-all"

    def __post_init__(self):
        if self.mode not in WIDTH_MODES:
            raise ValueError(f"unknown width mode {self.mode!r}")
        if not 0 < self.width <= self.ref_width:
            raise ValueError(f"width {self.width} outside (0, {self.ref_width}]")
        if (self.ref_heads * self.width) % self.ref_width != 0:
            raise ValueError(
                f"width {self.width} gives a non-integral head count for H={self.ref_heads}, D={self.ref_width}"
            )
        if self.ref_width % self.ref_heads != 0:
            raise ValueError("reference width must be divisible by head count")

    @property
    def active_heads(self) -> int:
        return self.ref_heads * self.width // self.ref_width

    @property
    def head_dim(self) -> int:
        return self.ref_width // self.ref_heads

    @property
    def io_width(self) -> int:
        """Feature width entering/leaving a layer: d under slim-all, D otherwise."""
        return self.width if self.mode == "slim-all" else self.ref_width

    @property
    def attn_width(self) -> int:
        """Concatenated head width D_H·Ĥ (equals d exactly)."""
        return self.head_dim * self.active_heads

    @property
    def ffn_width(self) -> int:
        """FFN intermediate width: 4× the active width in both modes."""
        return 4 * self.width


def full_spec(ref_width: int, ref_heads: int) -> SlimSpec:
    return SlimSpec(ref_width, ref_heads, ref_width)


# ---------------------------------------------------------------------------
# weight bundles
# ---------------------------------------------------------------------------

@dataclass
class MhaWeights:
    """Projections tiled as H heads of width D_H: head j owns columns [j·D_H, (j+1)·D_H)."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor
    bk: Tensor
    bv: Tensor
    bo: Tensor


@dataclass
class FfnWeights:
    """w1: (D, 4D); w2: (D, 4D), applied transposed on the way back down."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class LnWeights:
    gamma: Tensor
    beta: Tensor
    eps: float = 1e-6

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("layer-norm eps must be positive")


@dataclass
class EncoderLayerWeights:
    attn: MhaWeights
    ffn: FfnWeights
    ln1: LnWeights
    ln2: LnWeights


@dataclass
class DecoderLayerWeights:
    self_attn: MhaWeights
    guided_attn: MhaWeights
    ffn: FfnWeights
    ln1: LnWeights
    ln2: LnWeights
    ln3: LnWeights


# ---------------------------------------------------------------------------
# width slicing
# ---------------------------------------------------------------------------

def _cut(t: Tensor, sizes: tuple[int, ...]) -> Tensor:
    return T.shrink(t, sizes)


def slice_mha(w: MhaWeights, spec: SlimSpec) -> MhaWeights:
    d_in = spec.io_width
    d_attn = spec.attn_width
    return MhaWeights(
        wq=_cut(w.wq, (d_in, d_attn)),
        wk=_cut(w.wk, (d_in, d_attn)),
        wv=_cut(w.wv, (d_in, d_attn)),
        wo=_cut(w.wo, (d_attn, d_in)),
        bq=_cut(w.bq, (d_attn,)),
        bk=_cut(w.bk, (d_attn,)),
        bv=_cut(w.bv, (d_attn,)),
        bo=_cut(w.bo, (d_in,)),
    )


def slice_ffn(w: FfnWeights, spec: SlimSpec) -> FfnWeights:
    d_in = spec.io_width
    d_mid = spec.ffn_width
    return FfnWeights(
        w1=_cut(w.w1, (d_in, d_mid)),
        b1=_cut(w.b1, (d_mid,)),
        w2=_cut(w.w2, (d_in, d_mid)),
        b2=_cut(w.b2, (d_in,)),
    )


def slice_ln(w: LnWeights, spec: SlimSpec) -> LnWeights:
    d = spec.io_width
    return LnWeights(gamma=_cut(w.gamma, (d,)), beta=_cut(w.beta, (d,)), eps=w.eps)


def slice_width(w, spec: SlimSpec):
    """Sliced counterpart of any weight bundle; gradients land in the master buffers."""
    if isinstance(w, MhaWeights):
        return slice_mha(w, spec)
    if isinstance(w, FfnWeights):
        return slice_ffn(w, spec)
    if isinstance(w, LnWeights):
        return slice_ln(w, spec)
    if isinstance(w, EncoderLayerWeights):
        return EncoderLayerWeights(
            attn=slice_mha(w.attn, spec),
            ffn=slice_ffn(w.ffn, spec),
            ln1=slice_ln(w.ln1, spec),
            ln2=slice_ln(w.ln2, spec),
        )
    if isinstance(w, DecoderLayerWeights):
        return DecoderLayerWeights(
            self_attn=slice_mha(w.self_attn, spec),
            guided_attn=slice_mha(w.guided_attn, spec),
            ffn=slice_ffn(w.ffn, spec),
            ln1=slice_ln(w.ln1, spec),
            ln2=slice_ln(w.ln2, spec),
            ln3=slice_ln(w.ln3, spec),
        )
    raise TypeError(f"cannot slice {type(w).__name__}")


# ---------------------------------------------------------------------------
# attention and layer ops
# ---------------------------------------------------------------------------

def attention(q: Tensor, k: Tensor, v: Tensor, capture: list | None = None) -> Tensor:
    """softmax(q·kᵀ/√D_H)·v over the last two axes; captures the row-stochastic map."""
    if q.shape[-1] != k.shape[-1] or k.shape[:-1] != v.shape[:-1]:
        raise ShapeError(f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    head_dim = q.shape[-1]
    scores = T.mul(T.matmul(q, T.transpose_last2(k)), 1.0 / math.sqrt(head_dim))
    weights = T.softmax_last(scores)
    if capture is not None:
        capture.append(weights.data.copy())
    return T.matmul(weights, v)


def _split_heads(x: Tensor, heads: int, head_dim: int) -> Tensor:
    """(..., s, Ĥ·D_H) -> (..., Ĥ, s, D_H)."""
    new_shape = x.shape[:-1] + (heads, head_dim)
    x = T.reshape(x, new_shape)
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return T.permute(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    """(..., Ĥ, s, D_H) -> (..., s, Ĥ·D_H)."""
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = T.permute(x, axes)
    return T.reshape(x, x.shape[:-2] + (x.shape[-2] * x.shape[-1],))


def multi_head_attention(
    xq: Tensor,
    xkv: Tensor,
    w: MhaWeights,
    spec: SlimSpec,
    capture: list | None = None,
) -> Tensor:
    """Attended features at the active width: Ĥ parallel heads, concatenated and projected.

    ``w`` holds master weights; slicing happens here. Head j computes
    attention(xq·Wq_j + bq_j, xkv·Wk_j + bk_j, xkv·Wv_j + bv_j).
    """
    if xq.shape[-1] != spec.io_width or xkv.shape[-1] != spec.io_width:
        raise ShapeError(
            f"MHA expects feature width {spec.io_width}, got {xq.shape[-1]}/{xkv.shape[-1]}"
        )
    sw = slice_mha(w, spec)
    q = T.add(T.matmul(xq, sw.wq), sw.bq)
    k = T.add(T.matmul(xkv, sw.wk), sw.bk)
    v = T.add(T.matmul(xkv, sw.wv), sw.bv)
    heads, head_dim = spec.active_heads, spec.head_dim
    ctx = attention(
        _split_heads(q, heads, head_dim),
        _split_heads(k, heads, head_dim),
        _split_heads(v, heads, head_dim),
        capture=capture,
    )
    return T.add(T.matmul(_merge_heads(ctx), sw.wo), sw.bo)


def feed_forward(x: Tensor, w: FfnWeights, spec: SlimSpec) -> Tensor:
    """ReLU(x·W1 + b1)·W2ᵀ + b2 on sliced weights."""
    if x.shape[-1] != spec.io_width:
        raise ShapeError(f"FFN expects feature width {spec.io_width}, got {x.shape[-1]}")
    sw = slice_ffn(w, spec)
    hidden = T.relu(T.add(T.matmul(x, sw.w1), sw.b1))
    return T.add(T.matmul(hidden, T.transpose_last2(sw.w2)), sw.b2)


def layer_norm(x: Tensor, w: LnWeights, spec: SlimSpec) -> Tensor:
    """Per-vector normalization over the active width with sliced gamma/beta."""
    if x.shape[-1] != spec.io_width:
        raise ShapeError(f"layer_norm expects feature width {spec.io_width}, got {x.shape[-1]}")
    sw = slice_ln(w, spec)
    return T.layer_norm_last(x, sw.gamma, sw.beta, sw.eps)


def encoder_layer(
    x: Tensor,
    w: EncoderLayerWeights,
    spec: SlimSpec,
    capture: dict | None = None,
) -> Tensor:
    """Self-attention then FFN, each with residual + LN."""
    self_maps: list | None = [] if capture is not None else None
    attended = layer_norm(
        T.add(multi_head_attention(x, x, w.attn, spec, capture=self_maps), x), w.ln1, spec
    )
    out = layer_norm(T.add(feed_forward(attended, w.ffn, spec), attended), w.ln2, spec)
    if capture is not None:
        capture["self"] = self_maps[0]
    return out


def decoder_layer(
    x: Tensor,
    y: Tensor,
    w: DecoderLayerWeights,
    spec: SlimSpec,
    capture: dict | None = None,
) -> Tensor:
    """Self-attention over x, guided attention of x over y, then FFN (residual + LN each)."""
    if x.shape[-1] != y.shape[-1]:
        raise ShapeError(f"decoder modality widths differ: {x.shape[-1]} vs {y.shape[-1]}")
    self_maps: list | None = [] if capture is not None else None
    guided_maps: list | None = [] if capture is not None else None
    x1 = layer_norm(
        T.add(multi_head_attention(x, x, w.self_attn, spec, capture=self_maps), x), w.ln1, spec
    )
    x2 = layer_norm(
        T.add(multi_head_attention(x1, y, w.guided_attn, spec, capture=guided_maps), x1),
        w.ln2,
        spec,
    )
    out = layer_norm(T.add(feed_forward(x2, w.ffn, spec), x2), w.ln3, spec)
    if capture is not None:
        capture["self"] = self_maps[0]
        capture["guided"] = guided_maps[0]
    return out
