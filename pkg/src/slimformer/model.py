"""Full slimmable models over a single master weight set.

Two variants: an encoder-decoder model (question self-attention encoder,
image decoder with guided attention, attentional reduction heads, fused
classifier) and a unified encoder ([CLS] + question + region token stream,
[CLS] classified). Embedders and classifier are never slimmed; a bridge
projection between embedder and backbone adapts the reference width D to
any active width d.

Every master tensor carries a per-axis slicing rule:
  REF  — feature axis, slimmed to d under slim-all, untouched otherwise
  MID  — intermediate axis (head block / FFN hidden), always scaled by d/D
  FIX  — never slimmed
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import tensor as T
from .archspace import (
    ArchDescriptor,
    DEFAULT_DEPTH_RATIOS,
    DEFAULT_WIDTH_RATIOS,
    DepthGrid,
    WidthGrid,
    depth_scores,
    resolve_arch,
    selected_architectures,
)
from .layers import (
    DecoderLayerWeights,
    EncoderLayerWeights,
    FfnWeights,
    LnWeights,
    MhaWeights,
    SlimSpec,
    decoder_layer,
    encoder_layer,
)
from .tensor import Rng, Tensor

REF, MID, FIX = "ref", "mid", "fix"

VARIANTS = ("encoder-decoder", "unified-encoder")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "encoder-decoder"
    width: int = 64
    heads: int = 4
    depth: int = 6
    vocab_size: int = 32
    region_feat_dim: int = 16
    num_answers: int = 8
    width_ratios: tuple = DEFAULT_WIDTH_RATIOS
    depth_ratios: tuple = DEFAULT_DEPTH_RATIOS
    depth_strategy: str = "slim-middle"
    width_mode: str = "slim-all"
    ln_eps: float = 1e-6
    embed_dim: int | None = None  # differs from width only in exported submodels

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")
        if self.embed_dim is None:
            object.__setattr__(self, "embed_dim", self.width)
        wg = WidthGrid(self.width, self.width_ratios)
        dg = DepthGrid(self.depth, self.depth_ratios)
        object.__setattr__(self, "width_ratios", wg.ratios)
        object.__setattr__(self, "depth_ratios", dg.ratios)
        for w in wg.values:
            SlimSpec(self.width, self.heads, w, self.width_mode)  # validates head counts

    @property
    def width_grid(self) -> WidthGrid:
        return WidthGrid(self.width, self.width_ratios)

    @property
    def depth_grid(self) -> DepthGrid:
        return DepthGrid(self.depth, self.depth_ratios)

    def spec(self, width: int) -> SlimSpec:
        return SlimSpec(self.width, self.heads, width, self.width_mode)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "width": self.width,
            "heads": self.heads,
            "depth": self.depth,
            "vocab_size": self.vocab_size,
            "region_feat_dim": self.region_feat_dim,
            "num_answers": self.num_answers,
            "width_ratios": [str(r) for r in self.width_ratios],
            "depth_ratios": [str(r) for r in self.depth_ratios],
            "depth_strategy": self.depth_strategy,
            "width_mode": self.width_mode,
            "ln_eps": self.ln_eps,
            "embed_dim": self.embed_dim,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("width_ratios", "depth_ratios"):
            if key in d:
                d[key] = tuple(Fraction(r) for r in d[key])
        return ModelConfig(**d)


# ---------------------------------------------------------------------------
# parameter schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamInfo:
    name: str
    shape: tuple[int, ...]
    rules: tuple[str, ...]
    trainable: bool = True


def _mha_schema(prefix: str, d: int):
    for proj in ("wq", "wk", "wv"):
        yield ParamInfo(f"{prefix}.{proj}", (d, d), (REF, MID))
    yield ParamInfo(f"{prefix}.wo", (d, d), (MID, REF))
    for b in ("bq", "bk", "bv"):
        yield ParamInfo(f"{prefix}.{b}", (d,), (MID,))
    yield ParamInfo(f"{prefix}.bo", (d,), (REF,))


def _ffn_schema(prefix: str, d: int):
    yield ParamInfo(f"{prefix}.w1", (d, 4 * d), (REF, MID))
    yield ParamInfo(f"{prefix}.b1", (4 * d,), (MID,))
    yield ParamInfo(f"{prefix}.w2", (d, 4 * d), (REF, MID))
    yield ParamInfo(f"{prefix}.b2", (d,), (REF,))


def _ln_schema(prefix: str, d: int):
    yield ParamInfo(f"{prefix}.gamma", (d,), (REF,))
    yield ParamInfo(f"{prefix}.beta", (d,), (REF,))


def parameter_schema(config: ModelConfig):
    """Every master tensor, in construction (and initialization) order."""
    d = config.width
    e = config.embed_dim
    yield ParamInfo("emb.token", (config.vocab_size, e), (FIX, FIX))
    yield ParamInfo("emb.region.w", (config.region_feat_dim, e), (FIX, FIX))
    yield ParamInfo("emb.region.b", (e,), (FIX,))
    if config.variant == "unified-encoder":
        yield ParamInfo("emb.cls", (1, e), (FIX, FIX))
    yield ParamInfo("bridge.w", (e, d), (FIX, REF))
    for i in range(1, config.depth + 1):
        yield from _mha_schema(f"enc.{i}.attn", d)
        yield from _ffn_schema(f"enc.{i}.ffn", d)
        yield from _ln_schema(f"enc.{i}.ln1", d)
        yield from _ln_schema(f"enc.{i}.ln2", d)
    if config.variant == "encoder-decoder":
        for i in range(1, config.depth + 1):
            yield from _mha_schema(f"dec.{i}.self", d)
            yield from _mha_schema(f"dec.{i}.guided", d)
            yield from _ffn_schema(f"dec.{i}.ffn", d)
            yield from _ln_schema(f"dec.{i}.ln1", d)
            yield from _ln_schema(f"dec.{i}.ln2", d)
            yield from _ln_schema(f"dec.{i}.ln3", d)
        for which in ("q", "v"):
            yield ParamInfo(f"reduce.{which}.w1", (d, d), (REF, MID))
            yield ParamInfo(f"reduce.{which}.b1", (d,), (MID,))
            yield ParamInfo(f"reduce.{which}.w2", (d, 1), (MID, FIX))
            yield ParamInfo(f"reduce.{which}.b2", (1,), (FIX,))
        yield ParamInfo("fuse.wq", (d, e), (REF, FIX))
        yield ParamInfo("fuse.wv", (d, e), (REF, FIX))
    else:
        yield ParamInfo("fuse.wq", (d, e), (REF, FIX))
    yield ParamInfo("fuse.ln.gamma", (e,), (FIX,))
    yield ParamInfo("fuse.ln.beta", (e,), (FIX,))
    yield ParamInfo("cls.w", (e, config.num_answers), (FIX, FIX))
    yield ParamInfo("cls.b", (config.num_answers,), (FIX,))
    yield ParamInfo("depth_scores", (config.depth,), (FIX,), trainable=False)


def view_shape(info: ParamInfo, spec: SlimSpec) -> tuple[int, ...]:
    """The sliced shape of a master tensor at the given active width."""
    out = []
    for dim, rule in zip(info.shape, info.rules):
        if rule == FIX:
            out.append(dim)
        elif rule == MID:
            out.append(dim * spec.width // spec.ref_width)
        elif rule == REF:
            out.append(dim * spec.width // spec.ref_width if spec.mode == "slim-all" else dim)
        else:
            raise ValueError(f"unknown rule {rule}")
    return tuple(out)


def slicing_tag(info: ParamInfo, width_mode: str) -> str:
    """Public manifest tag: which axes shrink under the configured mode."""
    def sliced(rule: str) -> bool:
        return rule == MID or (rule == REF and width_mode == "slim-all")

    flags = [sliced(r) for r in info.rules]
    if not any(flags):
        return "unslimmed"
    if len(flags) == 1:
        return "slim-rows"
    if all(flags):
        return "slim-both"
    return "slim-rows" if flags[0] else "slim-cols"


# ---------------------------------------------------------------------------
# parameter store
# ---------------------------------------------------------------------------

def _init_value(info: ParamInfo, config: ModelConfig, rng: Rng, identity_bridge: bool) -> np.ndarray:
    name, shape = info.name, info.shape
    if name == "depth_scores":
        return depth_scores(config.depth_strategy, config.depth,
                            rng if config.depth_strategy == "slim-random" else None)
    if name == "bridge.w":
        if identity_bridge and shape[0] == shape[1]:
            return np.eye(shape[0])
        return rng.normal(shape, 1.0 / math.sqrt(shape[0]))
    if name.endswith(".gamma"):
        return np.ones(shape)
    if name.endswith((".beta", ".b", ".b1", ".b2", ".bq", ".bk", ".bv", ".bo")):
        return np.zeros(shape)
    if name == "emb.token" or name == "emb.cls":
        return rng.normal(shape, 1.0)  # unit scale so tokens are not drowned by positions
    # linear maps: scaled by fan-in
    return rng.normal(shape, 1.0 / math.sqrt(shape[0]))


class ParamStore:
    """The master weight set; every submodel is a slice of it."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors
        self.infos = {info.name: info for info in parameter_schema(config)}
        if set(self.infos) != set(tensors):
            missing = set(self.infos) ^ set(tensors)
            raise ValueError(f"tensor set does not match schema: {sorted(missing)}")
        self._touch_fetched: set[str] | None = None

    # -- construction --------------------------------------------------------
    @staticmethod
    def build(config: ModelConfig, seed: int, identity_bridge: bool = True) -> "ParamStore":
        """Initialize all masters; RNG consumption follows schema order exactly."""
        rng = Rng(seed)
        tensors = {}
        for info in parameter_schema(config):
            value = _init_value(info, config, rng, identity_bridge)
            tensors[info.name] = Tensor(value, requires_grad=info.trainable, name=info.name)
        return ParamStore(config, tensors)

    def copy(self) -> "ParamStore":
        return ParamStore(
            self.config,
            {n: Tensor(t.data.copy(), requires_grad=t.requires_grad, name=n)
             for n, t in self.tensors.items()},
        )

    def with_depth_strategy(self, strategy: str, seed: int = 0) -> "ParamStore":
        """Same weights under a different layer-scoring strategy (ablations)."""
        config = replace(self.config, depth_strategy=strategy)
        copied = self.copy()
        scores = depth_scores(strategy, config.depth,
                              Rng(seed).child(3) if strategy == "slim-random" else None)
        copied.tensors["depth_scores"] = Tensor(scores, requires_grad=False, name="depth_scores")
        return ParamStore(config, copied.tensors)

    # -- access ---------------------------------------------------------------
    def get(self, name: str) -> Tensor:
        if self._touch_fetched is not None:
            self._touch_fetched.add(name)
        return self.tensors[name]

    def trainable(self):
        for name, t in self.tensors.items():
            if self.infos[name].trainable:
                yield name, t

    def zero_grads(self) -> None:
        for _, t in self.trainable():
            t.zero_grad()

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            h.update(name.encode())
            h.update(self.tensors[name].data.tobytes())
        return h.hexdigest()

    # -- architecture space ----------------------------------------------------
    @property
    def layer_scores(self) -> np.ndarray:
        return self.tensors["depth_scores"].data

    def selected(self) -> list[ArchDescriptor]:
        return selected_architectures(self.config.width_grid, self.config.depth_grid, self.layer_scores)

    def arch(self, width: int, depth: int) -> ArchDescriptor:
        return resolve_arch(self.config.width_grid, self.config.depth_grid,
                            self.layer_scores, width, depth)

    def arch_by_ratio(self, width_ratio, depth_ratio) -> ArchDescriptor:
        wr, lr = Fraction(width_ratio), Fraction(depth_ratio)
        return self.arch(int(self.config.width * wr), int(self.config.depth * lr))

    def smallest(self) -> ArchDescriptor:
        return self.arch(self.config.width_grid.values[0], self.config.depth_grid.values[0])

    def largest(self) -> ArchDescriptor:
        return self.arch(self.config.width_grid.values[-1], self.config.depth_grid.values[-1])

    # -- touch instrumentation ---------------------------------------------------
    def begin_touch(self) -> None:
        self._touch_fetched = set()
        for t in self.tensors.values():
            t.touches = []

    def end_touch(self) -> dict[str, list[tuple[int, ...]]]:
        """name -> recorded slice extents; [] means the tensor was used whole."""
        fetched = self._touch_fetched or set()
        out = {name: list(self.tensors[name].touches or []) for name in sorted(fetched)}
        self._touch_fetched = None
        for t in self.tensors.values():
            t.touches = None
        return out

    # -- weight bundles -----------------------------------------------------------
    def mha(self, prefix: str) -> MhaWeights:
        return MhaWeights(*(self.get(f"{prefix}.{k}") for k in
                            ("wq", "wk", "wv", "wo", "bq", "bk", "bv", "bo")))

    def ffn(self, prefix: str) -> FfnWeights:
        return FfnWeights(*(self.get(f"{prefix}.{k}") for k in ("w1", "b1", "w2", "b2")))

    def ln(self, prefix: str) -> LnWeights:
        return LnWeights(self.get(f"{prefix}.gamma"), self.get(f"{prefix}.beta"), self.config.ln_eps)

    def encoder_layer_weights(self, i: int) -> EncoderLayerWeights:
        return EncoderLayerWeights(
            attn=self.mha(f"enc.{i}.attn"), ffn=self.ffn(f"enc.{i}.ffn"),
            ln1=self.ln(f"enc.{i}.ln1"), ln2=self.ln(f"enc.{i}.ln2"),
        )

    def decoder_layer_weights(self, i: int) -> DecoderLayerWeights:
        return DecoderLayerWeights(
            self_attn=self.mha(f"dec.{i}.self"), guided_attn=self.mha(f"dec.{i}.guided"),
            ffn=self.ffn(f"dec.{i}.ffn"),
            ln1=self.ln(f"dec.{i}.ln1"), ln2=self.ln(f"dec.{i}.ln2"), ln3=self.ln(f"dec.{i}.ln3"),
        )


def init_dst(teacher: ParamStore, init: str = "teacher", seed: int = 0) -> ParamStore:
    """Master weights for distillation training: copy the teacher, or re-draw.

    The teacher store is read-only here. Random re-initialization draws the
    bridge projection from a scaled normal instead of the identity.
    """
    if init == "teacher":
        return teacher.copy()
    if init == "random":
        return ParamStore.build(teacher.config, seed, identity_bridge=False)
    raise ValueError(f"unknown init mode {init!r}")


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

@dataclass
class ForwardOutput:
    logits: Tensor
    attention: dict | None = None


@lru_cache(maxsize=32)
def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table; not a parameter."""
    pos = np.arange(length)[:, None].astype(np.float64)
    idx = np.arange(dim)[None, :].astype(np.float64)
    angle = pos / np.power(10000.0, (2.0 * (idx // 2)) / dim)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return np.ascontiguousarray(table)


def embed_inputs(store: ParamStore, batch) -> tuple[Tensor, Tensor]:
    """Token lookup + positions for questions, linear projection for regions; width D."""
    config = store.config
    if batch.questions.max(initial=0) >= config.vocab_size:
        raise T.ShapeError("question token out of vocabulary")
    if batch.regions.shape[-1] != config.region_feat_dim:
        raise T.ShapeError("region feature dim mismatch")
    q = T.gather_rows(store.get("emb.token"), batch.questions)
    q = T.add(q, Tensor(sinusoidal_positions(batch.questions.shape[-1], config.embed_dim)))
    r = T.add(T.matmul(Tensor(batch.regions), store.get("emb.region.w")), store.get("emb.region.b"))
    return q, r


def project_embeddings(store: ParamStore, embeds: Tensor, spec: SlimSpec) -> Tensor:
    """Bridge projection by the leading io_width columns; the input side stays unslimmed."""
    w = store.get("bridge.w")
    view = T.shrink(w, (store.config.embed_dim, spec.io_width))
    return T.matmul(embeds, view)


def attentional_reduce(store: ParamStore, which: str, feats: Tensor, spec: SlimSpec) -> Tensor:
    """Softmax-weighted pooling: scores from a two-layer MLP sliced like the FFN."""
    if feats.shape[-2] == 0:
        raise T.ShapeError("cannot reduce an empty sequence")
    d_in, d_mid = spec.io_width, view_shape(store.infos[f"reduce.{which}.w1"], spec)[1]
    w1 = T.shrink(store.get(f"reduce.{which}.w1"), (d_in, d_mid))
    b1 = T.shrink(store.get(f"reduce.{which}.b1"), (d_mid,))
    w2 = T.shrink(store.get(f"reduce.{which}.w2"), (d_mid, 1))
    b2 = store.get(f"reduce.{which}.b2")
    scores = T.add(T.matmul(T.relu(T.add(T.matmul(feats, w1), b1)), w2), b2)
    alpha = T.softmax_last(T.transpose_last2(scores))
    pooled = T.matmul(alpha, feats)
    return T.reshape(pooled, pooled.shape[:-2] + (pooled.shape[-1],))


def fuse_and_classify(store: ParamStore, fq: Tensor, fv: Tensor | None, spec: SlimSpec) -> Tensor:
    """LN of summed input-side-sliced projections, then the unslimmed classifier."""
    config = store.config
    wq = T.shrink(store.get("fuse.wq"), (spec.io_width, config.embed_dim))
    z = T.matmul(fq, wq)
    if fv is not None:
        if fv.shape[-1] != fq.shape[-1]:
            raise T.ShapeError("fusion operands must share the active width")
        wv = T.shrink(store.get("fuse.wv"), (spec.io_width, config.embed_dim))
        z = T.add(z, T.matmul(fv, wv))
    z = T.layer_norm_last(z, store.get("fuse.ln.gamma"), store.get("fuse.ln.beta"), config.ln_eps)
    return T.add(T.matmul(z, store.get("cls.w")), store.get("cls.b"))


def backbone_forward(store: ParamStore, arch: ArchDescriptor, batch,
                     capture: bool = False) -> ForwardOutput:
    """Run the submodel ``arch``: kept layers only, in original order, at width arch.width."""
    config = store.config
    spec = config.spec(arch.width)
    maps: dict | None = {"encoder": [], "decoder": []} if capture else None

    q_emb, r_emb = embed_inputs(store, batch)
    if config.variant == "encoder-decoder":
        yq = project_embeddings(store, q_emb, spec)
        yv = project_embeddings(store, r_emb, spec)
        for i in arch.kept_layers:
            cap: dict | None = {"layer": i} if capture else None
            yq = encoder_layer(yq, store.encoder_layer_weights(i), spec, capture=cap)
            if capture:
                maps["encoder"].append(cap)
        for i in arch.kept_layers:
            cap = {"layer": i} if capture else None
            yv = decoder_layer(yv, yq, store.decoder_layer_weights(i), spec, capture=cap)
            if capture:
                maps["decoder"].append(cap)
        fq = attentional_reduce(store, "q", yq, spec)
        fv = attentional_reduce(store, "v", yv, spec)
        logits = fuse_and_classify(store, fq, fv, spec)
    else:
        cls = T.broadcast_to(store.get("emb.cls"), (q_emb.shape[0], 1, config.embed_dim))
        tokens = T.concat([cls, q_emb, r_emb], axis=1)
        y = project_embeddings(store, tokens, spec)
        for i in arch.kept_layers:
            cap = {"layer": i} if capture else None
            y = encoder_layer(y, store.encoder_layer_weights(i), spec, capture=cap)
            if capture:
                maps["encoder"].append(cap)
        head = T.shrink(y, (y.shape[0], 1, y.shape[-1]))
        head = T.reshape(head, (y.shape[0], y.shape[-1]))
        logits = fuse_and_classify(store, head, None, spec)
    return ForwardOutput(logits=logits, attention=maps)
