"""Canned configurations for the desk-scale task and the full-scale reference dims."""

from __future__ import annotations

from dataclasses import replace

from . import data as synth
from .model import ModelConfig
from .training import TrainConfig


def toy_model_config(**overrides) -> ModelConfig:
    """The desk-scale model: width 64, 4 heads, 6 layers over the synthetic task."""
    base = ModelConfig(
        variant="encoder-decoder",
        width=64,
        heads=4,
        depth=6,
        vocab_size=synth.VOCAB_SIZE,
        region_feat_dim=synth.REGION_FEAT_DIM,
        num_answers=synth.NUM_ANSWERS,
    )
    return replace(base, **overrides) if overrides else base


def toy_teacher_train_config(**overrides) -> TrainConfig:
    """Teacher recipe tuned for CPU minutes; the depth-6 stack needs lr <= ~5e-4."""
    base = TrainConfig(
        epochs=3,
        batch_size=64,
        base_lr=5e-4,
        warmup_epochs=1,
        decay_after=4,
        decay_every=1,
        seed=0,
    )
    return replace(base, **overrides) if overrides else base


def toy_dst_train_config(**overrides) -> TrainConfig:
    """Distillation recipe: same stability ceiling, sandwich k=4."""
    base = TrainConfig(
        epochs=4,
        batch_size=64,
        base_lr=5e-4,
        warmup_epochs=1,
        decay_after=3,
        decay_every=1,
        k=4,
        seed=0,
    )
    return replace(base, **overrides) if overrides else base


def reference_model_config(**overrides) -> ModelConfig:
    """The full-scale encoder-decoder dims (width 512, 8 heads, 6 layers); used
    for cost analysis only — training at this scale is out of desk budget."""
    base = ModelConfig(variant="encoder-decoder", width=512, heads=8, depth=6,
                       vocab_size=synth.VOCAB_SIZE, region_feat_dim=synth.REGION_FEAT_DIM,
                       num_answers=synth.NUM_ANSWERS)
    return replace(base, **overrides) if overrides else base
