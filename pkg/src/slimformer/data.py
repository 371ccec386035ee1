"""Synthetic multimodal QA task.

Each sample shows 6 regions, each carrying a color and a shape (4 values
each) encoded one-hot plus 8 uniform noise dims. The question asks for the
color of the region with a given shape, or the shape of the region with a
given color; exactly one region matches the queried value, so the answer
requires cross-modal lookup and is never recoverable from the question
alone. Samples are pure functions of (seed, index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Rng

NUM_REGIONS = 6
REGION_FEAT_DIM = 16
QUESTION_LEN = 8
VOCAB_SIZE = 32
NUM_VALUES = 4          # colors c0..c3 and shapes s0..s3
NUM_ANSWERS = 8         # answer classes: colors 0..3, shapes 4..7
NOISE_AMPLITUDE = 0.1

PAD = 0
ASK_COLOR = 1
ASK_SHAPE = 2
COLOR_TOKENS = (3, 4, 5, 6)     # c0..c3
SHAPE_TOKENS = (7, 8, 9, 10)    # s0..s3

ASK_COLOR_OF_SHAPE = 0
ASK_SHAPE_OF_COLOR = 1

SPLIT_OFFSETS = {"train": 0, "val": 1 << 32, "test": 2 << 32}


@dataclass(frozen=True)
class Sample:
    regions: np.ndarray        # (6, 16) float64
    question: np.ndarray       # (8,) int64 token ids
    answer: int                # class id in [0, 8)
    latent: tuple[tuple[int, int], ...]  # per-region (color, shape) ground truth


def generate_sample(seed: int, index: int) -> Sample:
    """Deterministic sample for (seed, index).

    Stream order: question type, queried value, target slot, answer attribute,
    distractor attributes (per region: queried-attr draw then other-attr draw),
    slot permutation, then region noise.
    """
    rng = Rng(seed, (int(index),))
    qtype = int(rng.integers(0, 2))
    value = int(rng.integers(0, NUM_VALUES))
    answer_attr = int(rng.integers(0, NUM_VALUES))

    # attributes per region; region 0 is the target before shuffling
    colors = np.empty(NUM_REGIONS, dtype=np.int64)
    shapes = np.empty(NUM_REGIONS, dtype=np.int64)
    if qtype == ASK_COLOR_OF_SHAPE:
        shapes[0], colors[0] = value, answer_attr
    else:
        colors[0], shapes[0] = value, answer_attr
    for r in range(1, NUM_REGIONS):
        # queried attribute must avoid the queried value so it occurs exactly once
        queried = int(rng.integers(0, NUM_VALUES - 1))
        if queried >= value:
            queried += 1
        other = int(rng.integers(0, NUM_VALUES))
        if qtype == ASK_COLOR_OF_SHAPE:
            shapes[r], colors[r] = queried, other
        else:
            colors[r], shapes[r] = queried, other

    order = rng.permutation(NUM_REGIONS)
    colors, shapes = colors[order], shapes[order]

    regions = np.zeros((NUM_REGIONS, REGION_FEAT_DIM))
    regions[np.arange(NUM_REGIONS), colors] = 1.0
    regions[np.arange(NUM_REGIONS), NUM_VALUES + shapes] = 1.0
    regions[:, 8:] = rng.uniform((NUM_REGIONS, 8), -NOISE_AMPLITUDE, NOISE_AMPLITUDE)

    question = np.full(QUESTION_LEN, PAD, dtype=np.int64)
    if qtype == ASK_COLOR_OF_SHAPE:
        question[0] = ASK_COLOR
        question[1] = SHAPE_TOKENS[value]
        answer = answer_attr            # a color class
    else:
        question[0] = ASK_SHAPE
        question[1] = COLOR_TOKENS[value]
        answer = NUM_VALUES + answer_attr   # a shape class

    return Sample(
        regions=regions,
        question=question,
        answer=answer,
        latent=tuple((int(c), int(s)) for c, s in zip(colors, shapes)),
    )


def generate_dataset(seed: int, size: int, split: str = "train") -> list[Sample]:
    """``size`` samples from the split's disjoint index range."""
    if split not in SPLIT_OFFSETS:
        raise ValueError(f"unknown split {split!r}")
    base = SPLIT_OFFSETS[split]
    return [generate_sample(seed, base + i) for i in range(size)]


def rederive_answer(sample: Sample) -> int:
    """Recompute the answer from latent attributes (the generation oracle)."""
    qtok = sample.question[0]
    value_tok = sample.question[1]
    if qtok == ASK_COLOR:
        shape = SHAPE_TOKENS.index(value_tok)
        matches = [c for c, s in sample.latent if s == shape]
        assert len(matches) == 1
        return matches[0]
    if qtok == ASK_SHAPE:
        color = COLOR_TOKENS.index(value_tok)
        matches = [s for c, s in sample.latent if c == color]
        assert len(matches) == 1
        return NUM_VALUES + matches[0]
    raise ValueError("malformed question")


@dataclass(frozen=True)
class Batch:
    regions: np.ndarray    # (B, 6, 16)
    questions: np.ndarray  # (B, 8) int64
    answers: np.ndarray    # (B,) int64

    def __len__(self) -> int:
        return self.regions.shape[0]


def batch_of(samples: list[Sample]) -> Batch:
    return Batch(
        regions=np.ascontiguousarray(np.stack([s.regions for s in samples])),
        questions=np.ascontiguousarray(np.stack([s.question for s in samples])),
        answers=np.ascontiguousarray(np.array([s.answer for s in samples], dtype=np.int64)),
    )


def iter_batches(samples: list[Sample], batch_size: int, order: np.ndarray | None = None):
    """Batches in dataset order, or in the given permutation of indices."""
    idx = np.arange(len(samples)) if order is None else order
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        yield batch_of([samples[i] for i in chunk])
