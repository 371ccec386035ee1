import numpy as np
import pytest

from slimformer.data import (
    ASK_COLOR,
    ASK_SHAPE,
    COLOR_TOKENS,
    NUM_ANSWERS,
    PAD,
    SHAPE_TOKENS,
    batch_of,
    generate_dataset,
    generate_sample,
    iter_batches,
    rederive_answer,
)


def test_sample_determinism():
    a = generate_sample(7, 0)
    b = generate_sample(7, 0)
    assert np.array_equal(a.regions, b.regions)
    assert np.array_equal(a.question, b.question)
    assert a.answer == b.answer and a.latent == b.latent
    c = generate_sample(7, 1)
    assert not np.array_equal(a.regions, c.regions)


def test_sample_structure():
    s = generate_sample(3, 11)
    assert s.regions.shape == (6, 16)
    assert s.question.shape == (8,)
    assert 0 <= s.answer < NUM_ANSWERS
    # one-hot color and shape blocks
    assert np.array_equal(np.sort(np.unique(s.regions[:, :8])).tolist()[-1], 1.0)
    assert np.all(s.regions[:, :4].sum(axis=1) == 1.0)
    assert np.all(s.regions[:, 4:8].sum(axis=1) == 1.0)
    assert np.all(np.abs(s.regions[:, 8:]) <= 0.1)
    assert s.question[0] in (ASK_COLOR, ASK_SHAPE)
    assert np.all(s.question[2:] == PAD)


def test_queried_value_unique_and_answer_consistent():
    for i in range(2000):
        s = generate_sample(123, i)
        if s.question[0] == ASK_COLOR:
            value = SHAPE_TOKENS.index(s.question[1])
            count = sum(1 for _, shape in s.latent if shape == value)
        else:
            value = COLOR_TOKENS.index(s.question[1])
            count = sum(1 for color, _ in s.latent if color == value)
        assert count == 1
        assert rederive_answer(s) == s.answer


def test_rederive_answer_bulk():
    assert all(rederive_answer(s) == s.answer for s in generate_dataset(5, 10000, "train"))


def test_dataset_splits_disjoint_and_sized():
    assert generate_dataset(1, 0) == []
    train = generate_dataset(9, 50, "train")
    val = generate_dataset(9, 50, "val")
    assert len(train) == len(val) == 50
    # same seed, different index ranges: samples must differ
    assert not any(
        np.array_equal(t.regions, v.regions) and np.array_equal(t.question, v.question)
        for t, v in zip(train, val)
    )
    with pytest.raises(ValueError):
        generate_dataset(9, 10, "dev")


def test_class_balance():
    counts = np.zeros(NUM_ANSWERS, dtype=int)
    for s in generate_dataset(31, 8000, "train"):
        counts[s.answer] += 1
    assert np.all(counts >= 800) and np.all(counts <= 1200)


def test_answer_not_recoverable_from_question():
    by_question: dict[tuple, list[int]] = {}
    for s in generate_dataset(17, 4000, "train"):
        by_question.setdefault(tuple(s.question.tolist()), []).append(s.answer)
    assert len(by_question) == 8  # 2 question types x 4 values
    for answers in by_question.values():
        freq = np.bincount(answers, minlength=NUM_ANSWERS) / len(answers)
        assert freq.max() < 0.40


def test_batching():
    samples = generate_dataset(2, 10)
    b = batch_of(samples)
    assert b.regions.shape == (10, 6, 16)
    assert b.questions.shape == (10, 8)
    assert b.answers.shape == (10,)
    chunks = list(iter_batches(samples, 4))
    assert [len(c) for c in chunks] == [4, 4, 2]
    order = np.array([9, 0, 5, 1, 2, 3, 4, 6, 7, 8])
    first = next(iter_batches(samples, 4, order))
    assert np.array_equal(first.regions[0], samples[9].regions)
