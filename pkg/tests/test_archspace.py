from fractions import Fraction

import numpy as np
import pytest

from slimformer.archspace import (
    ArchDescriptor,
    DepthGrid,
    IndicatorMatrix,
    WidthGrid,
    build_grid,
    depth_scores,
    resolve_arch,
    select_layers,
    selected_architectures,
    triangle_select,
)
from slimformer.tensor import Rng


def test_default_grid_sizes():
    grid = build_grid(WidthGrid(512), DepthGrid(6))
    assert len(grid) == 16
    assert grid.widths.values == (128, 256, 384, 512)
    assert grid.depths.values == (1, 2, 4, 6)


def test_grid_cross_product_exhaustive():
    grid = build_grid(WidthGrid(8, ("1/2", "1")), DepthGrid(6, ("1/3", "2/3", "1")))
    assert len(grid) == 6
    assert sorted(grid.pairs) == sorted([(4, 2), (4, 4), (4, 6), (8, 2), (8, 4), (8, 6)])


def test_single_cell_grid():
    grid = build_grid(WidthGrid(64, ("1",)), DepthGrid(6, ("1",)))
    assert grid.pairs == [(64, 6)]
    assert triangle_select(grid) == [(64, 6)]


def test_indivisible_grid_rejected():
    with pytest.raises(ValueError):
        WidthGrid(10, ("1/4", "1"))
    with pytest.raises(ValueError):
        DepthGrid(4, ("1/6", "1"))
    with pytest.raises(ValueError):
        WidthGrid(8, ("1/2", "1/4", "1"))  # not ascending


def test_triangle_select_default():
    grid = build_grid(WidthGrid(512), DepthGrid(6))
    kept = triangle_select(grid)
    assert len(kept) == 10
    # paper's Table I rows and the two corners
    for pair in [(128, 1), (128, 2), (256, 2), (256, 6), (512, 6)]:
        assert pair in kept
    assert (512, 1) not in kept  # width rank 4 > depth rank 1
    assert (384, 1) not in kept and (384, 2) not in kept and (512, 4) not in kept
    # |S| = sum_i (|L| - i + 1) for a square grid
    assert len(kept) == sum(4 - i + 1 for i in range(1, 5))


def test_indicator_matrix_orientation():
    ind = IndicatorMatrix(4, 4)
    mat = np.array(ind.as_list())
    assert mat.sum() == 10
    assert np.array_equal(mat, np.triu(np.ones((4, 4), dtype=int)))


def test_depth_scores_formulas():
    assert np.allclose(depth_scores("slim-middle", 6), [2.5, 1.5, 0.5, 0.5, 1.5, 2.5])
    assert np.allclose(depth_scores("slim-first", 3), [1, 2, 3])
    assert np.allclose(depth_scores("slim-last", 3), [3, 2, 1])
    a = depth_scores("slim-random", 6, Rng(9))
    b = depth_scores("slim-random", 6, Rng(9))
    assert np.array_equal(a, b)
    assert sorted(a) == [1, 2, 3, 4, 5, 6]
    with pytest.raises(ValueError):
        depth_scores("slim-best", 6)
    with pytest.raises(ValueError):
        depth_scores("slim-random", 6)


def test_select_layers_slim_middle():
    scores = depth_scores("slim-middle", 6)
    assert select_layers(scores, 2) == (1, 6)
    assert select_layers(scores, 4) == (1, 2, 5, 6)
    assert select_layers(scores, 6) == (1, 2, 3, 4, 5, 6)
    assert select_layers(scores, 1) == (1,)  # tie at |i-3.5|=2.5 broken toward layer 1


def test_select_layers_monotone_nesting():
    for strategy in ("slim-first", "slim-last", "slim-middle"):
        scores = depth_scores(strategy, 6)
        prev: set[int] = set()
        for keep in range(1, 7):
            cur = set(select_layers(scores, keep))
            assert prev <= cur
            prev = cur
    scores = depth_scores("slim-random", 6, Rng(3))
    prev = set()
    for keep in range(1, 7):
        cur = set(select_layers(scores, keep))
        assert prev <= cur
        prev = cur


def test_select_layers_out_of_range():
    with pytest.raises(ValueError):
        select_layers(depth_scores("slim-middle", 6), 0)
    with pytest.raises(ValueError):
        select_layers(depth_scores("slim-middle", 6), 7)


def test_selected_architectures_contains_extremes():
    widths, depths = WidthGrid(64), DepthGrid(6)
    archs = selected_architectures(widths, depths, depth_scores("slim-middle", 6))
    assert len(archs) == 10
    pairs = [(a.width, a.depth) for a in archs]
    assert (16, 1) in pairs and (64, 6) in pairs
    smallest = min(archs, key=lambda a: (a.width, a.depth))
    largest = max(archs, key=lambda a: (a.width, a.depth))
    assert (smallest.width, smallest.depth) == (16, 1)
    assert (largest.width, largest.depth) == (64, 6)


def test_resolve_arch_validation():
    widths, depths = WidthGrid(64), DepthGrid(6)
    scores = depth_scores("slim-middle", 6)
    arch = resolve_arch(widths, depths, scores, 32, 2)
    assert arch.kept_layers == (1, 6)
    assert arch.width_ratio == Fraction(1, 2)
    assert arch.label == "(1/2D,1/3L)"
    with pytest.raises(ValueError):
        resolve_arch(widths, depths, scores, 33, 2)
    with pytest.raises(ValueError):
        resolve_arch(widths, depths, scores, 32, 3)
    with pytest.raises(ValueError):
        ArchDescriptor(32, 2, (6, 1), Fraction(1, 2), Fraction(1, 3))
