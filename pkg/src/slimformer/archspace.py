"""Submodel architecture space: width/depth grids, triangle selection, layer scoring.

A submodel is one (width d, depth l) combination. The grid is the cross
product of the candidate sets; triangle selection keeps only the
deep-and-narrow combinations (width rank ≤ depth rank).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .tensor import Rng

DEFAULT_WIDTH_RATIOS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))
DEFAULT_DEPTH_RATIOS = (Fraction(1, 6), Fraction(1, 3), Fraction(2, 3), Fraction(1))

DEPTH_STRATEGIES = ("slim-random", "slim-first", "slim-last", "slim-middle")


def parse_ratios(items) -> tuple[Fraction, ...]:
    """Ratios from strings/numbers ("1/6", 0.25, 1) into exact fractions, ascending."""
    out = []
    for item in items:
        frac = Fraction(item) if not isinstance(item, float) else Fraction(item).limit_denominator(1000)
        if not 0 < frac <= 1:
            raise ValueError(f"ratio {item} outside (0, 1]")
        out.append(frac)
    if sorted(out) != out or len(set(out)) != len(out):
        raise ValueError("ratios must be strictly ascending")
    return tuple(out)


def _resolve(reference: int, ratios: tuple[Fraction, ...], what: str) -> tuple[int, ...]:
    values = []
    for r in ratios:
        v = reference * r
        if v.denominator != 1:
            raise ValueError(f"{what} {reference} is not divisible by ratio {r}")
        values.append(int(v))
    if values[0] < 1:
        raise ValueError(f"smallest {what} resolves below 1")
    return tuple(values)


@dataclass(frozen=True)
class WidthGrid:
    """Candidate widths as exact fractions of the reference width."""

    reference: int
    ratios: tuple[Fraction, ...] = DEFAULT_WIDTH_RATIOS
    values: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ratios", parse_ratios(self.ratios))
        object.__setattr__(self, "values", _resolve(self.reference, self.ratios, "width"))


@dataclass(frozen=True)
class DepthGrid:
    """Candidate depths as exact fractions of the reference depth."""

    reference: int
    ratios: tuple[Fraction, ...] = DEFAULT_DEPTH_RATIOS
    values: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ratios", parse_ratios(self.ratios))
        object.__setattr__(self, "values", _resolve(self.reference, self.ratios, "depth"))


@dataclass(frozen=True)
class ArchDescriptor:
    """One submodel: width, depth, and the resolved kept-layer indices (1-based)."""

    width: int
    depth: int
    kept_layers: tuple[int, ...]
    width_ratio: Fraction
    depth_ratio: Fraction

    def __post_init__(self):
        if len(self.kept_layers) != self.depth:
            raise ValueError("kept_layers length must equal depth")
        if list(self.kept_layers) != sorted(set(self.kept_layers)):
            raise ValueError("kept_layers must be strictly ascending")

    @property
    def label(self) -> str:
        return f"({self.width_ratio}D,{self.depth_ratio}L)"


@dataclass(frozen=True)
class ArchGrid:
    """Cross product of the width and depth grids."""

    widths: WidthGrid
    depths: DepthGrid

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(d, l) for d in self.widths.values for l in self.depths.values]

    def __len__(self) -> int:
        return len(self.widths.values) * len(self.depths.values)


def build_grid(widths: WidthGrid, depths: DepthGrid) -> ArchGrid:
    return ArchGrid(widths, depths)


@dataclass(frozen=True)
class IndicatorMatrix:
    """Selection status per combination: rows = widths ascending, cols = depths ascending.

    After triangle selection entry (i, j) is 1 iff j >= i.
    """

    rows: int
    cols: int

    def entry(self, i: int, j: int) -> int:
        return 1 if j >= i else 0

    def as_list(self) -> list[list[int]]:
        return [[self.entry(i, j) for j in range(self.cols)] for i in range(self.rows)]


def triangle_select(grid: ArchGrid) -> list[tuple[int, int]]:
    """Keep (widths[i], depths[j]) iff j >= i: drop the shallow-and-wide corner."""
    ind = IndicatorMatrix(len(grid.widths.values), len(grid.depths.values))
    kept = []
    for i, d in enumerate(grid.widths.values):
        for j, l in enumerate(grid.depths.values):
            if ind.entry(i, j):
                kept.append((d, l))
    return kept


def depth_scores(strategy: str, num_layers: int, rng: Rng | None = None) -> np.ndarray:
    """Importance score per layer (1-based positions i = 1..L).

    slim-first drops input-side layers first (score i), slim-last output-side
    layers first (score L+1-i), slim-middle the middlemost first
    (score |i - (L+1)/2|). slim-random draws one seeded permutation; callers
    fix it once per training run. Stream use: exactly one permutation of L.
    """
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    idx = np.arange(1, num_layers + 1, dtype=np.float64)
    if strategy == "slim-first":
        return idx
    if strategy == "slim-last":
        return num_layers + 1 - idx
    if strategy == "slim-middle":
        return np.abs(idx - (num_layers + 1) / 2.0)
    if strategy == "slim-random":
        if rng is None:
            raise ValueError("slim-random requires an Rng")
        return rng.permutation(num_layers).astype(np.float64) + 1.0
    raise ValueError(f"unknown depth strategy {strategy!r}")


def select_layers(scores: np.ndarray, keep: int) -> tuple[int, ...]:
    """The ``keep`` largest-score layer indices, ties broken toward the lower
    index, returned ascending (original layer order preserved)."""
    num_layers = len(scores)
    if not 1 <= keep <= num_layers:
        raise ValueError(f"keep={keep} out of range [1, {num_layers}]")
    order = sorted(range(1, num_layers + 1), key=lambda i: (-scores[i - 1], i))
    return tuple(sorted(order[:keep]))


def resolve_arch(
    widths: WidthGrid, depths: DepthGrid, scores: np.ndarray, width: int, depth: int
) -> ArchDescriptor:
    if width not in widths.values:
        raise ValueError(f"width {width} not in grid {widths.values}")
    if depth not in depths.values:
        raise ValueError(f"depth {depth} not in grid {depths.values}")
    return ArchDescriptor(
        width=width,
        depth=depth,
        kept_layers=select_layers(scores, depth),
        width_ratio=widths.ratios[widths.values.index(width)],
        depth_ratio=depths.ratios[depths.values.index(depth)],
    )


def selected_architectures(
    widths: WidthGrid, depths: DepthGrid, scores: np.ndarray
) -> list[ArchDescriptor]:
    """Triangle-selected set, grid order (widths-major, depths-minor ascending)."""
    return [
        resolve_arch(widths, depths, scores, d, l)
        for d, l in triangle_select(build_grid(widths, depths))
    ]
