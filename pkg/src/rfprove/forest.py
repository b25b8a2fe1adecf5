"""Randomized depth-bounded decision trees with dyadic split thresholds.

Trees live in the unit cube. A split on ``axis`` at grid line ``j`` sends a
point left iff ``x[axis] < j * xi``; all thresholds are therefore exact dyadic
rationals and leaf boxes tile the cube.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .geometry import AxisBox, XiGrid
from .sampling import TREE, Dataset, rng_stream


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    max_depth: int = 5
    bootstrap: bool = True
    features_per_split: int | None = None  # None -> ceil(sqrt(N))
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")

    def features_for(self, dim: int) -> int:
        k = self.features_per_split or math.ceil(math.sqrt(dim))
        if k > dim:
            raise ValueError(f"features_per_split={k} exceeds input dimension {dim}")
        return k


@dataclass
class Leaf:
    box: AxisBox
    n_samples: int
    n_positive: int
    n_distinct: int  # distinct dataset points among the (bootstrap) samples
    depth: int = 0

    @property
    def pure_positive(self) -> bool:
        return self.n_samples >= 1 and self.n_positive == self.n_samples


@dataclass
class Split:
    axis: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    box: AxisBox
    n_samples: int = 0
    depth: int = 0


TreeNode = Union[Split, Leaf]


@dataclass
class Forest:
    trees: list[TreeNode]
    config: ForestConfig
    grid: XiGrid = field(repr=False)


def gini_impurity(n_pos: int, n_total: int) -> float:
    if n_total == 0:
        return 0.0
    p = n_pos / n_total
    return 2.0 * p * (1.0 - p)


def _cell_index(x: np.ndarray, depth: int) -> np.ndarray:
    # scaling by 2**depth is exact, so floor gives the true dyadic cell
    c = np.floor(np.ldexp(x, depth)).astype(np.int64)
    return np.clip(c, 0, (1 << depth) - 1)


def _scan_axis(cells: np.ndarray, y: np.ndarray, a: int, b: int, parent: float, n: int, n_pos: int):
    """Best threshold index j in (a, b) for one axis; cells lie in [a, b-1]."""
    width = b - a
    if width < 2:
        return None
    tot = np.bincount(cells - a, minlength=width)
    pos = np.bincount(cells - a, weights=y, minlength=width)
    n_left = np.cumsum(tot)[:-1]  # threshold a+1 .. b-1
    p_left = np.cumsum(pos)[:-1]
    ok = (n_left > 0) & (n_left < n)
    if not ok.any():
        return None
    n_right = n - n_left
    p_right = n_pos - p_left
    with np.errstate(invalid="ignore", divide="ignore"):
        fl = p_left / n_left
        fr = p_right / n_right
        child = (n_left * 2 * fl * (1 - fl) + n_right * 2 * fr * (1 - fr)) / n
    gain = np.where(ok, parent - child, -np.inf)
    j = int(np.argmax(gain))  # first maximum -> lowest threshold
    return float(gain[j]), a + 1 + j


def _best_split_cells(cells, y, lo_idx, hi_idx, axes):
    n = y.shape[0]
    n_pos = int(y.sum())
    parent = gini_impurity(n_pos, n)
    best = None
    for axis in sorted(axes):
        found = _scan_axis(cells[:, axis], y, lo_idx[axis], hi_idx[axis], parent, n, n_pos)
        if found is None:
            continue
        gain, j = found
        if best is None or gain > best[2]:
            best = (axis, j, gain)
    return best


def _box_cells(box: AxisBox, grid: XiGrid) -> tuple[list[int], list[int]]:
    scale = grid.cells_per_axis
    lo = [int(round(v * scale)) for v in box.lower]
    hi = [int(round(v * scale)) for v in box.upper]
    return lo, hi


def best_split(x: np.ndarray, y: np.ndarray, box: AxisBox, grid: XiGrid,
               candidate_axes: Sequence[int]) -> tuple[int, float, float] | None:
    """Weighted-Gini-optimal ``(axis, threshold, impurity_decrease)`` over grid lines.

    Only grid lines strictly inside ``box`` that put at least one sample on each
    side are considered; ties go to the lowest axis, then the lowest threshold.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0 or y.min() == y.max():
        return None
    cells = _cell_index(np.asarray(x, dtype=np.float64), grid.depth)
    lo, hi = _box_cells(box, grid)
    best = _best_split_cells(cells, y, lo, hi, candidate_axes)
    if best is None:
        return None
    axis, j, gain = best
    return axis, math.ldexp(j, -grid.depth), gain


class _Builder:
    def __init__(self, cells, y, orig, config: ForestConfig, grid: XiGrid, rng):
        self.cells = cells
        self.y = y
        self.orig = orig
        self.config = config
        self.grid = grid
        self.rng = rng
        self.dim = cells.shape[1]
        self.k = config.features_for(self.dim)

    def leaf(self, idx, lo, hi, depth) -> Leaf:
        n_pos = int(self.y[idx].sum())
        return Leaf(
            box=self._box(lo, hi),
            n_samples=int(idx.size),
            n_positive=n_pos,
            n_distinct=int(np.unique(self.orig[idx]).size),
            depth=depth,
        )

    def _box(self, lo, hi) -> AxisBox:
        d = self.grid.depth
        return AxisBox([math.ldexp(v, -d) for v in lo], [math.ldexp(v, -d) for v in hi])

    def build(self, idx, lo, hi, depth) -> TreeNode:
        y = self.y[idx]
        n_pos = int(y.sum())
        if (depth >= self.config.max_depth or idx.size < self.config.min_samples_split
                or n_pos == 0 or n_pos == idx.size):
            return self.leaf(idx, lo, hi, depth)
        cells = self.cells[idx]
        axes = self.rng.choice(self.dim, size=self.k, replace=False)
        best = _best_split_cells(cells, y, lo, hi, axes)
        if best is None and self.k < self.dim:
            rest = np.setdiff1d(np.arange(self.dim), axes)
            best = _best_split_cells(cells, y, lo, hi, rest)
        if best is None:
            return self.leaf(idx, lo, hi, depth)
        axis, j, _ = best
        go_left = cells[:, axis] < j
        lhi = list(hi)
        lhi[axis] = j
        rlo = list(lo)
        rlo[axis] = j
        left = self.build(idx[go_left], lo, lhi, depth + 1)
        right = self.build(idx[~go_left], rlo, hi, depth + 1)
        return Split(axis, math.ldexp(j, -self.grid.depth), left, right,
                     self._box(lo, hi), int(idx.size), depth)


def train_tree(data: Dataset, config: ForestConfig, grid: XiGrid, rng: np.random.Generator) -> TreeNode:
    """Grow one tree on a bootstrap resample (if configured) of ``data``."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    m = len(data)
    orig = rng.integers(0, m, size=m) if config.bootstrap else np.arange(m)
    cells = _cell_index(data.x[orig], grid.depth)
    y = data.y[orig].astype(np.float64)
    b = _Builder(cells, y, orig, config, grid, rng)
    top = grid.cells_per_axis
    return b.build(np.arange(m), [0] * data.dim, [top] * data.dim, 0)


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return rng_stream(seed, TREE, index)


def iter_trees(data: Dataset, config: ForestConfig, grid: XiGrid) -> Iterator[TreeNode]:
    """Trees in forest order; tree ``t`` depends only on ``(data, config, t)``."""
    for t in range(config.n_trees):
        yield train_tree(data, config, grid, tree_rng(config.seed, t))


def train_forest(data: Dataset, config: ForestConfig, grid: XiGrid) -> Forest:
    return Forest(list(iter_trees(data, config, grid)), config, grid)


def leaves(tree: TreeNode) -> list[Leaf]:
    out, stack = [], [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            out.append(node)
        else:
            stack.append(node.right)
            stack.append(node.left)
    return out


def get_pure_positive_leaves(tree: TreeNode) -> list[Leaf]:
    """Pure-positive leaves in left-to-right order; ``leaf.box`` is the candidate region."""
    return [lf for lf in leaves(tree) if lf.pure_positive]


def thresholds(tree: TreeNode) -> list[tuple[int, float]]:
    out, stack = [], [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Split):
            out.append((node.axis, node.threshold))
            stack.extend((node.left, node.right))
    return out


def tree_depth(tree: TreeNode) -> int:
    return max(lf.depth for lf in leaves(tree))


def tree_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {
            "leaf": True,
            "n_samples": node.n_samples,
            "n_positive": node.n_positive,
            "n_distinct": node.n_distinct,
            "box": node.box.to_dict(),
        }
    return {
        "axis": node.axis,
        "threshold": node.threshold,
        "left": tree_to_dict(node.left),
        "right": tree_to_dict(node.right),
    }


def forest_to_dict(forest: Forest) -> dict:
    cfg = forest.config
    return {
        "config": {
            "n_trees": cfg.n_trees,
            "max_depth": cfg.max_depth,
            "bootstrap": cfg.bootstrap,
            "features_per_split": cfg.features_per_split,
            "min_samples_split": cfg.min_samples_split,
            "seed": cfg.seed,
        },
        "xi": forest.grid.xi,
        "trees": [tree_to_dict(t) for t in forest.trees],
    }
