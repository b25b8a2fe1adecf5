"""Brute-force dyadic-grid oracle for low-dimensional tasks.

Each cell of the depth-``Dg`` grid over the unit cube is labeled positive,
negative or mixed by probing the network. Volumes derived from the labels
bracket the true preimage volume, and box/cell intersections are computed
exactly because both are axis-aligned.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import AxisBox, axis_coordinates, cell_volumes, rasterize

NEGATIVE, POSITIVE, MIXED = 0, 1, 2
MAX_CELLS = 1 << 24
MAX_ELEMENTARY = 1 << 26
# corner probes sit this fraction of a cell inside the corner: grid-aligned
# boundaries are closed sets, so exact corners would sit on ties
CORNER_INSET = 1e-6


class OracleLimitError(ValueError):
    """Requested oracle or intersection grid exceeds the tractability guard."""


@dataclass
class GridOracle:
    depth: int
    labels: np.ndarray  # int8 of shape (2**depth,) * N
    region_volume: float = 1.0

    @property
    def dim(self) -> int:
        return self.labels.ndim

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.depth * self.dim)

    def count(self, cls: int) -> int:
        return int((self.labels == cls).sum())

    @property
    def positive_volume(self) -> float:
        """Lower bracket of the preimage volume, as a fraction of the region."""
        return self.count(POSITIVE) * self.cell_volume

    @property
    def mixed_volume(self) -> float:
        return self.count(MIXED) * self.cell_volume

    @property
    def negative_volume(self) -> float:
        return self.count(NEGATIVE) * self.cell_volume

    def volume_bracket(self) -> tuple[float, float]:
        return self.positive_volume, self.positive_volume + self.mixed_volume

    def cell_of(self, points) -> tuple[np.ndarray, ...]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.clip(np.floor(np.ldexp(pts, self.depth)).astype(np.int64), 0, (1 << self.depth) - 1)
        return tuple(idx.T)

    def label_of(self, points) -> np.ndarray:
        return self.labels[self.cell_of(points)]


def _probe_offsets(dim: int) -> np.ndarray:
    """Probe positions within a unit cell: inset corners, center, sub-cell centers."""
    e = CORNER_INSET
    corners = list(itertools.product((e, 1.0 - e), repeat=dim))
    subs = list(itertools.product((0.25, 0.75), repeat=dim))
    return np.array(corners + [(0.5,) * dim] + subs)


def build_oracle(task, depth: int, chunk_cells: int = 1 << 15) -> GridOracle:
    """Classify every depth-``depth`` cell of the task's unit cube.

    A cell is positive (negative) only if all inset corners, the center and the
    centers of its 2**N half-size sub-cells label positive (negative).
    """
    dim = task.dim
    if dim > 4:
        raise OracleLimitError("grid oracle supports at most 4 input dimensions")
    if depth < 1 or (1 << (depth * dim)) > MAX_CELLS:
        raise OracleLimitError(f"2**({dim}*{depth}) cells exceed the 2**24 guard")
    labeler = task.unit_labeler()
    side = 1 << depth
    h = 1.0 / side
    offsets = _probe_offsets(dim) * h
    n_probe = offsets.shape[0]
    total = side**dim
    flat = np.empty(total, dtype=np.int8)
    for start in range(0, total, chunk_cells):
        ids = np.arange(start, min(total, start + chunk_cells))
        corner = np.stack(np.unravel_index(ids, (side,) * dim), axis=1) * h
        pts = (corner[:, None, :] + offsets[None, :, :]).reshape(-1, dim)
        lab = np.asarray(labeler.label_batch(pts)).reshape(len(ids), n_probe)
        allpos = lab.all(axis=1)
        allneg = ~lab.any(axis=1)
        flat[ids] = np.where(allpos, POSITIVE, np.where(allneg, NEGATIVE, MIXED))
    return GridOracle(depth, flat.reshape((side,) * dim), float(np.prod(task.region.widths)))


def _union_class_volumes(oracle: GridOracle, boxes) -> dict[int, float]:
    """Volume of ``union(boxes) ∩ cells of class c`` for each class (unit-cube units)."""
    side = 1 << oracle.depth
    lines = np.arange(side + 1) / side
    clipped = []
    for b in boxes:
        lo = np.clip(b.lower, 0.0, 1.0)
        hi = np.clip(b.upper, 0.0, 1.0)
        if np.all(hi > lo):
            clipped.append(AxisBox(lo, hi))
    out = {NEGATIVE: 0.0, POSITIVE: 0.0, MIXED: 0.0}
    if not clipped:
        return out
    coords = axis_coordinates(clipped, oracle.dim, extra=[lines] * oracle.dim)
    n_elem = int(np.prod([len(c) - 1 for c in coords]))
    if n_elem > MAX_ELEMENTARY:
        raise OracleLimitError(f"{n_elem} elementary cells exceed the intersection guard")
    cover = rasterize(clipped, coords)
    vol = cell_volumes(coords) * cover
    maps = [np.clip(np.searchsorted(lines, c[:-1], side="right") - 1, 0, side - 1) for c in coords]
    cls = oracle.labels[np.ix_(*maps)]
    for c in out:
        out[c] = float(vol[cls == c].sum())
    return out


def oracle_coverage(oracle: GridOracle, boxes) -> float:
    """``vol(positive cells ∩ union) / vol(positive cells)``; boxes in unit-cube coordinates."""
    if oracle.positive_volume == 0.0:
        raise ValueError("oracle has zero positive volume")
    if not boxes:
        return 0.0
    return _union_class_volumes(oracle, boxes)[POSITIVE] / oracle.positive_volume


def oracle_error_band(oracle: GridOracle, boxes) -> tuple[float, float]:
    """Error with mixed cells counted as correct (low) and as wrong (high)."""
    if not boxes:
        raise ValueError("error is undefined for an empty union")
    v = _union_class_volumes(oracle, boxes)
    total = sum(v.values())
    if total == 0.0:
        raise ValueError("error is undefined for a zero-volume union")
    return v[NEGATIVE] / total, (v[NEGATIVE] + v[MIXED]) / total


def oracle_error(oracle: GridOracle, boxes) -> float:
    """``vol(negative cells ∩ union) / vol(union)``; see :func:`oracle_error_band`."""
    return oracle_error_band(oracle, boxes)[0]


def box_impurity(oracle: GridOracle, box: AxisBox) -> tuple[float, float]:
    """Negative-cell and mixed-cell fractions of a single box's volume."""
    side = 1 << oracle.depth
    lines = np.arange(side + 1) / side
    weights = np.ones(())
    for a in range(oracle.dim):
        lo = np.clip(box.lower[a], lines[:-1], lines[1:])
        hi = np.clip(box.upper[a], lines[:-1], lines[1:])
        weights = np.multiply.outer(weights, hi - lo)
    total = weights.sum()
    if total == 0.0:
        raise ValueError("box has zero volume inside the unit cube")
    neg = weights[oracle.labels == NEGATIVE].sum() / total
    mixed = weights[oracle.labels == MIXED].sum() / total
    return float(neg), float(mixed)
