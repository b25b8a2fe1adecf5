"""Axis-aligned boxes, dyadic grids and box-set operations.

Everything downstream of the network works in the unit cube; boxes are mapped
back to the caller's coordinates only when a report is written.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_CHUNK = 1 << 22  # element budget for broadcast temporaries


class GridClampWarning(UserWarning):
    """A value outside the grid domain was clamped to the domain edge."""


@dataclass(frozen=True, eq=False)
class AxisBox:
    """Closed box ``[lower, upper]`` (zero-width sides are representable)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64).reshape(-1)
        hi = np.array(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper have different dimensionality")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError(f"lower exceeds upper: {lo} > {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> AxisBox:
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def from_intervals(cls, intervals: Iterable[Sequence[float]]) -> AxisBox:
        pairs = [tuple(p) for p in intervals]
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.upper <= self.lower))

    def key(self) -> tuple:
        return tuple(self.lower.tolist()) + tuple(self.upper.tolist())

    def same_as(self, other: AxisBox) -> bool:
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> AxisBox:
        return cls(doc["lower"], doc["upper"])

    def __repr__(self) -> str:
        iv = ", ".join(f"[{l:g}, {u:g}]" for l, u in zip(self.lower, self.upper))
        return f"AxisBox({iv})"


def require_nondegenerate(b: AxisBox) -> None:
    if b.is_degenerate:
        raise ValueError(f"degenerate box {b!r}")


def volume(b: AxisBox) -> float:
    return float(np.prod(b.upper - b.lower))


def _check_dims(a: AxisBox, b: AxisBox) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def contains_box(outer: AxisBox, inner: AxisBox) -> bool:
    _check_dims(outer, inner)
    return bool(np.all(outer.lower <= inner.lower) and np.all(inner.upper <= outer.upper))


def contains_point(b: AxisBox, x) -> bool:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (b.dim,):
        raise ValueError(f"point has shape {x.shape}, box has dimension {b.dim}")
    return bool(np.all(b.lower <= x) and np.all(x <= b.upper))


def stack(boxes: Sequence[AxisBox], dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-stack box bounds into two ``(len(boxes), N)`` arrays."""
    if not boxes:
        d = 0 if dim is None else dim
        return np.zeros((0, d)), np.zeros((0, d))
    return np.stack([b.lower for b in boxes]), np.stack([b.upper for b in boxes])


def remove_duplicate_boxes(boxes: Sequence[AxisBox]) -> list[AxisBox]:
    """Drop every box contained in another one of the set.

    Among exact duplicates the earliest box survives, so the output order is a
    stable subsequence of the input.
    """
    boxes = list(boxes)
    n = len(boxes)
    if n < 2:
        return boxes
    lo, hi = stack(boxes)
    dim = lo.shape[1]
    keep = np.ones(n, dtype=bool)
    idx = np.arange(n)
    rows = max(1, _CHUNK // max(1, n * dim))
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        # inside[i, j]: box start+i is contained in box j
        inside = np.all(lo[None, :, :] <= lo[start:stop, None, :], axis=2)
        inside &= np.all(hi[start:stop, None, :] <= hi[None, :, :], axis=2)
        equal = np.all(lo[None, :, :] == lo[start:stop, None, :], axis=2)
        equal &= np.all(hi[None, :, :] == hi[start:stop, None, :], axis=2)
        me = idx[start:stop, None]
        # strictly larger container anywhere, or an identical box inserted earlier
        removed = (inside & ~equal) | (equal & (idx[None, :] < me))
        keep[start:stop] = ~removed.any(axis=1)
    return [b for b, k in zip(boxes, keep) if k]


def union_multiplicity(boxes: Sequence[AxisBox], points) -> np.ndarray:
    """Number of boxes containing each row of ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    count = np.zeros(pts.shape[0], dtype=np.int64)
    if not boxes:
        return count
    lo, hi = stack(boxes)
    per = max(1, _CHUNK // max(1, pts.shape[0] * pts.shape[1]))
    for s in range(0, len(boxes), per):
        l, h = lo[s : s + per], hi[s : s + per]
        inside = np.all((pts[None, :, :] >= l[:, None, :]) & (pts[None, :, :] <= h[:, None, :]), axis=2)
        count += inside.sum(axis=0)
    return count


def in_union(boxes: Sequence[AxisBox], x):
    """Union membership for one point (bool) or for a batch of points (bool array)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return any(contains_point(b, x) for b in boxes)
    return union_multiplicity(boxes, x) > 0


@dataclass(frozen=True)
class XiGrid:
    """Dyadic grid of step ``xi = 2**-depth`` (relative to each domain side)."""

    domain: AxisBox
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("grid depth must be >= 1")

    @classmethod
    def unit(cls, dim: int, depth: int) -> XiGrid:
        return cls(AxisBox.unit(dim), depth)

    @property
    def xi(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.depth

    def step(self, axis: int) -> float:
        return float(self.domain.upper[axis] - self.domain.lower[axis]) * self.xi

    def line(self, axis: int, k: int) -> float:
        return float(self.domain.lower[axis]) + k * self.step(axis)

    def is_aligned(self, value: float, axis: int) -> bool:
        t = (value - self.domain.lower[axis]) / self.step(axis)
        return float(t).is_integer()


def snap_to_grid(value: float, grid: XiGrid, axis: int, direction: str) -> float:
    """Nearest grid line at or below (``"down"``) / at or above (``"up"``) ``value``."""
    if direction not in ("down", "up"):
        raise ValueError("direction must be 'down' or 'up'")
    lo = float(grid.domain.lower[axis])
    hi = float(grid.domain.upper[axis])
    if value < lo or value > hi:
        warnings.warn(f"value {value} outside [{lo}, {hi}] on axis {axis}; clamped", GridClampWarning)
        value = min(max(value, lo), hi)
    t = (value - lo) / grid.step(axis)
    r = round(t)
    if abs(t - r) <= 1e-9 * max(1.0, abs(t)):
        k = r
    else:
        k = math.floor(t) if direction == "down" else math.ceil(t)
    return grid.line(axis, int(k))


def intersect(a: AxisBox, b: AxisBox) -> AxisBox | None:
    _check_dims(a, b)
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    if np.any(lo > hi):
        return None
    return AxisBox(lo, hi)


def to_unit(b: AxisBox, region: AxisBox) -> AxisBox:
    w = region.widths
    return AxisBox((b.lower - region.lower) / w, (b.upper - region.lower) / w)


def from_unit(b: AxisBox, region: AxisBox) -> AxisBox:
    w = region.widths

    def lift(u):
        # u == 1 must land exactly on the region edge despite rounding in lo + w
        return np.where(u == 1.0, region.upper, region.lower + u * w)

    return AxisBox(lift(b.lower), lift(b.upper))


def axis_coordinates(boxes: Sequence[AxisBox], dim: int, extra: Sequence[np.ndarray] = ()) -> list[np.ndarray]:
    """Sorted distinct breakpoints per axis: all box edges plus ``extra[axis]``."""
    coords = []
    for a in range(dim):
        vals = [np.array([b.lower[a], b.upper[a]]) for b in boxes]
        if extra:
            vals.append(np.asarray(extra[a], dtype=np.float64))
        coords.append(np.unique(np.concatenate(vals)) if vals else np.zeros(0))
    return coords


def rasterize(boxes: Sequence[AxisBox], coords: Sequence[np.ndarray]) -> np.ndarray:
    """Boolean cover of the elementary cells spanned by ``coords``.

    Every box edge must appear in ``coords``; cell ``(i0, i1, ...)`` is the
    product of intervals ``[coords[a][i_a], coords[a][i_a + 1]]``.
    """
    shape = tuple(max(0, len(c) - 1) for c in coords)
    cover = np.zeros(shape, dtype=bool)
    for b in boxes:
        sl = []
        for a, c in enumerate(coords):
            i0 = int(np.searchsorted(c, b.lower[a]))
            i1 = int(np.searchsorted(c, b.upper[a]))
            sl.append(slice(i0, i1))
        cover[tuple(sl)] = True
    return cover


def cell_volumes(coords: Sequence[np.ndarray]) -> np.ndarray:
    vol = np.ones(())
    for c in coords:
        vol = np.multiply.outer(vol, np.diff(c))
    return vol


def union_volume(boxes: Sequence[AxisBox], minus: Sequence[AxisBox] = ()) -> float:
    """Exact volume of ``union(boxes) \\ union(minus)`` by coordinate compression."""
    if not boxes:
        return 0.0
    dim = boxes[0].dim
    coords = axis_coordinates(list(boxes) + list(minus), dim)
    keep = rasterize(boxes, coords)
    if minus:
        keep &= ~rasterize(minus, coords)
    return float((cell_volumes(coords) * keep).sum())
