"""Seeded uniform sampling over boxes and box unions, and labeled datasets."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import AxisBox, require_nondegenerate, stack, union_multiplicity

# Stream namespaces; the first spawn-key component separates independent uses
# of one run seed.
DATA, TREE, FILTER, COVERAGE, ERROR, MISC = range(6)


def rng_stream(seed: int, *stream_id: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream_id...)``.

    Philox keyed through ``SeedSequence`` spawn keys: a given key always yields
    the same sequence, independent of what other streams have drawn.
    """
    if not stream_id:
        stream_id = (0,)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.Philox(ss))


def sample_uniform(box: AxisBox, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be non-negative")
    require_nondegenerate(box)
    u = rng.random((count, box.dim))
    return box.lower + u * (box.upper - box.lower)


@dataclass(frozen=True)
class Dataset:
    """Labeled points; ``x`` is ``(m, N)``, ``y`` holds 0/1 labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError("dataset needs x of shape (m, N) and y of shape (m,)")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def positives_count(self) -> int:
        return int(self.y.sum())


def get_examples(labeler, count: int, region: AxisBox, rng: np.random.Generator) -> Dataset:
    if count < 1:
        raise ValueError("count must be >= 1")
    x = sample_uniform(region, count, rng)
    y = np.asarray(labeler.label_batch(x), dtype=np.int8)
    return Dataset(x, y)


def sample_union_uniform(boxes: Sequence[AxisBox], count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over the union of possibly overlapping boxes.

    A box is chosen proportionally to its volume and a point drawn inside it is
    kept with probability ``1 / multiplicity``, which cancels the extra density
    in overlaps exactly.
    """
    if not boxes:
        raise ValueError("cannot sample from an empty box set")
    for b in boxes:
        require_nondegenerate(b)
    lo, hi = stack(boxes)
    vols = np.prod(hi - lo, axis=1)
    p = vols / vols.sum()
    out = []
    have = 0
    while have < count:
        batch = max(64, int(1.2 * (count - have)) + 16)
        pick = rng.choice(len(boxes), size=batch, p=p)
        pts = lo[pick] + rng.random((batch, lo.shape[1])) * (hi[pick] - lo[pick])
        mult = union_multiplicity(boxes, pts)
        keep = rng.random(batch) * mult < 1.0
        out.append(pts[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:count] if count else np.zeros((0, lo.shape[1]))


def write_dataset_csv(data: Dataset, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(data.dim)] + ["label"])
        for row, lab in zip(data.x, data.y):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_dataset_csv(path) -> Dataset:
    raw = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return Dataset(raw[:, :-1].copy(), raw[:, -1].astype(np.int8))
