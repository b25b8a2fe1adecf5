"""Synthetic tasks with analytically known preimages.

Networks are assembled from exact ReLU identities
``min(a, b) = relu(a) - relu(-a) - relu(a - b)`` and
``max(a, b) = relu(a) - relu(-a) + relu(b - a)``, so each task's margin is a
piecewise-linear function whose zero super-level set is known in closed form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import AxisBox, union_volume
from .guarantees import GuaranteeParams
from .forest import ForestConfig
from .network import Activation, Layer, MarginLabeler, Network, OutputProperty
from .sampling import MISC, rng_stream

KINDS = ("box_indicator", "multi_box_union", "halfspace", "checkerboard", "constant")


class _Builder:
    """Tracks the current value vector as an affine map of the last hidden layer."""

    def __init__(self, dim: int):
        self.layers: list[Layer] = []
        self.W = np.eye(dim)
        self.b = np.zeros(dim)

    def affine(self, A, c) -> None:
        A = np.asarray(A, dtype=float)
        self.b = A @ self.b + np.asarray(c, dtype=float)
        self.W = A @ self.W

    def _relu(self, M, C) -> None:
        self.layers.append(Layer(M @ self.W, M @ self.b, Activation.RELU))
        self.W = np.asarray(C, dtype=float)
        self.b = np.zeros(self.W.shape[0])

    def reduce(self, groups: Sequence[Sequence[int]], ops: Sequence[str]) -> None:
        """Collapse each group of value indices to its min or max; results follow group order."""
        groups = [list(g) for g in groups]
        while any(len(g) > 1 for g in groups):
            n_vals = self.W.shape[0]
            rows, out_rows, new_groups = [], [], []
            for g, op in zip(groups, ops):
                ng = []
                for i in range(0, len(g), 2):
                    pair = g[i : i + 2]
                    base = len(rows)
                    a = np.zeros(n_vals)
                    a[pair[0]] = 1.0
                    rows += [a, -a]
                    coef = {base: 1.0, base + 1: -1.0}
                    if len(pair) == 2:
                        d = np.zeros(n_vals)
                        d[pair[0]] += 1.0
                        d[pair[1]] -= 1.0
                        if op == "min":
                            rows.append(d)
                            coef[base + 2] = -1.0
                        else:
                            rows.append(-d)
                            coef[base + 2] = 1.0
                    ng.append(len(out_rows))
                    out_rows.append(coef)
                new_groups.append(ng)
            C = np.zeros((len(out_rows), len(rows)))
            for r, coef in enumerate(out_rows):
                for j, v in coef.items():
                    C[r, j] = v
            self._relu(np.array(rows), C)
            groups = new_groups

    def network(self, input_dim: int) -> Network:
        return Network(tuple(self.layers) + (Layer(self.W, self.b, Activation.LINEAR),), input_dim)


def _box_terms(boxes: Sequence[AxisBox], dim: int, sign: float) -> tuple[np.ndarray, np.ndarray]:
    A, c = [], []
    for bx in boxes:
        for d in range(dim):
            e = np.zeros(dim)
            e[d] = 1.0
            A += [sign * e, -sign * e]
            c += [-sign * bx.lower[d], sign * bx.upper[d]]
    return np.array(A), np.array(c)


def box_union_network(boxes: Sequence[AxisBox], holes: Sequence[AxisBox] = ()) -> Network:
    """Margin ``min(max_i boxmargin_i, min_j -holemargin_j)``.

    ``boxmargin(x) = min_d min(x_d - l_d, u_d - x_d)`` is nonnegative exactly on
    the closed box, so the positive set is the closed union minus open holes.
    """
    if not boxes:
        raise ValueError("need at least one box")
    dim = boxes[0].dim
    bld = _Builder(dim)
    A1, c1 = _box_terms(boxes, dim, 1.0)
    parts_A, parts_c = [A1], [c1]
    if holes:
        # -min(terms) == max(-terms)
        A2, c2 = _box_terms(holes, dim, -1.0)
        parts_A.append(A2)
        parts_c.append(c2)
    bld.affine(np.vstack(parts_A), np.concatenate(parts_c))
    per = 2 * dim
    groups = [list(range(i * per, (i + 1) * per)) for i in range(len(boxes))]
    ops = ["min"] * len(boxes)
    off = len(boxes) * per
    groups += [list(range(off + j * per, off + (j + 1) * per)) for j in range(len(holes))]
    ops += ["max"] * len(holes)
    bld.reduce(groups, ops)
    # values: box margins then negated hole margins
    nb = len(boxes)
    bld.reduce([list(range(nb))] + [[nb + j] for j in range(len(holes))], ["max"] + ["min"] * len(holes))
    if holes:
        bld.reduce([list(range(1 + len(holes)))], ["min"])
    return bld.network(dim)


def halfspace_network(normal: Sequence[float], offset: float) -> Network:
    w = np.asarray(normal, dtype=float)
    return Network((Layer(w[None, :], np.array([-offset]), Activation.LINEAR),), w.shape[0])


def constant_network(dim: int, value: float = -1.0) -> Network:
    return Network((Layer(np.zeros((1, dim)), np.array([value]), Activation.LINEAR),), dim)


def halfspace_volume(normal: Sequence[float], offset: float) -> float:
    """Exact volume of ``{x in [0,1]^N : normal . x >= offset}``."""
    w = np.asarray(normal, dtype=float)
    t = offset - w[w < 0].sum()
    a = np.abs(w[w != 0])
    k = a.size
    if k == 0:
        return 1.0 if 0.0 >= offset else 0.0
    below = 0.0
    for r in range(k + 1):
        for J in itertools.combinations(range(k), r):
            s = t - a[list(J)].sum()
            if s > 0:
                below += (-1) ** r * s**k
    below /= math.factorial(k) * float(np.prod(a))
    return float(min(1.0, max(0.0, 1.0 - below)))


@dataclass(frozen=True)
class SyntheticSpec:
    """Description of a synthetic preimage in unit-cube coordinates.

    ``boxes``/``holes`` drive box_indicator and multi_box_union; when
    ``n_random_boxes`` or ``noise_depth`` is set the missing pieces are drawn
    from the generation seed. ``normal``/``offset`` drive halfspace, ``period``
    drives checkerboard.
    """

    kind: str
    dim: int = 2
    boxes: tuple[AxisBox, ...] = ()
    holes: tuple[AxisBox, ...] = ()
    normal: tuple[float, ...] | None = None
    offset: float | None = None
    period: float = 0.25
    n_random_boxes: int = 0
    grid_depth: int = 5
    noise_depth: int | None = None  # hole placement resolution for noisy boundaries
    noise_fraction: float = 1.0  # share of boundary cells that receive a hole
    noise_faces: tuple[tuple[int, int], ...] = ((0, 1),)  # (axis, -1 lower / +1 upper)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unsupported synthetic kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for b in self.boxes + self.holes:
            if b.dim != self.dim:
                raise ValueError("box dimensionality does not match spec")
        if self.kind == "checkerboard":
            cells = 1.0 / self.period
            if not float(cells).is_integer() or cells**self.dim > 4096:
                raise ValueError("checkerboard period must divide 1 into at most 4096 cells")

    # -- analytic truth ---------------------------------------------------

    def positive_boxes(self) -> list[AxisBox]:
        if self.kind == "checkerboard":
            per = int(round(1.0 / self.period))
            out = []
            for idx in itertools.product(range(per), repeat=self.dim):
                if sum(idx) % 2 == 0:
                    lo = np.array(idx) * self.period
                    out.append(AxisBox(lo, lo + self.period))
            return out
        return list(self.boxes)

    def indicator(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "constant":
            return np.zeros(len(x), dtype=bool)
        if self.kind == "halfspace":
            return x @ np.asarray(self.normal) - self.offset >= 0
        inside = np.zeros(len(x), dtype=bool)
        for b in self.positive_boxes():
            inside |= np.all((x >= b.lower) & (x <= b.upper), axis=1)
        for h in self.holes:
            inside &= ~np.all((x > h.lower) & (x < h.upper), axis=1)
        return inside

    def positive_volume(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "halfspace":
            return halfspace_volume(self.normal, self.offset)
        return union_volume(self.positive_boxes(), self.holes)

    def network(self) -> Network:
        if self.kind == "constant":
            return constant_network(self.dim)
        if self.kind == "halfspace":
            return halfspace_network(self.normal, self.offset)
        return box_union_network(self.positive_boxes(), self.holes)

    def resolve(self, seed: int) -> SyntheticSpec:
        """Fill seed-dependent pieces (random boxes, boundary holes)."""
        spec = self
        if spec.kind == "halfspace":
            normal = spec.normal
            if normal is None:
                # oblique in the first two axes, flat in the rest
                normal = (1.0, 1.0) + (0.0,) * (spec.dim - 2) if spec.dim >= 2 else (1.0,)
            offset = spec.offset if spec.offset is not None else 0.5 * sum(normal)
            spec = replace(spec, normal=tuple(float(v) for v in normal), offset=float(offset))
        if spec.kind == "multi_box_union" and spec.n_random_boxes and not spec.boxes:
            spec = replace(spec, boxes=tuple(random_disjoint_boxes(
                spec.n_random_boxes, spec.dim, spec.grid_depth, rng_stream(seed, MISC, 1))))
        if spec.noise_depth is not None and not spec.holes and spec.boxes:
            spec = replace(spec, holes=tuple(boundary_holes(
                spec.boxes[0], spec.grid_depth, spec.noise_depth, rng_stream(seed, MISC, 2),
                spec.noise_fraction, spec.noise_faces)))
        return spec


def random_disjoint_boxes(count: int, dim: int, depth: int, rng, min_cells: int = 3,
                          max_cells: int | None = None, attempts: int = 10000) -> list[AxisBox]:
    """Pairwise separated grid-aligned boxes with every side at least ``min_cells`` cells."""
    cells = 1 << depth
    max_cells = max_cells or max(min_cells, cells // 2)
    out: list[AxisBox] = []
    for _ in range(attempts):
        if len(out) == count:
            break
        size = rng.integers(min_cells, max_cells + 1, size=dim)
        lo = np.array([rng.integers(0, cells - s + 1) for s in size])
        cand = AxisBox(lo / cells, (lo + size) / cells)
        # keep one empty cell between boxes so their closed sets stay disjoint
        gap = 1.0 / cells
        if all(np.any((cand.lower >= b.upper + gap) | (b.lower >= cand.upper + gap)) for b in out):
            out.append(cand)
    if len(out) < count:
        raise ValueError(f"could not place {count} disjoint boxes at depth {depth}")
    return out


def boundary_holes(core: AxisBox, depth: int, noise_depth: int, rng, fraction: float = 1.0,
                   faces: Sequence[tuple[int, int]] | None = None) -> list[AxisBox]:
    """Open square holes in a random ``fraction`` of the grid cells lining faces of ``core``.

    ``faces`` lists ``(axis, side)`` pairs, side -1 for the lower face and +1 for
    the upper one; ``None`` means every face.

    Hole sides are 1/8 .. 1/2 of a cell, snapped to the finer ``noise_depth`` grid,
    so the per-cell negative fraction ranges from 1/64 to 1/4 (in 2-D).
    """
    cells = 1 << depth
    sub = 1 << (noise_depth - depth)
    if sub < 8:
        raise ValueError("noise_depth must be at least depth + 3")
    lo = np.round(core.lower * cells).astype(int)
    hi = np.round(core.upper * cells).astype(int)
    holes = []
    for idx in itertools.product(*[range(l, h) for l, h in zip(lo, hi)]):
        idx = np.array(idx)
        if faces is None:
            on_face = np.any((idx == lo) | (idx == hi - 1))
        else:
            on_face = any(idx[a] == (lo[a] if side < 0 else hi[a] - 1) for a, side in faces)
        if not on_face:
            continue
        if rng.random() >= fraction:
            continue
        side = int(rng.choice([sub // 8, sub // 4, 3 * sub // 8, sub // 2]))
        start = rng.integers(0, sub - side + 1, size=len(idx))
        hlo = (idx * sub + start) / (cells * sub)
        holes.append(AxisBox(hlo, hlo + side / (cells * sub)))
    return holes


def generate_synthetic(spec: SyntheticSpec, seed: int = 0, **task_kwargs):
    """Concrete task (network + property + unit-cube region) for ``spec``.

    The resolved spec is attached as ``task.truth``.
    """
    from .verifier import VerificationTask

    resolved = spec.resolve(seed)
    labeler = MarginLabeler(resolved.network(), OutputProperty.threshold(0.0))
    task_kwargs.setdefault("name", resolved.name or resolved.kind)
    return VerificationTask(labeler=labeler, region=AxisBox.unit(resolved.dim), truth=resolved, **task_kwargs)


# -- named tasks used by tests, the CLI and the benches ---------------------

def _b(*intervals) -> AxisBox:
    return AxisBox.from_intervals(intervals)


def named_spec(name: str, dim: int | None = None) -> SyntheticSpec:
    if name == "box2d":
        return SyntheticSpec("box_indicator", 2, boxes=(_b((0.25, 0.75), (0.25, 0.75)),), name=name)
    if name == "noisy_box2d":
        # core isolated by two splits; the spare depth dissects the noisy row
        return SyntheticSpec("box_indicator", 2, boxes=(_b((0.5, 1.0), (0.25, 1.0)),),
                             noise_depth=8, noise_faces=((1, -1),), name=name)
    if name == "multibox2d":
        return SyntheticSpec("multi_box_union", 2, boxes=(
            _b((1 / 16, 7 / 16), (1 / 16, 9 / 16)),
            _b((1 / 2, 15 / 16), (9 / 16, 15 / 16)),
            _b((9 / 16, 15 / 16), (1 / 16, 3 / 8)),
        ), name=name)
    if name == "checkerboard2d":
        return SyntheticSpec("checkerboard", 2, period=0.25, name=name)
    if name == "halfspace":
        d = dim or 2
        return SyntheticSpec("halfspace", d, name=f"halfspace{d}")
    if name == "constant":
        return SyntheticSpec("constant", dim or 2, name=name)
    raise KeyError(f"unknown synthetic task {name!r}")


NAMED = ("box2d", "noisy_box2d", "multibox2d", "checkerboard2d", "halfspace", "constant")
