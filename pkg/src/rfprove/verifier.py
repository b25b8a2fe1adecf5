"""Forest-guided preimage under-approximation with active resampling.

The loop trains trees in order, harvests their pure-positive leaves, keeps a
leaf only if at least ``n`` positive points vouch for it (training points that
fell into it, or ``n`` fresh all-positive draws), and stops as soon as the
Monte Carlo coverage of the accumulated box union reaches the target.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import guarantees as G
from .forest import ForestConfig, get_pure_positive_leaves, train_tree, tree_rng
from .geometry import (
    AxisBox,
    XiGrid,
    contains_box,
    from_unit,
    in_union,
    remove_duplicate_boxes,
    require_nondegenerate,
)
from .network import UnitCubeLabeler
from .sampling import COVERAGE, DATA, ERROR, FILTER, get_examples, rng_stream, sample_uniform, sample_union_uniform

log = logging.getLogger(__name__)

MODES = ("verify", "no_filter", "single_tree")


@dataclass(frozen=True)
class VerificationTask:
    labeler: object  # anything with label_batch(points) in original coordinates
    region: AxisBox
    params: G.GuaranteeParams = field(default_factory=G.GuaranteeParams)
    forest: ForestConfig = field(default_factory=ForestConfig)
    m: int = 20000
    k: int = 10000
    n_error_samples: int | None = None  # None -> k
    n_override: int | None = None
    max_resamples: int | None = None  # None -> planner total
    bonferroni: bool = False
    fixed_test_set: bool = False
    single_tree_depth: int = 11
    truth: object = None  # analytic description for synthetic tasks
    threads: int = 1
    alpha: float = 2.0
    name: str = ""

    def __post_init__(self):
        if self.m < 1 or self.k < 1:
            raise ValueError("m and k must be >= 1")
        require_nondegenerate(self.region)
        if self.n_override is not None and self.n_override < 1:
            raise ValueError("n_override must be >= 1")

    @property
    def dim(self) -> int:
        return self.region.dim

    def unit_labeler(self) -> UnitCubeLabeler:
        return UnitCubeLabeler(self.labeler, self.region.lower, self.region.upper)

    def n_per_box(self, T: int | None = None, D: int | None = None) -> int:
        if self.n_override is not None:
            return self.n_override
        return self.plan(T, D).n_per_box

    def plan(self, T: int | None = None, D: int | None = None) -> G.BudgetPlan:
        return G.plan_budget(self.params, T or self.forest.n_trees, D or self.forest.max_depth,
                             bonferroni=self.bonferroni)


@dataclass
class BoxAudit:
    tree: int
    leaf: int
    accepted: bool
    source: str  # "training", "resampled", "rejected", "unfiltered", "budget"
    support: int  # positive points backing the decision
    box: AxisBox = field(repr=False)


@dataclass
class VerificationReport:
    boxes: list[AxisBox]  # original coordinates
    coverage_estimate: float
    error_estimate: float
    coverage_met: bool
    trees_used: int
    resamples_spent: int
    certificate: dict
    wall_time: float
    seed: int
    mode: str = "verify"
    timings: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    unit_boxes: list[AxisBox] = field(default_factory=list, repr=False)
    audit: list[BoxAudit] = field(default_factory=list, repr=False)
    config: dict = field(default_factory=dict)

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "mode": self.mode,
            "seed": self.seed,
            "n_boxes": self.n_boxes,
            "boxes": [b.to_dict() for b in self.boxes],
            "coverage_estimate": self.coverage_estimate,
            "error_estimate": self.error_estimate,
            "coverage_met": self.coverage_met,
            "trees_used": self.trees_used,
            "resamples_spent": self.resamples_spent,
            "certificate": self.certificate,
            "warnings": list(self.warnings),
            "trace": self.trace,
            "config": self.config,
        }
        if include_timing:
            doc["wall_time"] = self.wall_time
            doc["timings"] = self.timings
        return doc

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def summary(self) -> str:
        return (f"n_boxes={self.n_boxes} coverage={self.coverage_estimate:.4f} "
                f"error={self.error_estimate:.4f} time={self.wall_time:.2f}s")


def filter_box(box: AxisBox, tree_sample_count: int, n: int, labeler,
               rng: np.random.Generator) -> tuple[bool, int]:
    """Accept ``box`` if it already holds ``n`` training points, else if ``n`` fresh draws are all positive.

    Draws are labeled in growing chunks and the scan stops at the first
    negative; the returned count is the number of draws up to and including it,
    which is what a one-at-a-time scan would have spent.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if tree_sample_count >= n:
        return True, 0
    pts = sample_uniform(box, n, rng)
    used, chunk = 0, 32
    while used < n:
        lab = np.asarray(labeler.label_batch(pts[used : used + chunk]))
        neg = np.flatnonzero(lab == 0)
        if neg.size:
            return False, used + int(neg[0]) + 1
        used += lab.shape[0]
        chunk *= 2
    return True, n


class CoverageEstimator:
    """Fresh (or, optionally, fixed) uniform test sets over the unit cube."""

    def __init__(self, labeler, dim: int, k: int, seed: int, fixed: bool = False):
        self.labeler = labeler
        self.dim = dim
        self.k = k
        self.seed = seed
        self.fixed = fixed
        self._cache = None

    def test_set(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        if self.fixed:
            if self._cache is None:
                self._cache = self._draw(rng_stream(self.seed, COVERAGE, 0))
            return self._cache
        return self._draw(rng_stream(self.seed, COVERAGE, index))

    def _draw(self, rng):
        pts = sample_uniform(AxisBox.unit(self.dim), self.k, rng)
        return pts, np.asarray(self.labeler.label_batch(pts), dtype=bool)

    def estimate(self, boxes: Sequence[AxisBox], index: int) -> dict:
        pts, pos = self.test_set(index)
        inside = in_union(boxes, pts) if boxes else np.zeros(len(pts), dtype=bool)
        n_pos = int(pos.sum())
        hit = int((pos & inside).sum())
        return {
            "coverage": hit / max(1, n_pos),
            "positives_seen": n_pos,
            "union_fraction": float(inside.mean()),
        }


def estimate_coverage(boxes: Sequence[AxisBox], task: VerificationTask,
                      rng: np.random.Generator) -> tuple[float, int]:
    """Fraction of positive test points (uniform in the unit cube) that land in the union.

    ``boxes`` are in unit-cube coordinates of ``task.region``.
    """
    pts = sample_uniform(AxisBox.unit(task.dim), task.k, rng)
    pos = np.asarray(task.unit_labeler().label_batch(pts), dtype=bool)
    n_pos = int(pos.sum())
    if n_pos == 0:
        log.warning("coverage test set contains no positive points")
    if not boxes:
        return 0.0, n_pos
    hit = int((pos & in_union(boxes, pts)).sum())
    return hit / max(1, n_pos), n_pos


def estimate_error(boxes: Sequence[AxisBox], labeler, n_error_samples: int,
                   rng: np.random.Generator) -> float:
    """Fraction of uniform-over-union draws labeled negative."""
    if not boxes:
        raise ValueError("error is undefined for an empty box set")
    if n_error_samples < 1:
        raise ValueError("n_error_samples must be >= 1")
    pts = sample_union_uniform(boxes, n_error_samples, rng)
    lab = np.asarray(labeler.label_batch(pts))
    return float(np.mean(lab == 0))


def _certificate(task: VerificationTask, n: int, T: int, D: int, trees_used: int,
                 union_fraction: float, mode: str) -> dict:
    p = task.params
    N = task.dim
    xi = 2.0**-D
    boxes_max = G.max_boxes(T, D)
    delta_box = p.delta / boxes_max if task.bonferroni else p.delta
    p_neg = G.chernoff_miss_probability(task.m, xi, N, task.alpha)
    cert = {
        "n_per_box": n,
        "delta": p.delta,
        "delta_per_box": delta_box,
        "bonferroni": task.bonferroni,
        "R": p.R,
        "confidence_per_box": G.wilks_confidence(n, p.R),
        "purity_certified": G.purity_from_n(n, delta_box),
        "coverage_target": p.coverage,
        "epsilon": p.eps,
        "epsilon_consistent": p.epsilon_consistent,
        "error_fraction_bound": 1.0 - p.R,
        "error_volume_bound": G.error_upper_bound(p.R, union_fraction * float(np.prod(task.region.widths))),
        "xi": xi,
        "depth": D,
        "trees": T,
        "max_boxes": boxes_max,
        "m": task.m,
        "alpha": task.alpha,
        "chernoff_precondition": G.chernoff_precondition(task.m, n, xi, N, task.alpha),
        "chernoff_miss_probability": p_neg,
        "forest_miss_probability": G.forest_miss_probability(p_neg, trees_used, 1.0, xi, N),
        "filtered": mode != "no_filter",
    }
    if task.n_override is not None:
        cert["n_override"] = task.n_override
    return cert


def run(task: VerificationTask, seed: int, mode: str = "verify") -> VerificationReport:
    """Execute the full procedure; deterministic given ``(task, seed)``."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    t_start = time.perf_counter()
    timings = {"examples": 0.0, "training": 0.0, "filtering": 0.0, "coverage": 0.0, "error": 0.0}

    fcfg = replace(task.forest, seed=seed)
    if mode == "single_tree":
        fcfg = replace(fcfg, n_trees=1, max_depth=task.single_tree_depth)
    T, D = fcfg.n_trees, fcfg.max_depth
    grid = XiGrid.unit(task.dim, D)
    n = task.n_per_box(T, D)
    budget = task.max_resamples if task.max_resamples is not None else task.plan(T, D).total_resamples

    labeler = task.unit_labeler()
    unit = AxisBox.unit(task.dim)
    warn: list[str] = []

    t0 = time.perf_counter()
    data = get_examples(labeler, task.m, unit, rng_stream(seed, DATA))
    timings["examples"] += time.perf_counter() - t0
    if data.positives_count == 0:
        warn.append("training set contains no positive examples")

    cov = CoverageEstimator(labeler, task.dim, task.k, seed, fixed=task.fixed_test_set)
    boxes: list[AxisBox] = []
    audit: list[BoxAudit] = []
    trace: list[dict] = []
    spent = 0
    budget_hit = False
    coverage = 0.0
    union_fraction = 0.0
    trees_used = 0
    pool = ThreadPoolExecutor(task.threads) if task.threads > 1 and mode != "no_filter" else None

    try:
        for t in range(T):
            t0 = time.perf_counter()
            tree = train_tree(data, fcfg, grid, tree_rng(seed, t))
            timings["training"] += time.perf_counter() - t0
            trees_used = t + 1
            cands = get_pure_positive_leaves(tree)

            t0 = time.perf_counter()
            for lf in cands:
                # leaves tile the unit cube; anything else is a bug upstream
                assert contains_box(unit, lf.box)
            if mode == "no_filter":
                results = [(True, 0)] * len(cands)
            else:
                def job(i):
                    lf = cands[i]
                    return filter_box(lf.box, lf.n_distinct, n, labeler, rng_stream(seed, FILTER, t, i))
                idx = range(len(cands))
                results = list(pool.map(job, idx)) if pool else [job(i) for i in idx]

            accepted_here = 0
            from_training = 0
            tree_spent = 0
            for i, (lf, (ok, used)) in enumerate(zip(cands, results)):
                if mode == "no_filter":
                    source, support = "unfiltered", lf.n_distinct
                elif used == 0:
                    source, support = ("training", lf.n_distinct)
                else:
                    if budget_hit or spent + used > budget:
                        budget_hit = True
                        audit.append(BoxAudit(t, i, False, "budget", 0, lf.box))
                        continue
                    spent += used
                    tree_spent += used
                    source, support = ("resampled", n) if ok else ("rejected", used - 1)
                audit.append(BoxAudit(t, i, ok, source, support, lf.box))
                if ok:
                    boxes.append(lf.box)
                    accepted_here += 1
                    from_training += source == "training"
            timings["filtering"] += time.perf_counter() - t0

            boxes = remove_duplicate_boxes(boxes)

            t0 = time.perf_counter()
            if boxes:
                est = cov.estimate(boxes, t)
            else:
                est = {"coverage": 0.0, "positives_seen": None, "union_fraction": 0.0}
            timings["coverage"] += time.perf_counter() - t0
            coverage = est["coverage"]
            union_fraction = est["union_fraction"]
            trace.append({
                "tree": t,
                "candidates": len(cands),
                "accepted": accepted_here,
                "accepted_from_training": from_training,
                "resamples": tree_spent,
                "n_boxes": len(boxes),
                "coverage": coverage,
                "positives_seen": est["positives_seen"],
            })
            if est["positives_seen"] == 0:
                warn.append(f"tree {t}: coverage test set had no positive points")
            if coverage >= task.params.coverage:
                break
    finally:
        if pool is not None:
            pool.shutdown()

    if budget_hit:
        warn.append(f"resample budget {budget} exhausted; remaining candidates skipped")
    if not boxes:
        warn.append("no box was accepted")
        error = 0.0
    else:
        t0 = time.perf_counter()
        n_err = task.n_error_samples or task.k
        error = estimate_error(boxes, labeler, n_err, rng_stream(seed, ERROR))
        timings["error"] += time.perf_counter() - t0
    met = coverage >= task.params.coverage
    if not met:
        warn.append(f"coverage target {task.params.coverage} not reached ({coverage:.4f})")

    return VerificationReport(
        boxes=[from_unit(b, task.region) for b in boxes],
        coverage_estimate=float(coverage),
        error_estimate=error,
        coverage_met=met,
        trees_used=trees_used,
        resamples_spent=spent,
        certificate=_certificate(task, n, T, D, trees_used, union_fraction, mode),
        wall_time=time.perf_counter() - t_start,
        seed=seed,
        mode=mode,
        timings=timings,
        warnings=warn,
        trace=trace,
        unit_boxes=boxes,
        audit=audit,
    )


def run_ablation_no_filter(task: VerificationTask, seed: int) -> VerificationReport:
    return run(task, seed, mode="no_filter")


def run_single_tree_baseline(task: VerificationTask, seed: int) -> VerificationReport:
    return run(task, seed, mode="single_tree")

