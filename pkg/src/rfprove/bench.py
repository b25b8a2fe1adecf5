"""Experiment harnesses: dimensional scaling and filter ablation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .guarantees import GuaranteeParams
from .oracle import OracleLimitError, build_oracle, oracle_coverage, oracle_error
from .sampling import MISC, rng_stream, sample_uniform, sample_union_uniform
from .geometry import AxisBox, in_union
from .synthetic import generate_synthetic, named_spec
from .verifier import VerificationReport, VerificationTask, run

log = logging.getLogger(__name__)

RUN_COLUMNS = ["n", "seed", "coverage", "error", "n_boxes", "n_trees_used", "wall_time_ms",
               "coverage_estimate", "error_estimate"]
SUMMARY_COLUMNS = ["n", "coverage", "error", "n_boxes", "n_trees_used", "wall_time_ms"]
ABLATION_COLUMNS = ["task", "mode", "seed", "n", "coverage", "error", "n_boxes", "n_trees_used",
                    "wall_time_ms", "coverage_estimate", "error_estimate"]

# scalability runs use a fixed resample count per box
SCALING_N = 200
SCALING_R = 0.95
SCALING_DELTA = 0.05


@dataclass
class TruthScorer:
    """Ground-truth coverage and error for a box set (unit-cube coordinates).

    Uses the grid oracle when the task is small enough, otherwise Monte Carlo
    against the task's analytic indicator with a large independent sample.
    """

    task: VerificationTask
    oracle_depth: int = 8
    samples: int = 200_000
    seed: int = 12345

    def __post_init__(self):
        self.oracle = None
        if self.task.dim <= 2:
            try:
                self.oracle = build_oracle(self.task, self.oracle_depth)
            except OracleLimitError:
                self.oracle = None
        if self.oracle is None and self.task.truth is None:
            raise ValueError("task has neither an oracle-sized input nor an analytic description")
        if self.oracle is None:
            rng = rng_stream(self.seed, MISC, 10)
            self._pts = sample_uniform(AxisBox.unit(self.task.dim), self.samples, rng)
            self._pos = self.task.truth.indicator(self._pts)

    def coverage(self, boxes) -> float:
        if not boxes:
            return 0.0
        if self.oracle is not None:
            return oracle_coverage(self.oracle, boxes)
        inside = in_union(boxes, self._pts)
        return float((inside & self._pos).sum() / max(1, self._pos.sum()))

    def error(self, boxes) -> float:
        if not boxes:
            return 0.0
        if self.oracle is not None:
            return oracle_error(self.oracle, boxes)
        pts = sample_union_uniform(boxes, self.samples, rng_stream(self.seed, MISC, 11))
        return float(np.mean(~self.task.truth.indicator(pts)))


def _row(report: VerificationReport, scorer: TruthScorer, **extra) -> dict:
    row = dict(extra)
    row.update(
        coverage=scorer.coverage(report.unit_boxes),
        error=scorer.error(report.unit_boxes),
        n_boxes=report.n_boxes,
        n_trees_used=report.trees_used,
        wall_time_ms=1000.0 * report.wall_time,
        coverage_estimate=report.coverage_estimate,
        error_estimate=report.error_estimate,
    )
    return row


def scaling_task(dim: int, base: dict | None = None, seed: int = 0) -> VerificationTask:
    base = dict(base or {})
    params = base.pop("params", GuaranteeParams(delta=SCALING_DELTA, R=SCALING_R, coverage=0.75))
    base.setdefault("m", 20000)
    base.setdefault("n_override", SCALING_N)
    return generate_synthetic(named_spec("halfspace", dim), seed, params=params, **base)


def run_scalability_suite(dims: Sequence[int], base_config: dict | None = None,
                          seeds: Iterable[int] = range(3)) -> list[dict]:
    """One row per (N, seed) on the oblique halfspace synthetic."""
    rows = []
    for dim in dims:
        task = scaling_task(dim, base_config)
        scorer = TruthScorer(task)
        for seed in seeds:
            rep = run(task, seed)
            rows.append(_row(rep, scorer, n=dim, seed=seed))
            log.info("scalability N=%d seed=%d %s", dim, seed, rep.summary())
    return rows


def summarize(rows: Sequence[dict], keys: Sequence[str], metrics: Sequence[str]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k) if not all(isinstance(v, (int, float)) for v in k) else k):
        g = groups[key]
        rec = dict(zip(keys, key))
        for mtr in metrics:
            rec[mtr] = float(np.mean([r[mtr] for r in g]))
        out.append(rec)
    return out


def summarize_scalability(rows: Sequence[dict]) -> list[dict]:
    return summarize(rows, ["n"], SUMMARY_COLUMNS[1:])


def run_ablation_suite(tasks: Sequence[VerificationTask], seeds: Iterable[int] = range(5)) -> list[dict]:
    """Paired filtered / unfiltered runs; one row per (task, mode, seed)."""
    rows = []
    seeds = list(seeds)
    for task in tasks:
        scorer = TruthScorer(task)
        for seed in seeds:
            for mode in ("verify", "no_filter"):
                rep = run(task, seed, mode)
                rows.append(_row(rep, scorer, task=task.name, mode=mode, seed=seed, n=task.dim))
    return rows


def summarize_ablation(rows: Sequence[dict]) -> list[dict]:
    return summarize(rows, ["task", "mode"], ["coverage", "error", "n_boxes", "n_trees_used", "wall_time_ms"])


def write_csv(rows: Sequence[dict], path, columns: Sequence[str]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
