"""Closed-form statistics behind the purity and coverage certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass

_INT64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class GuaranteeParams:
    """Confidence ``delta``, purity ``R``, coverage target ``c`` and error budget ``epsilon``."""

    delta: float = 0.001
    R: float = 0.995
    coverage: float = 0.75
    epsilon: float | None = None  # None -> 1 - R

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.R < 1.0:
            raise ValueError(f"R must lie in (0, 1), got {self.R}")
        # 0 is accepted as "stop after the first tree"
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage must lie in [0, 1], got {self.coverage}")
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def eps(self) -> float:
        return 1.0 - self.R if self.epsilon is None else self.epsilon

    @property
    def epsilon_consistent(self) -> bool:
        """Whether the requested error budget is at least the per-box slack 1 - R."""
        return self.eps >= (1.0 - self.R) - 1e-15


@dataclass(frozen=True)
class BudgetPlan:
    n_per_box: int
    max_boxes: int
    total_resamples: int
    trees: int
    depth: int


def _check_unit(name: str, v: float) -> None:
    if not 0.0 < v < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {v}")


def wilks_n(delta: float, R: float) -> int:
    """Smallest n with ``1 - R**n >= 1 - delta``."""
    _check_unit("delta", delta)
    _check_unit("R", R)
    n = max(1, math.ceil(math.log(delta) / math.log(R)))
    # ceil of a rounded quotient can land one off either way
    while n > 1 and 1.0 - R ** (n - 1) >= 1.0 - delta:
        n -= 1
    while 1.0 - R**n < 1.0 - delta:
        n += 1
    return n


def wilks_confidence(n: int, R: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_unit("R", R)
    return 1.0 - R**n


def purity_from_n(n: int, delta: float) -> float:
    """Purity level certified by n all-positive draws at confidence 1 - delta."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_unit("delta", delta)
    return delta ** (1.0 / n)


def chernoff_miss_probability(m: int, xi: float, N: int, alpha: float) -> float:
    """Bound on a fixed xi-cell receiving too few of m uniform training points."""
    if alpha <= 1.0:
        raise ValueError("alpha must exceed 1")
    mu = m * xi**N
    return math.exp(-((1.0 - 1.0 / alpha) ** 2) * mu / 2.0)


def chernoff_precondition(m: int, n: int, xi: float, N: int, alpha: float) -> bool:
    """``m > n * alpha / xi**N``, under which the Chernoff step is meaningful."""
    return m > n * alpha / xi**N


def forest_miss_probability(p_neg: float, T: int, vol_B_hat: float, xi: float, N: int) -> float:
    """Union bound over xi-cells of the event that no tree saw enough points in the cell."""
    if vol_B_hat <= 0.0:
        return 0.0
    cells = vol_B_hat / xi**N
    if p_neg >= 1.0:
        return 1.0
    if p_neg <= 0.0:
        return 0.0
    # log space: p_neg**T underflows long before the product does
    log_v = math.log(cells) + T * math.log(p_neg)
    return 1.0 if log_v >= 0.0 else math.exp(log_v)


def coverage_lower_bound(k_factor: int, N: int) -> float:
    if k_factor < 3:
        raise ValueError("k_factor must be >= 3")
    if N < 1:
        raise ValueError("N must be >= 1")
    return ((k_factor - 2) / k_factor) ** N


def error_upper_bound(R: float, vol_BA: float) -> float:
    return (1.0 - R) * vol_BA


def max_boxes(T: int, D: int) -> int:
    if T < 1 or D < 1:
        raise ValueError("T and D must be >= 1")
    return T * (1 << (D - 1))


def plan_budget(params: GuaranteeParams, T: int, D: int, bonferroni: bool = False) -> BudgetPlan:
    boxes = max_boxes(T, D)
    delta = params.delta / boxes if bonferroni else params.delta
    n = wilks_n(delta, params.R)
    total = n * boxes
    if total > _INT64_MAX:
        raise OverflowError(f"resample budget {total} exceeds 64-bit range")
    return BudgetPlan(n_per_box=n, max_boxes=boxes, total_resamples=total, trees=T, depth=D)
