"""Forest-guided preimage under-approximation for feedforward ReLU networks.

A random forest trained on labeled samples proposes axis-aligned boxes; each
box is kept only when enough positive samples vouch for it, which yields a
tolerance-limit purity guarantee per box.
"""

__version__ = "0.1.0"

from .forest import ForestConfig, get_pure_positive_leaves, train_forest, train_tree
from .geometry import AxisBox, XiGrid, remove_duplicate_boxes, union_volume, volume
from .guarantees import (
    BudgetPlan,
    GuaranteeParams,
    chernoff_miss_probability,
    coverage_lower_bound,
    error_upper_bound,
    forest_miss_probability,
    plan_budget,
    wilks_confidence,
    wilks_n,
)
from .network import (
    Layer,
    MarginLabeler,
    Network,
    NetworkFormatError,
    OutputProperty,
    forward,
    load_network,
    load_property,
)
from .oracle import GridOracle, build_oracle, oracle_coverage, oracle_error
from .sampling import Dataset, get_examples, rng_stream, sample_uniform, sample_union_uniform
from .synthetic import SyntheticSpec, generate_synthetic, named_spec
from .verifier import (
    VerificationReport,
    VerificationTask,
    estimate_coverage,
    estimate_error,
    filter_box,
    run,
    run_ablation_no_filter,
    run_single_tree_baseline,
)

__all__ = [
    "AxisBox", "BudgetPlan", "Dataset", "ForestConfig", "GridOracle", "GuaranteeParams", "Layer",
    "MarginLabeler", "Network", "NetworkFormatError", "OutputProperty", "SyntheticSpec",
    "VerificationReport", "VerificationTask", "XiGrid", "build_oracle", "chernoff_miss_probability",
    "coverage_lower_bound", "error_upper_bound", "estimate_coverage", "estimate_error", "filter_box",
    "forest_miss_probability", "forward", "generate_synthetic", "get_examples", "get_pure_positive_leaves",
    "load_network", "load_property", "named_spec", "oracle_coverage", "oracle_error", "plan_budget",
    "remove_duplicate_boxes", "rng_stream", "run", "run_ablation_no_filter", "run_single_tree_baseline",
    "sample_uniform", "sample_union_uniform", "train_forest", "train_tree", "union_volume", "volume",
    "wilks_confidence", "wilks_n",
]
