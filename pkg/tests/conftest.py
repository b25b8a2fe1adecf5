import numpy as np
import pytest

from rfprove.geometry import AxisBox
from rfprove.network import Activation, Layer, MarginLabeler, Network, OutputProperty
from rfprove.synthetic import box_union_network

_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    num = getattr(report, "criterion", None)
    if num is None:
        return
    rec = _criteria.setdefault(num, {"text": report.criterion_text, "ok": True, "ran": False})
    if report.when == "call":
        rec["ran"] = True
    if report.failed:
        rec["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = mark.args[0]
        rep.criterion_text = mark.args[1]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        rec = _criteria[num]
        status = "PASS" if rec["ok"] and rec["ran"] else ("FAIL" if not rec["ok"] else "SKIP")
        terminalreporter.write_line(f"criterion {num}: {status}  {rec['text']}")


def box(*intervals) -> AxisBox:
    return AxisBox.from_intervals(intervals)


@pytest.fixture
def box_labeler():
    """Indicator of [0.25, 0.75]^2 built from exact ReLU min/max identities."""
    net = box_union_network([box((0.25, 0.75), (0.25, 0.75))])
    return MarginLabeler(net, OutputProperty.threshold(0.0))


@pytest.fixture
def halfspace_labeler():
    """Positive iff x0 >= 0.5 (splits the unit square in half)."""
    net = Network((Layer(np.array([[1.0, 0.0]]), np.array([-0.5]), Activation.LINEAR),), 2)
    return MarginLabeler(net, OutputProperty.threshold(0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_box_set(rng, dim=None, max_boxes=12, denom=8) -> list[AxisBox]:
    """Boxes on a coarse dyadic lattice so containment and duplicates are common."""
    dim = dim or int(rng.integers(1, 4))
    out = []
    for _ in range(int(rng.integers(1, max_boxes + 1))):
        a = rng.integers(0, denom + 1, size=(2, dim))
        lo, hi = a.min(axis=0), a.max(axis=0)
        hi = np.where(hi == lo, np.minimum(lo + 1, denom), hi)
        lo = np.where(hi == lo, lo - 1, lo)
        out.append(AxisBox(lo / denom, hi / denom))
    if len(out) > 1 and rng.random() < 0.5:
        out.append(out[int(rng.integers(len(out)))])
    return out


def random_tree_inputs(seed):
    """Labeled data, config and grid for one randomly shaped tree."""
    from rfprove.forest import ForestConfig
    from rfprove.geometry import XiGrid
    from rfprove.sampling import Dataset

    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 5))
    depth = int(rng.integers(1, 7))
    m = int(rng.integers(5, 400))
    x = rng.random((m, dim))
    w = rng.normal(size=dim)
    y = ((x - 0.5) @ w + 0.3 * rng.normal(size=m) > 0).astype(np.int8)
    cfg = ForestConfig(n_trees=1, max_depth=depth, bootstrap=bool(rng.random() < 0.8))
    return Dataset(x, y), cfg, XiGrid.unit(dim, depth), rng
