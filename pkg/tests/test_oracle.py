import numpy as np
import pytest

from rfprove.geometry import AxisBox
from rfprove.oracle import (
    MIXED,
    NEGATIVE,
    POSITIVE,
    OracleLimitError,
    box_impurity,
    build_oracle,
    oracle_coverage,
    oracle_error,
    oracle_error_band,
)
from rfprove.sampling import MISC, rng_stream, sample_uniform
from rfprove.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    halfspace_volume,
    named_spec,
    random_disjoint_boxes,
)

from conftest import box


def task_for(name, dim=None, seed=0):
    return generate_synthetic(named_spec(name, dim), seed)


class TestSynthetic:
    @pytest.mark.parametrize("name", ["box2d", "noisy_box2d", "multibox2d", "checkerboard2d", "halfspace"])
    def test_network_matches_indicator(self, name):
        task = task_for(name)
        pts = sample_uniform(AxisBox.unit(2), 50_000, rng_stream(0, MISC, 5))
        np.testing.assert_array_equal(task.labeler.label_batch(pts).astype(bool), task.truth.indicator(pts))

    def test_network_matches_indicator_on_grid_lines(self):
        # boundary points are positive (closed boxes, margin >= 0)
        task = task_for("multibox2d")
        g = np.arange(0, 17) / 16
        pts = np.array([(a, b) for a in g for b in g])
        np.testing.assert_array_equal(task.labeler.label_batch(pts).astype(bool), task.truth.indicator(pts))

    def test_box_volume(self):
        assert task_for("box2d").truth.positive_volume() == pytest.approx(0.25)

    def test_halfspace_center_volume(self):
        assert task_for("halfspace", 5).truth.positive_volume() == pytest.approx(0.5)

    def test_multibox_additive(self):
        t = task_for("multibox2d").truth
        assert t.positive_volume() == pytest.approx(sum(float(np.prod(b.widths)) for b in t.boxes))
        assert t.positive_volume() == pytest.approx(0.46875)

    def test_halfspace_volume_vs_monte_carlo(self):
        rng = np.random.default_rng(0)
        for dim in (1, 2, 3, 5):
            w = rng.normal(size=dim)
            b = float(rng.uniform(-0.5, 0.5) + 0.5 * w.sum())
            pts = rng.random((200_000, dim))
            mc = np.mean(pts @ w - b >= 0)
            assert halfspace_volume(w, b) == pytest.approx(mc, abs=4 * np.sqrt(0.25 / 200_000))

    def test_random_boxes_disjoint_and_aligned(self):
        boxes = random_disjoint_boxes(3, 2, 5, rng_stream(1, MISC, 1))
        assert len(boxes) == 3
        for b in boxes:
            assert np.all((b.lower * 32) % 1 == 0) and np.all((b.upper * 32) % 1 == 0)
            assert np.all(b.widths >= 3 / 32)
        for i in range(3):
            for j in range(i + 1, 3):
                lo = np.maximum(boxes[i].lower, boxes[j].lower)
                hi = np.minimum(boxes[i].upper, boxes[j].upper)
                assert np.any(hi <= lo)

    def test_seed_deterministic(self):
        spec = SyntheticSpec("multi_box_union", 3, n_random_boxes=3)
        a, b = generate_synthetic(spec, 4).truth, generate_synthetic(spec, 4).truth
        assert [x.key() for x in a.boxes] == [x.key() for x in b.boxes]

    def test_unsupported_kind(self):
        with pytest.raises(ValueError):
            SyntheticSpec("sphere", 2)

    def test_noisy_holes_inside_core(self):
        t = task_for("noisy_box2d").truth
        core = t.boxes[0]
        assert len(t.holes) > 0
        for h in t.holes:
            assert np.all(h.lower >= core.lower) and np.all(h.upper <= core.upper)
            assert h.lower[1] >= 0.25 and h.upper[1] <= 0.25 + 1 / 32


class TestBuildOracle:
    def test_aligned_box_exact(self):
        orc = build_oracle(task_for("box2d"), 5)
        assert orc.volume_bracket() == (0.25, 0.25)
        assert orc.count(MIXED) == 0

    def test_unaligned_box_mixed_shell(self):
        spec = SyntheticSpec("box_indicator", 2, boxes=(box((0.3, 0.7), (0.3, 0.7)),))
        orc = build_oracle(generate_synthetic(spec), 4)
        lo, hi = orc.volume_bracket()
        assert lo <= 0.16 <= hi
        # edges 0.3 and 0.7 cross cells 4 and 11: the mixed cells form that ring
        mixed = {tuple(c) for c in np.argwhere(orc.labels == MIXED)}
        ring = {(i, j) for i in range(4, 12) for j in range(4, 12) if {i, j} & {4, 11}}
        assert mixed == ring and len(ring) == 28
        assert lo == pytest.approx(36 / 256)
        assert hi == pytest.approx(64 / 256)

    def test_all_negative(self):
        orc = build_oracle(task_for("constant"), 6)
        assert orc.count(POSITIVE) == 0 and orc.count(MIXED) == 0

    def test_diagonal_halfspace(self):
        task = task_for("halfspace")
        widths = []
        for d in (4, 6, 8):
            orc = build_oracle(task, d)
            assert orc.count(MIXED) == 2**d
            lo, hi = orc.volume_bracket()
            assert lo <= 0.5 <= hi
            widths.append(hi - lo)
        assert widths[0] > widths[1] > widths[2]

    def test_guards(self):
        with pytest.raises(OracleLimitError):
            build_oracle(task_for("halfspace", 5), 2)
        with pytest.raises(OracleLimitError):
            build_oracle(task_for("box2d"), 13)

    def test_bracket_contains_monte_carlo(self):
        task = task_for("noisy_box2d")
        orc = build_oracle(task, 8)
        pts = sample_uniform(AxisBox.unit(2), 200_000, rng_stream(3, MISC, 3))
        mc = task.labeler.label_batch(pts).mean()
        slack = 4 * np.sqrt(mc * (1 - mc) / len(pts))
        lo, hi = orc.volume_bracket()
        assert lo - slack <= mc <= hi + slack

    @pytest.mark.parametrize("name", ["noisy_box2d", "multibox2d", "halfspace"])
    def test_cell_labels_agree_with_network(self, name):
        task = task_for(name)
        orc = build_oracle(task, 6)
        pts = sample_uniform(AxisBox.unit(2), 20_000, rng_stream(4, MISC, 4))
        lab = task.labeler.label_batch(pts)
        cls = orc.label_of(pts)
        assert np.all(lab[cls == POSITIVE] == 1)
        assert np.all(lab[cls == NEGATIVE] == 0)


class TestOracleMetrics:
    def test_exact_preimage(self):
        orc = build_oracle(task_for("multibox2d"), 6)
        boxes = list(task_for("multibox2d").truth.boxes)
        assert oracle_coverage(orc, boxes) == pytest.approx(1.0)
        assert oracle_error(orc, boxes) == 0.0

    def test_half_coverage(self):
        orc = build_oracle(task_for("box2d"), 6)
        assert oracle_coverage(orc, [box((0.25, 0.5), (0.25, 0.75))]) == pytest.approx(0.5)

    def test_empty(self):
        orc = build_oracle(task_for("box2d"), 6)
        assert oracle_coverage(orc, []) == 0.0
        with pytest.raises(ValueError):
            oracle_error(orc, [])

    def test_zero_positive_volume(self):
        orc = build_oracle(task_for("constant"), 4)
        with pytest.raises(ValueError):
            oracle_coverage(orc, [AxisBox.unit(2)])

    def test_error_values(self):
        orc = build_oracle(task_for("box2d"), 6)
        assert oracle_error(orc, [box((0.3, 0.7), (0.3, 0.7))]) == 0.0
        assert oracle_error(orc, [box((0.8, 1.0), (0, 1))]) == 1.0
        assert oracle_error(orc, [box((0.5, 1.0), (0.25, 0.75))]) == pytest.approx(0.5)

    def test_overlapping_boxes_not_double_counted(self):
        orc = build_oracle(task_for("box2d"), 6)
        boxes = [box((0.25, 0.75), (0.25, 0.75)), box((0.25, 0.75), (0.25, 0.75)), box((0.5, 1), (0.5, 1))]
        assert oracle_coverage(orc, boxes) == pytest.approx(1.0)
        # union = 0.25 + 0.1875 of which 0.1875 negative
        assert oracle_error(orc, boxes) == pytest.approx(0.1875 / 0.4375)

    def test_error_band_orders(self):
        spec = SyntheticSpec("box_indicator", 2, boxes=(box((0.3, 0.7), (0.3, 0.7)),))
        orc = build_oracle(generate_synthetic(spec), 4)
        lo, hi = oracle_error_band(orc, [box((0.25, 0.75), (0.25, 0.75))])
        assert 0.0 <= lo <= hi <= 1.0
        assert hi > lo

    def test_box_impurity(self):
        orc = build_oracle(task_for("box2d"), 6)
        assert box_impurity(orc, box((0.3, 0.7), (0.3, 0.7))) == (0.0, 0.0)
        neg, mixed = box_impurity(orc, box((0.5, 1.0), (0.25, 0.75)))
        assert neg == pytest.approx(0.5) and mixed == 0.0
