import csv
import json

import numpy as np
import pytest

from rfprove.cli import EXIT_ERROR, EXIT_MET, EXIT_NOT_MET, main, parse_int_range, parse_region, ConfigError
from rfprove.network import OutputProperty, save_network
from rfprove.synthetic import box_union_network

from conftest import box

FAST = ["--task", "box2d", "--delta", "0.05", "--R", "0.9", "--m", "2000", "--k", "2000", "--trees", "20"]


def read_boxes_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    config = json.loads(lines[0][len("# config: "):])
    rows = list(csv.reader(lines[1:]))
    return config, rows[0], rows[1:]


class TestVerify:
    def test_met_writes_outputs(self, tmp_path, capsys):
        assert main(["verify", *FAST, "--out", str(tmp_path)]) == EXIT_MET
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["coverage_met"] and doc["mode"] == "verify"
        config, header, rows = read_boxes_csv(tmp_path / "boxes.csv")
        assert header == ["lower0", "lower1", "upper0", "upper1"]
        assert len(rows) == len(doc["boxes"])
        assert config["trees"] == 20 and config["task"] == "box2d"
        assert "coverage" in capsys.readouterr().out

    def test_not_met_still_emits_boxes(self, tmp_path):
        args = ["verify", "--task", "noisy_box2d", "--delta", "0.05", "--R", "0.9", "--coverage", "1.0",
                "--m", "3000", "--k", "2000", "--trees", "5", "--out", str(tmp_path)]
        assert main(args) == EXIT_NOT_MET
        assert (tmp_path / "report.json").exists() and (tmp_path / "boxes.csv").exists()

    def test_bad_network_is_error(self, tmp_path, capsys):
        bad = tmp_path / "net.json"
        bad.write_text(json.dumps({"input_dim": 2, "layers": [{"weights": [[1.0, 2.0, 3.0]], "bias": [0.0]}]}))
        assert main(["verify", "--network", str(bad), "--out", str(tmp_path / "o")]) == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_network_file(self, tmp_path):
        net = tmp_path / "net.json"
        save_network(box_union_network([box((0.25, 0.75), (0.25, 0.75))]), net, OutputProperty.threshold(0.0))
        args = ["verify", "--network", str(net), *FAST[2:], "--out", str(tmp_path / "o")]
        assert main(args) == EXIT_MET

    @pytest.mark.parametrize("extra", [["--R", "1.5"], ["--trees", "0"], ["--region", "0:1"]])
    def test_invalid_settings(self, tmp_path, extra, capsys):
        assert main(["verify", *FAST, *extra, "--out", str(tmp_path)]) == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_unknown_mode_rejected_by_parser(self):
        with pytest.raises(SystemExit):
            main(["verify", *FAST, "--mode", "bogus"])

    def test_network_and_task_conflict(self, tmp_path):
        assert main(["verify", *FAST, "--network", "x.json", "--out", str(tmp_path)]) == EXIT_ERROR

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"task": "box2d", "delta": 0.05, "R": 0.9, "m": 2000, "k": 2000,
                                   "trees": 20, "seed": 3}))
        assert main(["verify", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / "o")]) in (0, 2)
        doc = json.loads((tmp_path / "o" / "report.json").read_text())
        assert doc["seed"] == 7 and doc["config"]["trees"] == 20

    def test_unknown_config_field(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"task": "box2d", "tress": 20}))
        assert main(["verify", "--config", str(cfg)]) == EXIT_ERROR

    def test_replay_report(self, tmp_path):
        main(["verify", *FAST, "--seed", "4", "--out", str(tmp_path / "a")])
        first = json.loads((tmp_path / "a" / "report.json").read_text())
        main(["verify", "--config", str(tmp_path / "a" / "report.json"), "--out", str(tmp_path / "b")])
        second = json.loads((tmp_path / "b" / "report.json").read_text())
        for doc in (first, second):
            doc.pop("wall_time")
            doc.pop("timings")
            doc["config"].pop("out")
        assert first == second


class TestPlan:
    def test_anchors(self, capsys):
        assert main(["plan", "--trees", "1,2000", "--depth", "5,11"]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        table = {(int(r["trees"]), int(r["depth"])): r for r in rows}
        assert table[1, 11]["max_boxes"] == "1024" and table[1, 11]["total_resamples"] == "1412096"
        assert table[2000, 5]["max_boxes"] == "32000"
        assert all(r["n_per_box"] == "1379" for r in rows)

    def test_ranges_and_file(self, tmp_path, capsys):
        out = tmp_path / "plan.csv"
        assert main(["plan", "--trees", "1-3", "--depth", "2", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# config: ") and len(lines) == 5

    def test_empty_range(self, capsys):
        assert main(["plan", "--trees", "5-1"]) == EXIT_ERROR
        assert "trees" in capsys.readouterr().err

    def test_bad_delta(self):
        assert main(["plan", "--delta", "0"]) == EXIT_ERROR


class TestOracleCommand:
    def test_box2d(self, capsys):
        assert main(["oracle", "--task", "box2d", "--depth", "8"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("positive volume in [0.25, 0.25]")
        assert "0 mixed cells, depth 8" in out

    def test_region_scaling(self, tmp_path, capsys):
        net = tmp_path / "net.json"
        save_network(box_union_network([box((0.25, 0.75), (0.25, 0.75))]), net, OutputProperty.threshold(0.0))
        assert main(["oracle", "--network", str(net), "--region", "0:1,0:2", "--depth", "6"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("positive volume in [0.25, 0.25] (fraction of region [0.125, 0.125]")

    def test_region_with_synthetic_task_rejected(self, capsys):
        assert main(["oracle", "--task", "box2d", "--region", "0:2,0:2"]) == EXIT_ERROR
        assert "region" in capsys.readouterr().err

    def test_too_deep_for_dim(self):
        assert main(["oracle", "--task", "halfspace", "--dim", "5", "--depth", "2"]) == EXIT_ERROR


class TestBench:
    def test_scalability(self, tmp_path, capsys):
        assert main(["bench", "--suite", "scalability", "--dims", "2", "--seeds", "1", "--out", str(tmp_path)]) == 0
        for name in ("scalability_runs.csv", "scalability_summary.csv"):
            lines = (tmp_path / name).read_text().splitlines()
            assert lines[0].startswith("# config: ") and len(lines) == 3
        assert "N=2" in capsys.readouterr().out

    def test_ablation(self, tmp_path):
        assert main(["bench", "--suite", "ablation", "--seeds", "2", "--out", str(tmp_path)]) == 0
        rows = list(csv.DictReader((tmp_path / "ablation_runs.csv").read_text().splitlines()[1:]))
        assert {r["mode"] for r in rows} == {"verify", "no_filter"} and len(rows) == 4
        assert (tmp_path / "ablation_summary.csv").exists()

    def test_unknown_task(self, tmp_path):
        assert main(["bench", "--suite", "ablation", "--tasks", "nope", "--out", str(tmp_path)]) == EXIT_ERROR


class TestParsers:
    def test_int_range(self):
        assert parse_int_range("1,5", "x") == [1, 5]
        assert parse_int_range("1-4,9", "x") == [1, 2, 3, 4, 9]
        with pytest.raises(ConfigError):
            parse_int_range("", "x")
        with pytest.raises(ConfigError):
            parse_int_range("a-b", "x")

    def test_region(self):
        r = parse_region("-1:1,0:0.5", 2)
        np.testing.assert_array_equal(r.lower, [-1, 0])
        np.testing.assert_array_equal(r.upper, [1, 0.5])
        with pytest.raises(ConfigError):
            parse_region("0:1", 2)
        with pytest.raises(ConfigError):
            parse_region("1:0,0:1", 2)
