"""Command-line entry point: ``rfprove {verify, plan, oracle, bench}``.

Settings resolve in three layers: built-in defaults, then a JSON config file
(``--config``), then command-line flags. Every output file embeds the fully
resolved config so a run can be replayed with ``--config <report.json>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

from . import __version__
from .forest import ForestConfig
from .geometry import AxisBox
from .guarantees import GuaranteeParams, plan_budget
from .network import MarginLabeler, NetworkFormatError, load_network, load_property, property_from_dict
from .synthetic import NAMED, generate_synthetic, named_spec

EXIT_MET, EXIT_ERROR, EXIT_NOT_MET = 0, 1, 2

log = logging.getLogger("rfprove")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; the message names the field."""


@dataclass
class RunConfig:
    network: str | None = None
    property: str | None = None
    task: str | None = None  # named synthetic task, alternative to --network
    dim: int | None = None  # dimension for dimension-generic synthetic tasks
    region: str | None = None  # "lo:hi,lo:hi,..."; None -> unit cube
    delta: float = 0.001
    R: float = 0.995
    coverage: float = 0.75
    m: int = 20000
    k: int = 10000
    trees: int = 500
    depth: int = 5
    seed: int = 0
    mode: str = "verify"
    out: str | None = None
    threads: int | None = None  # None -> available parallelism
    max_resamples: int | None = None
    error_samples: int | None = None
    n_override: int | None = None
    fixed_test_set: bool = False
    bonferroni: bool = False

    def validate(self) -> None:
        if (self.network is None) == (self.task is None):
            raise ConfigError("exactly one of 'network' or 'task' must be given")
        if self.task is not None and self.task not in NAMED:
            raise ConfigError(f"task: unknown synthetic task {self.task!r}; choose from {', '.join(NAMED)}")
        for name in ("delta", "R"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name}: must lie in (0, 1), got {v}")
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigError(f"coverage: must lie in [0, 1], got {self.coverage}")
        for name in ("m", "k", "trees", "depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.depth > 30:
            raise ConfigError(f"depth: must be <= 30, got {self.depth}")
        for name in ("threads", "max_resamples", "error_samples", "n_override", "dim"):
            v = getattr(self, name)
            if v is not None and v < (0 if name == "max_resamples" else 1):
                raise ConfigError(f"{name}: invalid value {v}")
        if self.mode not in ("verify", "no_filter", "single_tree"):
            raise ConfigError(f"mode: must be verify, no_filter or single_tree, got {self.mode!r}")

    def resolved(self) -> dict:
        doc = asdict(self)
        doc["threads"] = self.effective_threads()
        return doc

    def effective_threads(self) -> int:
        return self.threads if self.threads is not None else (os.cpu_count() or 1)


def parse_region(text: str, dim: int | None = None) -> AxisBox:
    try:
        pairs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"region: cannot parse {text!r} ({exc})") from exc
    if any(len(p) != 2 for p in pairs):
        raise ConfigError(f"region: every interval must be lo:hi, got {text!r}")
    if dim is not None and len(pairs) != dim:
        raise ConfigError(f"region: {len(pairs)} intervals given for a {dim}-input network")
    if any(not lo < hi for lo, hi in pairs):
        raise ConfigError(f"region: every interval needs lo < hi, got {text!r}")
    return AxisBox.from_intervals(pairs)


def _read_config_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path} ({exc})") from exc
    # a report file replays its embedded config
    if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    doc = {k: v for k, v in doc.items() if k != "version"}
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"config: unknown field(s) {', '.join(unknown)}")
    return doc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def build_task(cfg: RunConfig):
    params = GuaranteeParams(delta=cfg.delta, R=cfg.R, coverage=cfg.coverage)
    common = dict(
        params=params,
        forest=ForestConfig(n_trees=cfg.trees, max_depth=cfg.depth, seed=cfg.seed),
        m=cfg.m,
        k=cfg.k,
        n_error_samples=cfg.error_samples,
        n_override=cfg.n_override,
        max_resamples=cfg.max_resamples,
        bonferroni=cfg.bonferroni,
        fixed_test_set=cfg.fixed_test_set,
        threads=cfg.effective_threads(),
    )
    if cfg.task is not None:
        if cfg.region is not None:
            raise ConfigError("region: synthetic tasks always use the unit cube")
        return generate_synthetic(named_spec(cfg.task, cfg.dim), cfg.seed, **common)

    from .verifier import VerificationTask

    try:
        net = load_network(cfg.network)
    except OSError as exc:
        raise ConfigError(f"network: cannot read {cfg.network} ({exc})") from exc
    if cfg.property is not None:
        prop = load_property(cfg.property)
    else:
        doc = json.loads(Path(cfg.network).read_text())
        if "property" not in doc:
            raise ConfigError("property: no --property given and the network file has no 'property' section")
        prop = property_from_dict(doc)
    region = (parse_region(cfg.region, net.input_dim) if cfg.region is not None
              else AxisBox.unit(net.input_dim))
    labeler = MarginLabeler(net, prop)
    return VerificationTask(labeler=labeler, region=region, name=Path(cfg.network).stem, **common)


# -- output helpers ----------------------------------------------------------

def _config_comment(doc: dict) -> str:
    return "# config: " + json.dumps(doc, sort_keys=True) + "\n"


def write_boxes_csv(boxes: Sequence[AxisBox], path: Path, config: dict, dim: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_config_comment(config))
        w = csv.writer(fh)
        w.writerow([f"lower{i}" for i in range(dim)] + [f"upper{i}" for i in range(dim)])
        for b in boxes:
            w.writerow([repr(float(v)) for v in b.lower] + [repr(float(v)) for v in b.upper])


def write_table(rows: Sequence[dict], columns: Sequence[str], path: Path, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_config_comment(config))
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _out_dir(path: str | None, default: str) -> Path:
    out = Path(path or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------

def cmd_verify(args: argparse.Namespace) -> int:
    from .verifier import run

    cfg = resolve_config(args)
    task = build_task(cfg)
    report = run(task, cfg.seed, cfg.mode)
    report.config = dict(cfg.resolved(), version=__version__)
    out = _out_dir(cfg.out, "rfprove-out")
    (out / "report.json").write_text(report.to_json() + "\n")
    write_boxes_csv(report.boxes, out / "boxes.csv", report.config, task.dim)
    print(report.summary())
    return EXIT_MET if report.coverage_met else EXIT_NOT_MET


def parse_int_range(text: str, name: str) -> list[int]:
    """``"1,5,10"``, ``"1-8"`` or a mix of both."""
    vals: list[int] = []
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ConfigError(f"{name}: empty range {part!r}")
                vals.extend(range(lo, hi + 1))
            else:
                vals.append(int(part))
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc
    if not vals:
        raise ConfigError(f"{name}: empty range")
    if min(vals) < 1:
        raise ConfigError(f"{name}: values must be >= 1")
    return vals


PLAN_COLUMNS = ["trees", "depth", "n_per_box", "max_boxes", "total_resamples"]


def plan_rows(delta: float, R: float, trees: Sequence[int], depths: Sequence[int],
              bonferroni: bool = False) -> list[dict]:
    params = GuaranteeParams(delta=delta, R=R)
    rows = []
    for T in trees:
        for D in depths:
            p = plan_budget(params, T, D, bonferroni=bonferroni)
            rows.append(dict(trees=T, depth=D, n_per_box=p.n_per_box, max_boxes=p.max_boxes,
                             total_resamples=p.total_resamples))
    return rows


def cmd_plan(args: argparse.Namespace) -> int:
    for name in ("delta", "R"):
        v = getattr(args, name)
        if not 0.0 < v < 1.0:
            raise ConfigError(f"{name}: must lie in (0, 1), got {v}")
    rows = plan_rows(args.delta, args.R, parse_int_range(args.trees, "trees"),
                     parse_int_range(args.depth, "depth"), args.bonferroni)
    w = csv.DictWriter(sys.stdout, fieldnames=PLAN_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        echo = dict(delta=args.delta, R=args.R, trees=args.trees, depth=args.depth,
                    bonferroni=args.bonferroni, version=__version__)
        write_table(rows, PLAN_COLUMNS, Path(args.out), echo)
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    from .oracle import MIXED, build_oracle

    cfg = resolve_config(args)
    task = build_task(cfg)
    orc = build_oracle(task, args.oracle_depth)
    lo, hi = orc.volume_bracket()
    scale = orc.region_volume
    print(f"positive volume in [{lo * scale:.10g}, {hi * scale:.10g}] "
          f"(fraction of region [{lo:.10g}, {hi:.10g}], {orc.count(MIXED)} mixed cells, depth {orc.depth})")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from . import bench

    seeds = range(args.seeds)
    out = _out_dir(args.out, "rfprove-bench")
    echo = dict(suite=args.suite, seeds=args.seeds, version=__version__)
    if args.suite == "scalability":
        dims = parse_int_range(args.dims, "dims")
        echo["dims"] = dims
        rows = bench.run_scalability_suite(dims, None, seeds)
        summary = bench.summarize_scalability(rows)
        write_table(rows, bench.RUN_COLUMNS, out / "scalability_runs.csv", echo)
        write_table(summary, bench.SUMMARY_COLUMNS, out / "scalability_summary.csv", echo)
        for r in summary:
            print(f"N={r['n']} coverage={r['coverage']:.4f} error={r['error']:.4f} "
                  f"n_boxes={r['n_boxes']:.1f} trees={r['n_trees_used']:.1f} time={r['wall_time_ms']:.0f}ms")
    else:
        names = [t for t in args.tasks.split(",") if t]
        echo["tasks"] = names
        for t in names:
            if t not in NAMED:
                raise ConfigError(f"tasks: unknown synthetic task {t!r}")
        tasks = [generate_synthetic(named_spec(t), 0) for t in names]
        rows = bench.run_ablation_suite(tasks, seeds)
        summary = bench.summarize_ablation(rows)
        write_table(rows, bench.ABLATION_COLUMNS, out / "ablation_runs.csv", echo)
        write_table(summary, ["task", "mode", "coverage", "error", "n_boxes", "n_trees_used", "wall_time_ms"],
                    out / "ablation_summary.csv", echo)
        for r in summary:
            print(f"{r['task']} {r['mode']}: coverage={r['coverage']:.4f} error={r['error']:.6f} "
                  f"n_boxes={r['n_boxes']:.1f} time={r['wall_time_ms']:.0f}ms")
    return 0


# -- parser ------------------------------------------------------------------

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicitly given flags override the config file
    p.add_argument("--config", help="JSON config file (or a previous report.json)")
    p.add_argument("--network", help="network JSON file")
    p.add_argument("--property", help="property JSON file (default: 'property' section of the network file)")
    p.add_argument("--task", help=f"named synthetic task instead of a network: {', '.join(NAMED)}")
    p.add_argument("--dim", type=int, help="input dimension for dimension-generic synthetic tasks")
    p.add_argument("--region", help="input box as lo:hi,lo:hi,... (default: unit cube)")
    p.add_argument("--delta", type=float, help="confidence parameter (default 0.001)")
    p.add_argument("--R", type=float, help="purity level (default 0.995)")
    p.add_argument("--coverage", type=float, help="coverage target c (default 0.75)")
    p.add_argument("--m", type=int, help="training samples (default 20000)")
    p.add_argument("--k", type=int, help="coverage test samples (default 10000)")
    p.add_argument("--trees", type=int, help="number of trees T (default 500)")
    p.add_argument("--depth", type=int, help="tree depth D (default 5)")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--mode", choices=["verify", "no_filter", "single_tree"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="filter worker threads (default: CPU count)")
    p.add_argument("--max-resamples", dest="max_resamples", type=int, help="resample budget cap")
    p.add_argument("--error-samples", dest="error_samples", type=int, help="error estimate samples (default k)")
    p.add_argument("--n-override", dest="n_override", type=int, help="fixed resamples per box")
    p.add_argument("--fixed-test-set", dest="fixed_test_set", action="store_true", default=None)
    p.add_argument("--bonferroni", action="store_true", default=None,
                   help="split delta across all candidate boxes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfprove", description="Forest-guided preimage under-approximation")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the verifier and write report.json + boxes.csv")
    _add_run_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plan", help="tabulate resample budgets over T and D")
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--R", type=float, default=0.995)
    p.add_argument("--trees", default="1,10,100,500,2000", help="list or range, e.g. 1-8 or 1,500")
    p.add_argument("--depth", default="5", help="list or range, e.g. 3-11")
    p.add_argument("--bonferroni", action="store_true")
    p.add_argument("--out", help="also write the table to this CSV file")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("oracle", help="bracket the preimage volume on a dyadic grid")
    _add_run_flags(p)
    p.add_argument("--oracle-depth", dest="oracle_depth", type=int, default=8,
                   help="grid resolution of the oracle (default 8)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="run the ablation or scalability suite")
    p.add_argument("--suite", choices=["ablation", "scalability"], required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--dims", default="2,5,7,10")
    p.add_argument("--tasks", default="noisy_box2d")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_bench)
    return ap


def _fix_oracle_depth(argv: list[str]) -> list[str]:
    # `oracle --depth 8` means grid depth, not tree depth
    if argv and argv[0] == "oracle":
        return ["oracle"] + ["--oracle-depth" if a == "--depth" else
                             a.replace("--depth=", "--oracle-depth=", 1) for a in argv[1:]]
    return argv


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_fix_oracle_depth(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NetworkFormatError, ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
