"""Command-line pipeline: generate, extract, label, train, tune, compare, report.

Every artifact gets a ``<name>.meta.json`` sidecar holding its own sha256
and the hashes of the inputs it was built from. Commands verify their
inputs against those sidecars and abort on any mismatch, so a stale
downstream file can never be mixed with a regenerated upstream one.

Errors print one line, ``churnvec: error: <Type>: <message>``, to stderr
and exit nonzero (2 for usage errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

from . import eval as ev
from .config import ExperimentConfig, load_config
from .eventlog import build_timelines, read_events, write_events
from .features import assemble_feature_rows, compute_daily_records, format_feature_csv, parse_feature_csv
from .hpo import format_trials_csv, params_json
from .labels import (
    Split,
    Target,
    format_labeled_csv,
    label_dataset,
    matched_vector_threshold,
    parse_labeled_csv,
    relabel_vector,
    split_by_user,
)
from .models import Family, Task, save_model
from .synthgen import format_ground_truth, generate_cohort


class UsageError(Exception):
    pass


class FingerprintMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------- artifacts

def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_text(path, text: str) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return sha256_bytes(text.encode("utf-8"))


def write_meta(path, inputs: dict) -> None:
    """Sidecar for an artifact already on disk; ``inputs`` maps names to sha256."""
    meta = {"artifact": Path(path).name, "sha256": sha256_file(path), "inputs": dict(sorted(inputs.items()))}
    write_text(meta_path(path), json.dumps(meta, sort_keys=True, indent=1) + "\n")


def check_inputs(*paths) -> dict:
    """Verify each input against its sidecar and against the other inputs.

    Returns ``{name: sha256}`` for embedding in the downstream sidecar.
    """
    current, recorded = {}, {}
    for p in map(Path, paths):
        if not p.exists():
            raise FileNotFoundError(f"missing input {p}")
        mp = meta_path(p)
        if not mp.exists():
            raise FingerprintMismatch(f"{p} has no {mp.name}; rebuild it with churnvec")
        meta = json.loads(mp.read_text(encoding="utf-8"))
        digest = sha256_file(p)
        if meta.get("sha256") != digest:
            raise FingerprintMismatch(f"{p} does not match the hash in {mp.name}")
        current[p.name] = digest
        recorded[p.name] = meta.get("inputs", {})
    for name, ups in recorded.items():
        for up, digest in ups.items():
            if up in current and current[up] != digest:
                raise FingerprintMismatch(f"{name} was built from a different {up}; rerun the upstream commands")
    return current


# ---------------------------------------------------------------- commands

def _config_hash(section: dict) -> str:
    return sha256_bytes(json.dumps(section, sort_keys=True).encode())


def cmd_generate(cfg: ExperimentConfig, out: Optional[str]) -> list:
    cohort = cfg.cohort_config()
    events, truth = generate_cohort(cohort)
    ev_path, gt_path = cfg.path("events", out), cfg.path("ground_truth", out)
    ev_path.parent.mkdir(parents=True, exist_ok=True)
    write_events(ev_path, events)
    write_text(gt_path, format_ground_truth(truth))
    inputs = {"cohort_config": _config_hash(cohort.to_dict())}
    write_meta(ev_path, inputs)
    write_meta(gt_path, inputs)
    return [ev_path, gt_path]


def _dataset_length(cfg: ExperimentConfig) -> int:
    return cfg.cohort_config().dataset_length_days


def cmd_extract(cfg: ExperimentConfig, out: Optional[str]) -> list:
    ev_path = cfg.path("events", out)
    inputs = check_inputs(ev_path)
    L = _dataset_length(cfg)
    tls = build_timelines(read_events(ev_path, L))
    rows = assemble_feature_rows(compute_daily_records(tls, L, cfg.features.rate_eps))
    path = cfg.path("features", out)
    write_text(path, format_feature_csv(rows))
    write_meta(path, {**inputs, "features_config": _config_hash(cfg.to_dict()["features"])})
    return [path]


def cmd_label(cfg: ExperimentConfig, out: Optional[str]) -> list:
    ev_path, ft_path = cfg.path("events", out), cfg.path("features", out)
    inputs = check_inputs(ev_path, ft_path)
    L = _dataset_length(cfg)
    lc = cfg.labels
    tls = build_timelines(read_events(ev_path, L))
    rows = parse_feature_csv(ft_path.read_text(encoding="utf-8"))
    tau = lc.tau if not isinstance(lc.tau, str) else 0.25
    examples = label_dataset(tls, rows, lc.warmup_end, L, lc.horizon, tau, lc.quiet_gap)
    examples = split_by_user(examples, lc.split_ratios, cfg.seed)
    if lc.tau == "matched":
        examples = relabel_vector(examples, matched_vector_threshold(examples, Split.TRAIN))
    path = cfg.path("labeled", out)
    write_text(path, format_labeled_csv(examples))
    write_meta(path, {**inputs, "labels_config": _config_hash(cfg.to_dict()["labels"])})
    return [path]


def load_dataset(cfg: ExperimentConfig, out: Optional[str]):
    lb_path, ft_path = cfg.path("labeled", out), cfg.path("features", out)
    inputs = check_inputs(lb_path, ft_path)
    examples = parse_labeled_csv(lb_path.read_text(encoding="utf-8"))
    rows = parse_feature_csv(ft_path.read_text(encoding="utf-8"))
    return ev.prepare_dataset(examples, rows, cfg.features.window, cfg.labels.tau), inputs


def _cell_name(family: Family, target: Target, task: Task) -> str:
    return f"{family.value}_{target.value}_{task.value}"


def _cell_setup(cfg, out, family, target, task):
    data, inputs = load_dataset(cfg, out)
    seed = cfg.comparison.seeds[0]
    with data.in_phase("tune"):
        rows = ev.cell_rows(data, seed, ev.grid_index(family, target, task), cfg.comparison)
    return data, inputs, rows


def cmd_train(cfg: ExperimentConfig, out: Optional[str], family: Family, target: Target, task: Task,
              params_path: Optional[str] = None) -> list:
    """Fit the default (or ``--params``) configuration on the training rows and score it on test."""
    data, inputs, rows = _cell_setup(cfg, out, family, target, task)
    params = dict(cfg.comparison.hyperparameters.get(family.value, {}))
    if params_path:
        inputs.update(check_inputs(params_path))
        params.update(json.loads(Path(params_path).read_text(encoding="utf-8"))["best_params"])
    model = ev.refit_cell(data, family, target, task, rows, params)
    metrics = ev.score_on_test(data, model, family, target, task)
    path = cfg.out_dir(out) / f"model_{_cell_name(family, target, task)}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    write_meta(path, inputs)
    line = {"family": family.value, "target": target.value, "task": task.value,
            **{k: v for k, v in vars(metrics).items() if v is not None}}
    print(json.dumps(line, sort_keys=True))
    return [path]


def cmd_tune(cfg: ExperimentConfig, out: Optional[str], family: Family, target: Target, task: Task) -> list:
    data, inputs, rows = _cell_setup(cfg, out, family, target, task)
    result = ev.tune_cell(data, family, target, task, rows, cfg.comparison)
    if result.best_params is None:
        raise RuntimeError("every tuning trial failed")
    name = _cell_name(family, target, task)
    trials = cfg.out_dir(out) / f"trials_{name}.csv"
    best = cfg.out_dir(out) / f"best_{name}.json"
    write_text(trials, format_trials_csv(result.trials))
    write_text(best, json.dumps({"family": family.value, "target": target.value, "task": task.value,
                                 "best_params": result.best_params, "objective": result.best_objective},
                                sort_keys=True, indent=1) + "\n")
    write_meta(trials, inputs)
    write_meta(best, inputs)
    print(params_json(result.best_params))
    return [trials, best]


def cmd_compare(cfg: ExperimentConfig, out: Optional[str], quiet: bool = False) -> list:
    data, inputs = load_dataset(cfg, out)
    log = None if quiet else (lambda s: print(s, file=sys.stderr))
    report = ev.run_comparison(data, cfg.comparison, log=log)
    written = ev.emit_report(report, cfg.out_dir(out))
    for p in written:
        write_meta(p, inputs)
    return written


def cmd_report(report_path, out: Optional[str]) -> list:
    report_path = Path(report_path)
    inputs = check_inputs(report_path)
    report = ev.ComparisonReport.loads(report_path.read_text(encoding="utf-8"))
    written = ev.emit_report(report, Path(out) if out else report_path.parent, formats=("csv", "svg"))
    for p in written:
        write_meta(p, inputs)
    return written


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _target(name: str) -> Target:
    try:
        return Target(name)
    except ValueError:
        raise ValueError(f"unknown target {name!r}; valid: day, vector") from None


def _task(name: str) -> Task:
    try:
        return Task.parse(name)
    except ValueError:
        raise ValueError(f"unknown task {name!r}; valid: reg, cls") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the config's seed")
    common.add_argument("--out", help="output directory (overrides config and $CHURNVEC_OUT_DIR)")
    cell = _Parser(add_help=False)
    cell.add_argument("--family", required=True)
    cell.add_argument("--target", required=True, help="day or vector")
    cell.add_argument("--task", required=True, help="reg or cls")

    parser = _Parser(prog="churnvec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="synthetic cohort -> events + ground truth")
    sub.add_parser("extract", parents=[common], help="events -> feature CSV")
    sub.add_parser("label", parents=[common], help="events + features -> labeled CSV")
    train = sub.add_parser("train", parents=[common, cell], help="fit one cell and score it on test")
    train.add_argument("--params", help="best_*.json from tune to use instead of defaults")
    sub.add_parser("tune", parents=[common, cell], help="hyperparameter search for one cell")
    compare = sub.add_parser("compare", parents=[common], help="full family x target x task grid")
    compare.add_argument("--quiet", action="store_true")
    report = sub.add_parser("report", parents=[common], help="report.json -> CSV + SVG")
    report.add_argument("--report", help="path to report.json (default: <out>/report.json)")
    return parser


def run(argv=None) -> list:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    out = args.out
    if args.command == "generate":
        return cmd_generate(cfg, out)
    if args.command == "extract":
        return cmd_extract(cfg, out)
    if args.command == "label":
        return cmd_label(cfg, out)
    if args.command == "compare":
        return cmd_compare(cfg, out, args.quiet)
    if args.command == "report":
        return cmd_report(args.report or cfg.out_dir(out) / "report.json", out)
    family, target, task = Family.parse(args.family), _target(args.target), _task(args.task)
    if args.command == "train":
        return cmd_train(cfg, out, family, target, task, args.params)
    return cmd_tune(cfg, out, family, target, task)


def main(argv=None) -> int:
    try:
        run(argv)
    except UsageError as exc:
        print(f"churnvec: error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        msg = " ".join(str(exc).split())
        print(f"churnvec: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
