#!/usr/bin/env python3
"""
gazegest - Main Entry Point

Command-line interface for the gaze-gesture pipeline: synthesize sessions,
evaluate the three classifiers under LOSO / stratified / cross-stage
protocols, run the modality ablation and per-gesture user identification,
benchmark inference latency and gradient-check the models.

Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.
"""
import argparse
import importlib.util
import logging
import os
import sys
from typing import Any, Dict, List

import numpy as np

from src.data.domain import Modality
from src.data.ingest import load_trials
from src.data.preprocess import build_sequences, windows_for
from src.data.synthgen import generate_session, write_manifest
from src.errors import ConfigError, DataError, GazegestError
from src.models.builders import MODEL_NAMES, ModelSpec, build_model, parse_model_name
from src.utils.config import RunConfig, resolve_config, split_overrides
from src.utils.log import setup_logging
from src.utils.timer import get_system_info

_logger = logging.getLogger("gazegest")

FLAG_GROUPS = {
    "window": ("T", "window", "train_overlap", "test_overlap", "domain"),
    "train": ("epochs", "batch_size", "lr", "patience", "max_steps"),
    "plan": ("subjects", "repetitions", "alpha_min", "alpha_max"),
}
CONFIG_FLAGS = ("input", "output_dir", "seed", "model", "task", "modality", "folds", "jobs") + \
    sum(FLAG_GROUPS.values(), ())


def print_header(title: str):
    """Print a header with system information."""
    system_info = get_system_info()
    print("\n" + "=" * 80)
    print(f"GAZEGEST: {title}")
    print("=" * 80)
    print(f"CPU: {system_info['cpu']}")
    print(f"RAM: {system_info['ram']}")
    print(f"OS: {system_info['os']}")
    print("=" * 80 + "\n")


def run_tests():
    """Run all unit tests."""
    test_module_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tests", "run_all_tests.py")

    if not os.path.exists(test_module_path):
        print(f"Error: Test runner not found at {test_module_path}")
        return False

    spec = importlib.util.spec_from_file_location("run_all_tests", test_module_path)
    test_module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(test_module)

    return test_module.run_tests()


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def load_dataset(config: RunConfig):
    """Trials from --input, or from a synthetic session when no log is given."""
    if config.input:
        result = load_trials(config.input)
        print(f"Loaded {len(result.trials)} trials from {config.input} "
              f"({result.skipped_lines} skipped lines, {result.dropped_frames} dropped frames, "
              f"{len(result.errors)} segmentation errors, {len(result.rejected)} rejected trials)")
        trials = result.trials
    else:
        session = generate_session(config.plan.to_plan(config.seed), config.seed)
        print(f"Synthesized {len(session.trials)} trials ({config.plan.subjects} subjects, "
              f"seed {config.seed}, log sha256 {session.log_hash[:12]})")
        trials = session.trials
    if not trials:
        raise DataError("dataset contains no usable trials", where=config.input)
    return trials


def model_spec(config: RunConfig, classes: int = 5) -> ModelSpec:
    modality = config.modality_enum
    return ModelSpec(parse_model_name(config.model), config.window.effective_window, modality.dim, classes)


def _stem(*parts: str) -> str:
    return "_".join(p.replace("-", "").lower() for p in parts)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(config: RunConfig, args) -> int:
    from src.data.cache import save_window_cache

    plan = config.plan.to_plan(config.seed)
    session = generate_session(plan, config.seed)
    os.makedirs(config.output_dir, exist_ok=True)
    log_path = os.path.join(config.output_dir, f"{args.prefix}.log")
    manifest_path = os.path.join(config.output_dir, f"{args.prefix}.manifest.tsv")
    with open(log_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(session.text)
    write_manifest(session.manifest, manifest_path,
                   {"seed": config.seed, "config": config.to_dict(), "log_sha256": session.log_hash})

    print(f"Trials: {len(session.trials)} ({config.plan.subjects} subjects x 5 gestures x 4 stages x "
          f"{config.plan.repetitions} repetitions)")
    print(f"Log: {log_path} (sha256 {session.log_hash})")
    print(f"Manifest: {manifest_path}")

    if args.windows:
        modality = config.modality_enum
        sequences = build_sequences(session.trials, modality, config.window)
        windows = windows_for(sequences, config.window.effective_window, config.window.train_overlap)
        prefix = os.path.join(config.output_dir, f"{args.prefix}.{modality.value}")
        digest = save_window_cache(windows, prefix, config.window.effective_window,
                                   config.window.train_overlap, config.to_dict(), config.seed)
        print(f"Window cache: {prefix}.* ({len(windows)} windows, sha256 {digest})")
    return 0


def cmd_eval(config: RunConfig, args) -> int:
    from src.evaluation.harness import class_names_for, run_task
    from src.evaluation.reports import format_report, save_eval_report
    from src.evaluation.splits import cross_stage_split, loso_splits, stratified_kfold_by_trial

    trials = load_dataset(config)
    protocol = args.protocol or ("loso" if config.task == "gesture" else "stratified")
    if protocol == "loso":
        plan = loso_splits(trials, task=config.task)
    elif protocol == "stratified":
        plan = stratified_kfold_by_trial(trials, k=config.folds, seed=config.seed, task=config.task)
    else:
        plan = cross_stage_split(trials, task=config.task)

    spec = model_spec(config, len(class_names_for(config.task, trials)))
    report = run_task(trials, spec, plan, config.train, config.window, config.modality_enum,
                      jobs=config.jobs, permute_labels=args.permute_labels)
    report.config["run"] = config.to_dict()
    print(format_report(report))
    paths = save_eval_report(report, config.output_dir,
                             _stem(config.task, protocol, spec.name, config.modality), plot=not args.no_plot)
    print(f"Macro F1 ({report.model}, {config.task}, {protocol}): {report.macro_f1:.4f}")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def cmd_ablate(config: RunConfig, args) -> int:
    from src.evaluation.harness import run_modality_ablation
    from src.evaluation.reports import ablation_csv, format_ablation, save_table

    trials = load_dataset(config)
    spec = model_spec(config)
    print(f"Modality ablation for {spec.display_name} (LOSO gesture recognition)...")
    table = run_modality_ablation(trials, spec, config.train, config.window, jobs=config.jobs)
    text = format_ablation(table, spec.display_name)
    print(text)
    paths = save_table(text, ablation_csv(table, config.to_dict(), config.seed), config.output_dir,
                       _stem("ablation", spec.name))
    print(f"Saved {paths['text']} and {paths['csv']}")
    return 0


def cmd_cross_stage(config: RunConfig, args) -> int:
    from src.evaluation.harness import class_names_for, run_cross_stage
    from src.evaluation.reports import format_report, save_eval_report

    trials = load_dataset(config)
    spec = model_spec(config, len(class_names_for(config.task, trials)))
    report = run_cross_stage(trials, spec, config.train, config.window, config.modality_enum, task=config.task,
                             k=config.folds, seed=config.seed, jobs=config.jobs)
    report.config["run"] = config.to_dict()
    print(format_report(report))
    save_eval_report(report, config.output_dir, _stem("crossstage", config.task, spec.name, config.modality),
                     plot=not args.no_plot)
    print(f"Recall-stage macro F1: {report.macro_f1:.4f}")
    print(f"Same-stage baseline macro F1: {report.baseline.macro_f1:.4f}")
    return 0


def cmd_userid_by_gesture(config: RunConfig, args) -> int:
    from src.evaluation.harness import run_userid_by_gesture
    from src.evaluation.reports import format_userid_rows, save_table, userid_csv

    trials = load_dataset(config)
    subjects = len({t.participant_id for t in trials})
    spec = model_spec(config, subjects)
    rows = run_userid_by_gesture(trials, spec, config.train, config.window, config.modality_enum,
                                 k=config.folds, seed=config.seed, jobs=config.jobs)
    text = format_userid_rows(rows, spec.display_name)
    print(text)
    save_table(text, userid_csv(rows, config.to_dict(), config.seed), config.output_dir,
               _stem("userid_by_gesture", spec.name))
    return 0


def cmd_bench(config: RunConfig, args) -> int:
    from src.benchmarks.latency import (GESTURE_SHAPE, USERID_SHAPE, bench_suite, default_specs,
                                        format_bench_table, save_bench)
    from src.evaluation.reports import read_mean_macro_f1

    models = MODEL_NAMES if args.all or not args.bench_models else [parse_model_name(m) for m in args.bench_models]
    specs = default_specs(models)

    # Macro F1 comes from earlier eval runs saved in the same output directory
    macro_f1 = {}
    for model in models:
        for task, protocol, classes in (("gesture", "loso", GESTURE_SHAPE[2]),
                                        ("userid", "stratified", USERID_SHAPE[2])):
            path = os.path.join(config.output_dir, _stem(task, protocol, model, config.modality) + "_folds.csv")
            f1 = read_mean_macro_f1(path)
            if f1 is not None:
                macro_f1[(model, classes)] = f1

    print(f"Benchmarking {len(specs)} configurations (jobs forced to 1)...")
    rows = bench_suite(specs, batches=args.batch, iterations=args.iterations, warmup=args.warmup,
                       precision=args.precision, seed=config.seed, macro_f1=macro_f1)
    print(format_bench_table(rows))
    bench_config = {"models": list(models), "batches": list(args.batch), "iterations": args.iterations,
                    "warmup": args.warmup, "precision": args.precision, "modality": config.modality,
                    "macro_f1_sources": sorted(f"{m}/C={c}" for m, c in macro_f1)}
    paths = save_bench(rows, config.output_dir, bench_config, seed=config.seed,
                       as_json=args.json, plot=not args.no_plot)
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def cmd_gradcheck(config: RunConfig, args) -> int:
    from src.tensornet.gradcheck import gradient_check_report

    models = MODEL_NAMES if args.all or not args.check_models else [parse_model_name(m) for m in args.check_models]
    failed = []
    for name in models:
        spec = ModelSpec(name, seed=config.seed)
        graph = build_model(spec)
        rng = np.random.default_rng(config.seed)
        X = rng.standard_normal((2, spec.window, spec.dims))
        y = rng.integers(0, spec.classes, size=2)
        report = gradient_check_report(graph, (X, y), max_scalars=args.scalars, seed=config.seed)
        ok = report.passed(args.tolerance)
        print(f"{spec.display_name:<14} max relative error {report.max_relative_error:.3e} "
              f"({report.checked} scalars, {report.skipped_kinks} kink-crossing skipped, "
              f"worst: {report.worst_parameter}) {'PASS' if ok else 'FAIL'}")
        if not ok:
            failed.append(spec.display_name)
    if failed:
        print(f"Gradient check failed for: {', '.join(failed)}")
        return 1
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "cross-stage": cmd_cross_stage,
    "userid-by-gesture": cmd_userid_by_gesture,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--out", dest="output_dir", help="Output directory (default: $GAZEGEST_OUTPUT_DIR or results/)")
    common.add_argument("--seed", type=int, help="Session / split seed (default 7)")
    return common


def _data_parser() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="Session log to evaluate (default: synthesize one)")
    data.add_argument("--subjects", type=int, help="Synthetic subjects (default 8)")
    data.add_argument("--reps", dest="repetitions", type=int, help="Repetitions per gesture and stage (default 3)")
    data.add_argument("--alpha-min", type=float, help="Lowest synthetic head share")
    data.add_argument("--alpha-max", type=float, help="Highest synthetic head share")
    data.add_argument("--model", help=f"One of: {', '.join(MODEL_NAMES)}")
    data.add_argument("--task", help="gesture or userid")
    data.add_argument("--modality", help=", ".join(m.value for m in Modality))
    data.add_argument("--folds", type=int, help="k for stratified k-fold (default 4)")
    data.add_argument("--jobs", type=int, help="Fold-level worker processes")
    data.add_argument("--resample-length", dest="T", type=int, help="Resampled trial length (default 64)")
    data.add_argument("--window", type=int, help="Window length in frames (default 32)")
    data.add_argument("--train-overlap", type=float, help="Training window overlap (default 0.5)")
    data.add_argument("--test-overlap", type=float, help="Test window overlap (default 0.9)")
    data.add_argument("--window-domain", "--domain", dest="domain", choices=["resampled", "raw"],
                      help="Window in resampled frames (default) or raw 60 Hz frames")
    data.add_argument("--epochs", type=int)
    data.add_argument("--batch-size", type=int)
    data.add_argument("--lr", type=float)
    data.add_argument("--patience", type=int)
    data.add_argument("--max-steps", type=int, help="Cap on optimizer steps per fold")
    data.add_argument("--no-plot", action="store_true", help="Skip PNG figures")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="gazegest - gaze-gesture recognition and user identification toolkit",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    common, data = _common_parser(), _data_parser()

    simulate = sub.add_parser("simulate", parents=[common], help="Write a synthetic session log and manifest")
    simulate.add_argument("--subjects", type=int)
    simulate.add_argument("--reps", dest="repetitions", type=int)
    simulate.add_argument("--alpha-min", type=float)
    simulate.add_argument("--alpha-max", type=float)
    simulate.add_argument("--modality", help="Modality of the optional window cache")
    simulate.add_argument("--prefix", default="session", help="Output file prefix")
    simulate.add_argument("--windows", action="store_true", help="Also write a training-window cache")

    evaluate = sub.add_parser("eval", parents=[common, data], help="Run one task / protocol / model")
    evaluate.add_argument("--protocol", choices=["loso", "stratified", "cross_stage"],
                          help="Default: loso for gesture, stratified for userid")
    evaluate.add_argument("--permute-labels", action="store_true", help="Chance-level control")

    sub.add_parser("ablate", parents=[common, data], help="Modality ablation under LOSO")
    sub.add_parser("cross-stage", parents=[common, data], help="Train on guided stages, test on Recall")
    sub.add_parser("userid-by-gesture", parents=[common, data], help="User identification per gesture subset")

    bench = sub.add_parser("bench", parents=[common], help="Inference latency of the models")
    bench.add_argument("--all", action="store_true", help="All three models (default)")
    bench.add_argument("--model", dest="bench_models", action="append", help="Model to time (repeatable)")
    bench.add_argument("--batch", type=int, nargs="+", default=[1], help="Batch sizes (default 1)")
    bench.add_argument("--iterations", type=int, default=200)
    bench.add_argument("--warmup", type=int, default=20)
    bench.add_argument("--precision", choices=["float64", "float32"], default="float64")
    bench.add_argument("--json", action="store_true", help="Also write latency.json")
    bench.add_argument("--no-plot", action="store_true")

    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    gradcheck.add_argument("--all", action="store_true", help="All three models (default)")
    gradcheck.add_argument("--model", dest="check_models", action="append", help="Model to check (repeatable)")
    gradcheck.add_argument("--scalars", type=int, default=200)
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)

    sub.add_parser("test", help="Run unit tests")
    return parser


def config_from_args(args) -> RunConfig:
    values = {k: getattr(args, k) for k in CONFIG_FLAGS if hasattr(args, k)}
    flags: Dict[str, Any] = split_overrides(values, FLAG_GROUPS)
    if args.command == "bench":
        flags["jobs"] = 1
    return resolve_config(args.command, getattr(args, "config", None), flags)


def main(argv: List[str] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)

    if args.command == "test":
        print("Running unit tests...")
        return 0 if run_tests() else 1

    setup_logging(args.verbose)
    try:
        config = config_from_args(args)
        print_header(args.command.upper())
        code = COMMANDS[args.command](config, args)
    except ConfigError as e:
        print(f"\nConfiguration error: {e}", file=sys.stderr)
        return 2
    except GazegestError as e:
        print(f"\nError: {e}", file=sys.stderr)
        return 1
    if code == 0:
        print(f"\nResults saved in '{config.output_dir}'.")
    return code


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted by user.")
        sys.exit(1)
    except Exception as e:
        print(f"\nError: {e}")
        sys.exit(1)
