"""
Report Writers Module

Serializes evaluation results:

- aligned-column text (tables laid out like the published result tables);
- CSV, one row per fold plus an aggregate row;
- long-format confusion CSV (fold, true, predicted, count), plot-ready;
- confusion-matrix heatmap PNG.

Every CSV starts with ``#`` header lines carrying the resolved config, the
seed and the SHA-256 of the rows that follow. Data CSVs hold no wall times,
so re-running with the same inputs reproduces them byte for byte; timings
live in the text report only.
"""
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.evaluation.harness import AblationTable, EvalReport, UserIdRow
from src.utils.hashing import canonical_json, sha256_text
from src.utils.timer import format_system_info, format_time, get_system_info

_logger = logging.getLogger(__name__)

RULE = "=" * 72


def csv_with_header(title: str, rows: List[str], config: Dict[str, Any], seed: Optional[int]) -> str:
    body = "".join(row + "\n" for row in rows)
    header = [
        f"# {title}",
        f"# config: {canonical_json(config)}",
        f"# seed: {seed}",
        f"# sha256: {sha256_text(body)}",
    ]
    return "\n".join(header) + "\n" + body


def read_csv_body(path: str) -> str:
    """Rows of a report CSV without its ``#`` header lines."""
    with open(path, "r", encoding="utf-8") as f:
        return "".join(line for line in f if not line.startswith("#"))


def read_mean_macro_f1(path: str) -> Optional[float]:
    """Macro F1 of the mean row of a saved fold CSV, or None when there is no such file."""
    if not os.path.exists(path):
        return None
    lines = read_csv_body(path).splitlines()
    column = lines[0].split(",").index("macro_f1")
    for line in lines[1:]:
        cells = line.split(",")
        if cells[0] == "mean":
            return float(cells[column])
    _logger.warning("%s has no mean row", path)
    return None


def _write(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    _logger.info("wrote %s", path)
    return path


# ---------------------------------------------------------------------------
# Single-task reports
# ---------------------------------------------------------------------------

def fold_csv(report: EvalReport) -> str:
    """Per-fold metrics and window counts plus a mean row (and the same-stage mean when present)."""
    rows = ["fold,test_subject,accuracy,macro_f1,weighted_f1,trial_accuracy,trial_macro_f1,"
            "train_windows,test_windows,test_trials"]
    for f in report.folds:
        m, t = f.metrics, f.trial_metrics
        rows.append(f"{f.index},{f.test_subject or ''},{m.accuracy:.6f},{m.macro_f1:.6f},{m.weighted_f1:.6f},"
                    f"{t.accuracy:.6f},{t.macro_f1:.6f},{f.train_windows},{f.test_windows},{f.test_trials}")
    rows.append(f"mean,,{report.accuracy:.6f},{report.macro_f1:.6f},{report.weighted_f1:.6f},"
                f"{report.trial_accuracy:.6f},{report.trial_macro_f1:.6f},"
                f"{sum(f.train_windows for f in report.folds)},{sum(f.test_windows for f in report.folds)},"
                f"{sum(f.test_trials for f in report.folds)}")
    if report.baseline is not None:
        b = report.baseline
        rows.append(f"same_stage_mean,,{b.accuracy:.6f},{b.macro_f1:.6f},{b.weighted_f1:.6f},"
                    f"{b.trial_accuracy:.6f},{b.trial_macro_f1:.6f},"
                    f"{sum(f.train_windows for f in b.folds)},{sum(f.test_windows for f in b.folds)},"
                    f"{sum(f.test_trials for f in b.folds)}")
    return csv_with_header(f"{report.task} / {report.protocol} / {report.model} per-fold metrics",
                            rows, report.config, report.seed)


def confusion_csv(report: EvalReport) -> str:
    """Long-format confusion counts; fold 'all' is the pooled matrix."""
    rows = ["fold,true,predicted,count"]
    matrices = [(str(f.index), f.confusion) for f in report.folds] + [("all", report.pooled_confusion)]
    for label, cm in matrices:
        for i, true_name in enumerate(report.class_names):
            for j, pred_name in enumerate(report.class_names):
                rows.append(f"{label},{true_name},{pred_name},{int(cm[i, j])}")
    return csv_with_header(f"{report.task} / {report.protocol} / {report.model} confusion counts",
                            rows, report.config, report.seed)


def _confusion_block(cm: np.ndarray, names: Sequence[str]) -> List[str]:
    width = max(8, max(len(n) for n in names) + 2)
    lines = [" " * width + "".join(f"{n:>{width}}" for n in names)]
    for name, row in zip(names, cm):
        lines.append(f"{name:<{width}}" + "".join(f"{int(v):>{width}d}" for v in row))
    return lines


def format_report(report: EvalReport, include_timing: bool = True) -> str:
    """Aligned text: one row per fold, the mean row, then the pooled confusion matrix."""
    lines = [
        RULE,
        f"{report.model} | task: {report.task} | protocol: {report.protocol} | "
        f"modality: {report.modality.display_name} ({report.modality.dim}D)",
        RULE,
        f"{'Fold':<8}{'Subject':<10}{'Accuracy':>10}{'Macro F1':>10}{'Weighted F1':>13}"
        f"{'Trial F1':>10}{'Windows':>10}",
    ]
    for f in report.folds:
        m = f.metrics
        lines.append(f"{f.index:<8}{f.test_subject or '-':<10}{m.accuracy:>10.4f}{m.macro_f1:>10.4f}"
                     f"{m.weighted_f1:>13.4f}{f.trial_metrics.macro_f1:>10.4f}{f.test_windows:>10d}")
    lines.append("-" * 71)
    lines.append(f"{'Mean':<18}{report.accuracy:>10.4f}{report.macro_f1:>10.4f}{report.weighted_f1:>13.4f}"
                 f"{report.trial_macro_f1:>10.4f}{sum(f.test_windows for f in report.folds):>10d}")
    lines.append("")
    lines.append("Pooled confusion matrix (rows = true, columns = predicted):")
    lines.extend(_confusion_block(report.pooled_confusion, report.class_names))
    if report.baseline is not None:
        b = report.baseline
        lines.append("")
        lines.append(f"Same-stage baseline ({len(b.folds)}-fold by trial, guided stages only): "
                     f"macro F1 {b.macro_f1:.4f}, accuracy {b.accuracy:.4f}")
        lines.append(f"Macro F1 change against the baseline: {report.macro_f1 - b.macro_f1:+.4f}")
    if report.audit is not None:
        lines.append("")
        lines.append(f"Leakage audit: {report.audit.summary()}")
    if include_timing:
        n_windows = max(1, sum(f.test_windows for f in report.folds))
        lines.append("")
        lines.append(f"Training wall time (all folds): {format_time(report.train_seconds)}")
        lines.append(f"Inference wall time (all folds): {format_time(report.infer_seconds)}, "
                     f"{format_time(report.infer_seconds / n_windows)} per test window (batched)")
        lines.append(format_system_info(get_system_info()))
    lines.append(f"Seed: {report.seed}")
    lines.append(f"Config: {canonical_json(report.config)}")
    return "\n".join(lines) + "\n"


def save_eval_report(report: EvalReport, output_dir: str, stem: str,
                     plot: bool = True) -> Dict[str, str]:
    """
    Write text, fold CSV, confusion CSV and (optionally) the heatmap.

    Returns:
        Mapping of artifact kind to path
    """
    paths = {
        "text": _write(os.path.join(output_dir, f"{stem}_report.txt"), format_report(report)),
        "folds": _write(os.path.join(output_dir, f"{stem}_folds.csv"), fold_csv(report)),
        "confusion": _write(os.path.join(output_dir, f"{stem}_confusion.csv"), confusion_csv(report)),
    }
    if plot:
        from src.utils.plotting import plot_confusion_matrix
        png = os.path.join(output_dir, f"{stem}_confusion.png")
        plot_confusion_matrix(report.pooled_confusion, report.class_names,
                              f"{report.model} {report.task} ({report.protocol}, "
                              f"{report.modality.display_name}) macro F1 {report.macro_f1:.3f}", png)
        paths["plot"] = png
    return paths


# ---------------------------------------------------------------------------
# Experiment-matrix tables
# ---------------------------------------------------------------------------

def format_ablation(table: AblationTable, model: str) -> str:
    """Modality rows, one column per LOSO subject, averages on both axes."""
    width = max(9, max(len(s) for s in table.subjects) + 2)
    lines = [RULE, f"Gesture recognition modality ablation ({model}, LOSO macro F1)", RULE,
             f"{'Modality':<12}" + "".join(f"{s:>{width}}" for s in table.subjects) + f"{'Average':>{width}}"]
    for modality, scores in table.rows:
        lines.append(f"{modality.display_name:<12}" + "".join(f"{v:>{width}.3f}" for v in scores)
                     + f"{np.mean(scores):>{width}.3f}")
    lines.append(f"{'Average':<12}" + "".join(f"{v:>{width}.3f}" for v in table.column_averages()))
    return "\n".join(lines) + "\n"


def ablation_csv(table: AblationTable, config: Dict[str, Any], seed: Optional[int]) -> str:
    rows = ["modality," + ",".join(table.subjects) + ",average"]
    for modality, scores in table.rows:
        rows.append(modality.value + "," + ",".join(f"{v:.6f}" for v in scores) + f",{np.mean(scores):.6f}")
    rows.append("average," + ",".join(f"{v:.6f}" for v in table.column_averages()))
    return csv_with_header("modality ablation macro F1", rows, config, seed)


def format_userid_rows(rows: Sequence[UserIdRow], model: str) -> str:
    lines = [RULE, f"User identification per gesture ({model}, stratified k-fold by trial)", RULE,
             f"{'Subset':<22}{'Trials':>8}{'Accuracy':>10}{'Weighted F1':>13}{'Macro F1':>10}"]
    for row in rows:
        lines.append(f"{row.label:<22}{row.trials:>8d}{row.accuracy:>10.3f}{row.weighted_f1:>13.3f}"
                     f"{row.macro_f1:>10.3f}")
    return "\n".join(lines) + "\n"


def userid_csv(rows: Sequence[UserIdRow], config: Dict[str, Any], seed: Optional[int]) -> str:
    lines = ["subset,trials,accuracy,weighted_f1,macro_f1"]
    for row in rows:
        lines.append(f"{row.label},{row.trials},{row.accuracy:.6f},{row.weighted_f1:.6f},{row.macro_f1:.6f}")
    return csv_with_header("user identification per gesture", lines, config, seed)


def save_table(text: str, csv_text: str, output_dir: str, stem: str) -> Dict[str, str]:
    return {
        "text": _write(os.path.join(output_dir, f"{stem}.txt"), text),
        "csv": _write(os.path.join(output_dir, f"{stem}.csv"), csv_text),
    }
