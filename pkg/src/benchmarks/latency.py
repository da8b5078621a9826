"""
Inference Latency Benchmark Module

This module measures forward-pass wall time of built model graphs.

Inputs are generated from a fixed seed before timing starts, a warmup phase
is discarded, and only the forward call sits between the two clock reads.
Per-window times are batch times divided by the batch size; every number in
the reports names its denominator.
"""
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConfigError, GazegestError
from src.evaluation.harness import fold_parallel_active
from src.evaluation.reports import csv_with_header
from src.models.builders import MODEL_NAMES, ModelSpec, build_model
from src.models.predict import predict_proba
from src.tensornet.graph import ModelGraph
from src.utils.hashing import canonical_json
from src.utils.timer import format_system_info, get_system_info

_logger = logging.getLogger(__name__)

MIN_ITERATIONS = 10
PRECISIONS = ("float64", "float32")
GESTURE_SHAPE = (32, 48, 5)
USERID_SHAPE = (32, 48, 4)


@dataclass
class LatencyReport:
    """Timing samples for one (model, W, D, C, batch, precision) configuration."""
    model: str
    window: int
    dims: int
    classes: int
    batch: int
    precision: str
    warmup: int
    samples_s: List[float]
    params: int
    system: Dict[str, str] = field(default_factory=dict)

    def _per_window_us(self, q: float) -> float:
        return float(np.percentile(self.samples_s, q)) * 1e6 / self.batch

    @property
    def p50_us(self) -> float:
        return self._per_window_us(50)

    @property
    def p90_us(self) -> float:
        return self._per_window_us(90)

    @property
    def p99_us(self) -> float:
        return self._per_window_us(99)

    @property
    def batch_p50_us(self) -> float:
        return float(np.percentile(self.samples_s, 50)) * 1e6

    @property
    def meets_sampling_floor(self) -> bool:
        """At least 100 timed samples after at least 20 warmup calls."""
        return len(self.samples_s) >= 100 and self.warmup >= 20

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update({"p50_us_per_window": self.p50_us, "p90_us_per_window": self.p90_us,
                     "p99_us_per_window": self.p99_us, "p50_us_per_batch": self.batch_p50_us})
        return data


def measure_latency(graph: ModelGraph, input_shape: Tuple[int, int], iterations: int = 200,
                    warmup: int = 20, batch: int = 1, precision: str = "float64",
                    seed: int = 0) -> LatencyReport:
    """
    Time the forward pass of a graph.

    Args:
        graph: Built model
        input_shape: (W, D) of one window
        iterations: Timed forward calls
        warmup: Untimed forward calls before timing
        batch: Windows per forward call
        precision: "float64", or "float32" to time a single-precision copy
        seed: Input generator seed

    Returns:
        LatencyReport

    Raises:
        ConfigError: iterations < 10, batch < 1, warmup < 0 or unknown precision
        GazegestError: called while fold-parallel evaluation is running
    """
    if iterations < MIN_ITERATIONS:
        raise ConfigError(f"latency needs at least {MIN_ITERATIONS} iterations, got {iterations}")
    if batch < 1 or warmup < 0:
        raise ConfigError(f"batch must be >= 1 and warmup >= 0, got batch={batch}, warmup={warmup}")
    if precision not in PRECISIONS:
        raise ConfigError(f"unknown precision {precision!r}; valid: {', '.join(PRECISIONS)}")
    if fold_parallel_active():
        raise GazegestError("timed sections cannot run while fold-parallel evaluation is active")

    model = graph.cast(np.float32) if precision == "float32" else graph
    W, D = input_shape
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal((warmup + iterations, batch, W, D)).astype(precision)

    for i in range(warmup):
        model.forward(inputs[i])

    samples = []
    for i in range(warmup, warmup + iterations):
        start = time.perf_counter()
        model.forward(inputs[i])
        samples.append(time.perf_counter() - start)

    report = LatencyReport(graph.name, W, D, graph.num_classes, batch, precision, warmup, samples,
                           graph.parameter_count, get_system_info())
    _logger.info("%s W=%d D=%d C=%d batch=%d %s: p50 %.1f us/window", graph.name, W, D,
                 graph.num_classes, batch, precision, report.p50_us)
    return report


def precision_agreement(graph: ModelGraph, input_shape: Tuple[int, int], n: int = 256, seed: int = 0) -> float:
    """Fraction of n seeded windows on which float32 and float64 agree on the argmax."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, *input_shape))
    double = np.argmax(predict_proba(graph, X), axis=1)
    single = np.argmax(predict_proba(graph.cast(np.float32), X.astype(np.float32)), axis=1)
    return float(np.mean(double == single))


@dataclass
class BenchRow:
    spec: ModelSpec
    report: LatencyReport
    macro_f1: Optional[float] = None


def bench_suite(specs: Sequence[ModelSpec], batches: Sequence[int] = (1,), iterations: int = 200,
                warmup: int = 20, precision: str = "float64", seed: int = 0,
                macro_f1: Optional[Dict[Tuple[str, int], float]] = None) -> List[BenchRow]:
    """
    Build each spec and time it at every batch size.

    Args:
        specs: Models with their (W, D, C) shapes
        batches: Batch sizes
        iterations: Timed calls per configuration
        warmup: Warmup calls per configuration
        precision: Timing precision
        seed: Input generator seed
        macro_f1: Optional (model name, classes) -> macro F1 for the table

    Returns:
        One BenchRow per (spec, batch), in input order
    """
    rows = []
    for spec in specs:
        graph = build_model(spec)
        for batch in batches:
            print(f"  {spec.display_name:<14} W={spec.window} D={spec.dims} C={spec.classes} batch={batch}...")
            report = measure_latency(graph, (spec.window, spec.dims), iterations, warmup, batch, precision, seed)
            rows.append(BenchRow(spec, report, (macro_f1 or {}).get((spec.name, spec.classes))))
    return rows


def default_specs(models: Sequence[str] = MODEL_NAMES) -> List[ModelSpec]:
    """Gesture (C=5) then user-ID (C=4) configurations for each model."""
    specs = []
    for shape in (GESTURE_SHAPE, USERID_SHAPE):
        for name in models:
            specs.append(ModelSpec(name).with_shape(*shape))
    return specs


def format_bench_table(rows: Sequence[BenchRow]) -> str:
    lines = [
        "=" * 96,
        "Inference latency (per window = per batch time / batch size; microseconds)",
        "=" * 96,
        f"{'Model':<14}{'W':>4}{'D':>5}{'C':>4}{'Batch':>7}{'Macro F1':>10}{'Params':>11}"
        f"{'p50/win':>11}{'p90/win':>11}{'p99/win':>11}{'p50/batch':>12}",
    ]
    for row in rows:
        r = row.report
        f1 = f"{row.macro_f1:.3f}" if row.macro_f1 is not None else "-"
        lines.append(f"{row.spec.display_name:<14}{r.window:>4}{r.dims:>5}{r.classes:>4}{r.batch:>7}{f1:>10}"
                     f"{r.params:>11,}{r.p50_us:>11.1f}{r.p90_us:>11.1f}{r.p99_us:>11.1f}{r.batch_p50_us:>12.1f}")
    if rows:
        r = rows[0].report
        lines.append("")
        lines.append(f"Precision: {r.precision} | warmup {r.warmup} | {len(r.samples_s)} timed calls per row | "
                     "monotonic clock, no CPU pinning")
        lines.append(format_system_info(r.system))
    return "\n".join(lines) + "\n"


def bench_csv(rows: Sequence[BenchRow], config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> str:
    """Latency rows under the same ``#`` config, seed and sha256 header as the evaluation CSVs."""
    lines = ["model,window,dims,classes,batch,precision,macro_f1,params,p50_us_per_window,"
             "p90_us_per_window,p99_us_per_window,p50_us_per_batch"]
    for row in rows:
        r = row.report
        f1 = f"{row.macro_f1:.6f}" if row.macro_f1 is not None else ""
        lines.append(f"{row.spec.name},{r.window},{r.dims},{r.classes},{r.batch},{r.precision},{f1},{r.params},"
                     f"{r.p50_us:.3f},{r.p90_us:.3f},{r.p99_us:.3f},{r.batch_p50_us:.3f}")
    return csv_with_header("inference latency", lines, config or {}, seed)


def save_bench(rows: Sequence[BenchRow], output_dir: str, config: Dict[str, Any], seed: Optional[int] = None,
               as_json: bool = False, plot: bool = True) -> Dict[str, str]:
    """Write the latency table as text and CSV, plus JSON and a bar chart when asked."""
    os.makedirs(output_dir, exist_ok=True)
    paths = {"text": os.path.join(output_dir, "latency_report.txt"),
             "csv": os.path.join(output_dir, "latency.csv")}
    with open(paths["text"], "w", encoding="utf-8") as f:
        f.write(format_bench_table(rows))
        f.write(f"Config: {canonical_json(config)}\n")
        f.write(f"Seed: {seed}\n")
    with open(paths["csv"], "w", encoding="utf-8", newline="\n") as f:
        f.write(bench_csv(rows, config, seed))
    if as_json:
        paths["json"] = os.path.join(output_dir, "latency.json")
        with open(paths["json"], "w", encoding="utf-8") as f:
            json.dump({"config": config, "seed": seed,
                       "rows": [{"spec": row.spec.to_dict(), "macro_f1": row.macro_f1,
                                 **row.report.to_dict()} for row in rows]}, f, indent=2)
    if plot and rows:
        from src.utils.plotting import plot_latency
        paths["plot"] = os.path.join(output_dir, "latency.png")
        labels = [f"{row.spec.display_name}\nC={row.report.classes} b={row.report.batch}" for row in rows]
        plot_latency(labels, [row.report.p50_us for row in rows], [row.report.p90_us for row in rows],
                     "Per-window inference latency", paths["plot"])
    return paths
