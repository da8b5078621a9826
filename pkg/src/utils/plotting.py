"""
Plotting Utilities Module

This module provides the figures written next to evaluation and benchmark
reports: confusion-matrix heatmaps and latency bar charts.
"""
from datetime import datetime
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .timer import get_system_info


def _add_footer() -> None:
    # Add hardware info
    system_info = get_system_info()
    plt.figtext(0.02, 0.01,
                f"Hardware: {system_info['cpu']} | RAM: {system_info['ram']} | OS: {system_info['os']}",
                fontsize=8)
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    plt.figtext(0.75, 0.01, f"Generated: {timestamp}", fontsize=8)


def plot_confusion_matrix(confusion: np.ndarray, class_names: Sequence[str], title: str,
                          output_file: str, normalize: bool = True) -> None:
    """
    Plot a confusion matrix heatmap.

    Args:
        confusion: Integer counts [C, C], rows = true class
        class_names: Axis labels
        title: Plot title
        output_file: Output file path
        normalize: Color by row-normalized recall instead of raw counts
    """
    cm = np.asarray(confusion, dtype=np.float64)
    shade = cm
    if normalize:
        rows = cm.sum(axis=1, keepdims=True)
        shade = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)

    size = max(6, 1.1 * len(class_names) + 2)
    plt.figure(figsize=(size + 1, size))
    plt.imshow(shade, cmap="Blues", vmin=0.0, vmax=1.0 if normalize else None)
    plt.colorbar(fraction=0.046, pad=0.04, label="Row fraction" if normalize else "Count")

    threshold = 0.5 * (shade.max() if shade.size else 0)
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            plt.text(j, i, f"{int(cm[i, j])}", ha="center", va="center", fontsize=9,
                     color="white" if shade[i, j] > threshold else "black")

    ticks = np.arange(len(class_names))
    plt.xticks(ticks, class_names, rotation=45, ha="right")
    plt.yticks(ticks, class_names)
    plt.xlabel("Predicted", fontsize=12)
    plt.ylabel("True", fontsize=12)
    plt.title(title, fontsize=12, fontweight="bold")
    plt.tight_layout(rect=(0, 0.04, 1, 1))
    _add_footer()
    plt.savefig(output_file, dpi=300, bbox_inches="tight")
    plt.close()


def plot_latency(names: List[str], p50_us: List[float], p90_us: List[float], title: str,
                 output_file: str) -> None:
    """
    Bar chart of per-window latency, p50 bars with p90 whiskers.

    Args:
        names: One label per bar
        p50_us: Median per-window latency in microseconds
        p90_us: 90th percentile per-window latency in microseconds
        title: Plot title
        output_file: Output file path
    """
    p50 = np.asarray(p50_us, dtype=np.float64) / 1000.0
    p90 = np.asarray(p90_us, dtype=np.float64) / 1000.0
    x = np.arange(len(names))

    plt.figure(figsize=(max(8, 1.6 * len(names) + 3), 7))
    bars = plt.bar(x, p50, color="steelblue", alpha=0.85, label="p50")
    plt.errorbar(x, p50, yerr=[np.zeros_like(p50), p90 - p50], fmt="none", ecolor="black",
                 capsize=6, label="p90")
    for bar, value in zip(bars, p50):
        plt.annotate(f"{value:.3f} ms", (bar.get_x() + bar.get_width() / 2, value),
                     textcoords="offset points", xytext=(0, 6), ha="center", fontsize=9)

    plt.xticks(x, names, rotation=15)
    plt.ylabel("Per-window inference time (ms)", fontsize=12)
    plt.title(title, fontsize=14, fontweight="bold")
    plt.grid(True, axis="y", alpha=0.3)
    plt.legend(fontsize=10, loc="best", framealpha=0.7)
    plt.tight_layout(rect=(0, 0.04, 1, 1))
    _add_footer()
    plt.savefig(output_file, dpi=300, bbox_inches="tight")
    plt.close()
