"""Figure rendering for benchmark reports.

The CSV/JSON files stay the canonical data interface; these helpers turn the
same reports into PNG figures written next to them. Headless-safe (Agg).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RunReport

_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _mean_series(reports: list[RunReport], column: str):
    """Across-seed mean of a per-step column, truncated to the shortest run."""
    n = min(r.steps_run for r in reports)
    rows = []
    for r in reports:
        vals = r.series[column][:n]
        rows.append([np.nan if v is None else v for v in vals])
    arr = np.asarray(rows, dtype=float)
    return np.arange(1, n + 1), np.nanmean(arr, axis=0)


def render_bench_curves(reports_by_optimizer: dict[str, list[RunReport]], out_path) -> Path:
    """Training-loss and test-metric curves, one line per optimizer."""
    out_path = Path(out_path)
    any_reports = next(iter(reports_by_optimizer.values()))
    has_metric = any(v is not None for v in any_reports[0].series["test_metric"])
    metric_name = any_reports[0].finals["metric_name"]

    ncols = 2 if has_metric else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.2 * ncols, 3.8), squeeze=False)
    ax_loss = axes[0][0]
    for i, (name, reports) in enumerate(sorted(reports_by_optimizer.items())):
        steps, loss = _mean_series(reports, "train_loss")
        ax_loss.plot(steps, loss, label=name, color=_COLORS[i % len(_COLORS)], lw=1.4)
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("train loss")
    ax_loss.legend(frameon=False, fontsize=8)

    if has_metric:
        ax_m = axes[0][1]
        for i, (name, reports) in enumerate(sorted(reports_by_optimizer.items())):
            steps, metric = _mean_series(reports, "test_metric")
            have = ~np.isnan(metric)
            ax_m.plot(steps[have], metric[have], marker="o", ms=2.5, lw=1.2,
                      label=name, color=_COLORS[i % len(_COLORS)])
        ax_m.set_xlabel("step")
        ax_m.set_ylabel(metric_name)
        ax_m.legend(frameon=False, fontsize=8)

    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_sweep(grid: list[float], means: list[float], stds: list[float],
                 param_name: str, metric_name: str, out_path) -> Path:
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.errorbar(grid, means, yerr=stds, marker="o", ms=4, lw=1.4, capsize=3)
    ax.set_xlabel(param_name)
    ax.set_ylabel(f"mean {metric_name}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_ablation(reports_by_mode: dict[str, list[RunReport]], out_path) -> Path:
    """Accuracy trajectories for the soft-vs-hard injection comparison."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for i, (name, reports) in enumerate(sorted(reports_by_mode.items())):
        steps, metric = _mean_series(reports, "test_metric")
        have = ~np.isnan(metric)
        ax.plot(steps[have], metric[have], lw=1.4, label=name,
                color=_COLORS[i % len(_COLORS)])
    ax.set_xlabel("step")
    ax.set_ylabel("train accuracy")
    ax.set_ylim(0.4, 1.02)
    ax.legend(frameon=False, fontsize=9, loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
