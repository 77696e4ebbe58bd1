"""Report rendering: CSV tables and the matplotlib figures beside them.

Every report path writes its delimited output (CSV / JSONL) and renders the
matching figure files into the same directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402

from .evaluation import EvalResult  # noqa: E402


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))
    return path


def format_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Plain-text aligned table for terminal summaries."""
    cells = [[str(h) for h in header]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def metrics_line(record: dict[str, Any]) -> str:
    """One JSONL metrics record; float formatting is repr-stable."""
    return json.dumps(record, sort_keys=False)


def plot_cmc(result: EvalResult, path: str | Path, title: str = "CMC") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ranks = np.arange(1, len(result.cmc) + 1)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ranks, result.cmc, marker="o")
    ax.set_xlabel("rank")
    ax.set_ylabel("matching rate")
    ax.set_ylim(0, 1.02)
    ax.set_xticks(ranks)
    ax.set_title(f"{title} (mAP {result.mean_ap:.3f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(
    xs: Sequence[Any],
    series: dict[str, Sequence[float]],
    xlabel: str,
    path: str | Path,
    logx: bool = False,
) -> Path:
    """Metric-vs-parameter curves for ablation sweeps."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    positions = np.arange(len(xs))
    numeric = all(isinstance(x, (int, float)) for x in xs)
    for name, values in series.items():
        if numeric:
            ax.plot(list(xs), list(values), marker="o", label=name)
        else:
            ax.plot(positions, list(values), marker="o", label=name)
    if numeric and logx:
        ax.set_xscale("log")
    if not numeric:
        ax.set_xticks(positions)
        ax.set_xticklabels([str(x) for x in xs], rotation=20, ha="right")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("metric")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(metrics_path: str | Path, path: str | Path) -> Path:
    """Loss curves from a JSONL metrics log."""
    metrics_path = Path(metrics_path)
    steps: list[int] = []
    curves: dict[str, list[float]] = {}
    for line in metrics_path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        steps.append(rec["step"])
        for key in ("loss", "encoder_loss", "decoder_loss", "push_loss"):
            if key in rec:
                curves.setdefault(key, []).append(rec[key])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for name, values in curves.items():
        ax.plot(steps[: len(values)], values, label=name, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_eval_report(result: EvalResult, out_dir: str | Path, name: str = "eval") -> dict[str, Path]:
    """CSV table + JSON summary + CMC figure for one evaluation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [(k + 1, float(result.cmc[k])) for k in range(len(result.cmc))]
    csv_path = write_csv(out_dir / f"{name}_cmc.csv", ["rank", "matching_rate"], rows)
    summary = {
        "mean_ap": result.mean_ap,
        "rank1": float(result.cmc[0]),
        "cmc": [float(v) for v in result.cmc],
        "num_valid_queries": result.num_valid_queries,
        "num_skipped_queries": result.num_skipped_queries,
    }
    json_path = out_dir / f"{name}_summary.json"
    json_path.write_text(json.dumps(summary, indent=2) + "\n")
    fig_path = plot_cmc(result, out_dir / f"{name}_cmc.png")
    text_path = out_dir / f"{name}_summary.txt"
    text_path.write_text(result.summary() + "\n")
    return {"csv": csv_path, "json": json_path, "figure": fig_path, "text": text_path}
