"""Render report figures next to the delimited outputs of a run."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def _read_metrics(path: Path) -> dict[str, list]:
    cols: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            for key, raw in row.items():
                cols.setdefault(key, []).append(float(raw) if raw else None)
    return cols


def render_accuracy_curve(out_dir: str | Path) -> Path:
    """Accuracy-per-round lines from metrics.csv -> accuracy_curve.png."""
    out_dir = Path(out_dir)
    cols = _read_metrics(out_dir / "metrics.csv")
    rounds = [int(r) for r in cols.get("round", [])]
    fig, ax = plt.subplots(figsize=(6, 4))
    series = [
        ("global_acc", "global model"),
        ("ensemble_acc", "model ensemble"),
        ("teacher_acc", "teacher pseudo-labels"),
        ("mean_client_acc", "mean client"),
    ]
    for key, label in series:
        values = cols.get(key, [])
        points = [(r, v) for r, v in zip(rounds, values) if v is not None]
        if points:
            ax.plot([p[0] for p in points], [p[1] for p in points], marker="o",
                    markersize=3, label=label)
    ax.set_xlabel("round")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = out_dir / "accuracy_curve.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_confidence_hist(out_dir: str | Path) -> Path | None:
    """Grouped correct/incorrect bars per summary tag -> confidence_hist.png."""
    out_dir = Path(out_dir)
    src = out_dir / "confidence_hist.csv"
    if not src.exists():
        return None
    blocks: dict[str, list[tuple[float, float, float, float]]] = {}
    with open(src, newline="") as fh:
        for row in csv.DictReader(fh):
            blocks.setdefault(row["model_tag"], []).append(
                (float(row["bin_lo"]), float(row["bin_hi"]),
                 float(row["correct"]), float(row["incorrect"]))
            )
    tags = [t for t in ("global", "client_mean", "sample_mean") if t in blocks]
    if not tags:
        tags = list(blocks)[:3]
    fig, axes = plt.subplots(1, len(tags), figsize=(4 * len(tags), 3.2), squeeze=False)
    for ax, tag in zip(axes[0], tags):
        rows = blocks[tag]
        centers = [(lo + hi) / 2 for lo, hi, _, _ in rows]
        width = 0.4 * (rows[0][1] - rows[0][0])
        ax.bar([c - width / 2 for c in centers], [r[2] for r in rows], width=width,
               label="correct", color="tab:blue")
        ax.bar([c + width / 2 for c in centers], [r[3] for r in rows], width=width,
               label="incorrect", color="tab:red")
        ax.set_title(tag, fontsize=9)
        ax.set_xlabel("confidence")
        ax.set_ylabel("examples")
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "confidence_hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_one_round_bars(out_dir: str | Path) -> Path | None:
    """Bar chart of the one-round comparison -> one_round.png."""
    out_dir = Path(out_dir)
    src = out_dir / "one_round.csv"
    if not src.exists():
        return None
    labels, values = [], []
    with open(src, newline="") as fh:
        for row in csv.DictReader(fh):
            suffix = "" if row["distill"] == "none" else f" + {row['distill']}"
            labels.append(row["method"].replace("_", " ") + suffix)
            values.append(float(row["accuracy"]))
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.bar(range(len(values)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=25, ha="right", fontsize=8)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = out_dir / "one_round.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_run_report(out_dir: str | Path) -> list[Path]:
    """All figures applicable to a finished run directory."""
    out_dir = Path(out_dir)
    figures = []
    if (out_dir / "metrics.csv").exists():
        figures.append(render_accuracy_curve(out_dir))
    hist = render_confidence_hist(out_dir)
    if hist is not None:
        figures.append(hist)
    bars = render_one_round_bars(out_dir)
    if bars is not None:
        figures.append(bars)
    return figures
