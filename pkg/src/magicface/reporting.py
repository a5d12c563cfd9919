"""Report artifacts: delimited tables plus rendered matplotlib figures.

Every evaluation or training run leaves both machine-readable CSV/JSON and a
figure rendered to a file, so results can be inspected without re-running
anything.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .imaging import Video, export_png, frame_strip
from .metrics import ConsistencyReport


def write_loss_csv(losses, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, f"{loss:.8f}"])


def plot_loss_curve(losses, path, title="training loss") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(range(len(losses)), losses, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report_json(report: ConsistencyReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")


ABLATION_COLUMNS = ("optical_flow", "lowpass", "tl_id", "tg_id")


def write_ablation_csv(rows, path) -> None:
    """rows: list of dicts with the ABLATION_COLUMNS keys."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    "yes" if row["optical_flow"] else "",
                    "yes" if row["lowpass"] else "",
                    f"{row['tl_id']:.4f}",
                    f"{row['tg_id']:.4f}",
                ]
            )


def format_ablation_table(rows) -> str:
    lines = [f"{'flow':>6} {'lowpass':>8} {'TL-ID':>8} {'TG-ID':>8}"]
    for row in rows:
        lines.append(
            f"{'yes' if row['optical_flow'] else '-':>6} "
            f"{'yes' if row['lowpass'] else '-':>8} "
            f"{row['tl_id']:>8.4f} {row['tg_id']:>8.4f}"
        )
    return "\n".join(lines)


def plot_ablation(rows, path) -> None:
    labels = [
        ("flow+" if r["optical_flow"] else "") + ("lowpass" if r["lowpass"] else "")
        or "none"
        for r in rows
    ]
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.38
    ax.bar([i - width / 2 for i in x], [r["tl_id"] for r in rows], width, label="TL-ID")
    ax.bar([i + width / 2 for i in x], [r["tg_id"] for r in rows], width, label="TG-ID")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=15)
    ax.set_ylabel("score")
    ax.set_title("post-processing ablation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_similarity_traces(report: ConsistencyReport, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = range(len(report.adjacent_src))
    ax.plot(idx, report.adjacent_src, label="source adjacent similarity", lw=1.2)
    ax.plot(idx, report.adjacent_edit, label="edited adjacent similarity", lw=1.2)
    ax.plot(idx, report.adjacent_ratio, label="ratio", lw=1.2, ls="--")
    ax.set_xlabel("frame pair")
    ax.set_ylabel("cosine similarity")
    ax.set_title(f"TL-ID {report.tl_id:.4f} / TG-ID {report.tg_id:.4f}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_frame_strip(video: Video, every: int, path) -> None:
    export_png(frame_strip(video, every), path)
