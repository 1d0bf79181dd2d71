"""PNG figures accompanying the CLI reports."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bdi import SymptomVector  # noqa: E402
from .corpus import StatsReport  # noqa: E402
from .metrics import MetricReport  # noqa: E402
from .report import DECISION_COLUMNS, RANKING_COLUMNS  # noqa: E402


def _save(fig, out_dir: str | os.PathLike, name: str) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(target, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return target


def plot_stats(report: StatsReport, out_dir: str | os.PathLike) -> list[Path]:
    names = list(report.groups)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(names, [g.avg_comments for g in report.groups.values()], color="tab:blue")
    ax1.set_ylabel("comments per post")
    ax1.set_title("Average comments per post")
    x = range(len(names))
    ax2.bar([i - 0.2 for i in x], [g.avg_post_words for g in report.groups.values()], width=0.4, label="post")
    ax2.bar([i + 0.2 for i in x], [g.avg_comment_words for g in report.groups.values()], width=0.4, label="comment")
    ax2.set_xticks(list(x), names)
    ax2.set_ylabel("words")
    ax2.set_title("Average length")
    ax2.legend()
    return [_save(fig, out_dir, "stats.png")]


def plot_eval(report: MetricReport, ranking: Mapping[int, Mapping[str, float | None]], out_dir: str | os.PathLike) -> list[Path]:
    values = report.to_json()
    cols = [(label, values[key]) for label, key in DECISION_COLUMNS if key != "latency_tp" and values[key] is not None]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar([c for c, _ in cols], [v for _, v in cols], color="tab:green")
    ax.set_ylim(0, 1.05)
    ax.set_title("Decision metrics")
    paths = [_save(fig, out_dir, "decision_metrics.png")]

    fig, ax = plt.subplots(figsize=(6, 3.5))
    checkpoints = list(ranking)
    for col in RANKING_COLUMNS:
        ax.plot([str(c) for c in checkpoints], [ranking[c][col] if ranking[c][col] is not None else float("nan") for c in checkpoints], marker="o", label=col)
    ax.set_xlabel("writings processed")
    ax.set_ylim(0, 1.05)
    ax.set_title("Ranking metrics by checkpoint")
    ax.legend()
    paths.append(_save(fig, out_dir, "ranking_metrics.png"))
    return paths


def plot_assessment(
    names: Sequence[str],
    preds: Sequence[SymptomVector],
    truths: Sequence[SymptomVector],
    out_dir: str | os.PathLike,
) -> list[Path]:
    fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(names) + 2), 3.5))
    x = range(len(names))
    ax.bar([i - 0.2 for i in x], [t.total() for t in truths], width=0.4, label="ground truth")
    ax.bar([i + 0.2 for i in x], [p.total() for p in preds], width=0.4, label="predicted")
    ax.set_xticks(list(x), names, rotation=45, ha="right")
    ax.set_ylabel("BDI-II total")
    ax.set_title("Overall depression level per persona")
    ax.legend()
    return [_save(fig, out_dir, "assessment_totals.png")]


def plot_interaction(messages_per_session: Mapping[str, Sequence[int]], out_dir: str | os.PathLike) -> list[Path]:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = list(messages_per_session)
    ax.boxplot([list(v) for v in messages_per_session.values()])
    ax.set_xticks(range(1, len(labels) + 1), labels)
    ax.set_ylabel("agent messages per session")
    ax.set_title("Session length")
    return [_save(fig, out_dir, "session_lengths.png")]
