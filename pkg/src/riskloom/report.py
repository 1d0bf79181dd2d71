"""Aligned-text tables and JSON documents for every report the CLI prints.

Tables show two decimals rounded half-up; the JSON keeps full precision.
"""

from __future__ import annotations

import json
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

from .corpus import StatsReport
from .dialogue import InteractionStats
from .metrics import MetricReport

DECISION_COLUMNS = (
    ("P", "precision"),
    ("R", "recall"),
    ("F1", "f1"),
    ("ERDE5", "erde_5"),
    ("ERDE50", "erde_50"),
    ("latencyT", "latency_tp"),
    ("speed", "speed"),
    ("Flatency", "f_latency"),
)
RANKING_COLUMNS = ("P@10", "NDCG@10", "NDCG@100")
ASSESSMENT_COLUMNS = ("DCHR", "ADODL", "ASHR")
MISSING = "-"


def fmt2(value: float | int | None) -> str:
    if value is None:
        return MISSING
    # str() gives the shortest repr, so 0.125 rounds to 0.13 rather than by its binary value
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(headers, *rows)]
    def line(cells):
        return "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), rule, *(line(r) for r in rows)])


def dumps(doc: object) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)


def decision_table(report: MetricReport, label: str = "run") -> str:
    values = report.to_json()
    return render_table(["", *(c for c, _ in DECISION_COLUMNS)], [[label, *(fmt2(values[k]) for _, k in DECISION_COLUMNS)]])


def ranking_table(ranking: Mapping[int, Mapping[str, float | None]]) -> str:
    rows = []
    for checkpoint, row in ranking.items():
        unit = "writing" if checkpoint == 1 else "writings"
        rows.append([f"{checkpoint} {unit}", *(fmt2(row[c]) for c in RANKING_COLUMNS)])
    return render_table(["", *RANKING_COLUMNS], rows)


def assessment_table(runs: Mapping[str, Mapping[str, float]]) -> str:
    """One row per run label."""
    rows = [[label, *(fmt2(scores[c]) for c in ASSESSMENT_COLUMNS)] for label, scores in runs.items()]
    return render_table(["", *ASSESSMENT_COLUMNS], rows)


def stats_table(report: StatsReport) -> str:
    headers = ["", "posts", "comments", "avg comments/post", "max", "min", "avg words/post", "avg words/comment", "avg own comments/post"]
    rows = []
    for name, g in report.groups.items():
        rows.append([
            name, str(g.posts), str(g.comments), fmt2(g.avg_comments), str(g.max_comments), str(g.min_comments),
            fmt2(g.avg_post_words), fmt2(g.avg_comment_words), fmt2(g.avg_self_comments),
        ])
    return render_table(headers, rows)


def interaction_table(stats: Mapping[str, InteractionStats]) -> str:
    rows = [
        [label, str(s.sessions), fmt2(s.mean_messages_per_run), fmt2(s.mean_chars_per_message)]
        for label, s in stats.items()
    ]
    return render_table(["", "sessions", "mean messages/run", "mean chars/message"], rows)


def emit(doc: object, tables: Sequence[str], fmt: str) -> str:
    """Compose stdout: the JSON document, the tables, or both separated by a blank line."""
    parts = []
    if fmt in ("both", "json"):
        parts.append(dumps(doc))
    if fmt in ("both", "table"):
        parts.append("\n\n".join(tables))
    return "\n\n".join(parts) + "\n"
