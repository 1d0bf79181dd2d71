"""Decision-based (P/R/F1, ERDE, latency, speed, F-latency) and ranking-based measures."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .stream import DecisionLog

# slope of the latency penalty; penalty(k) is ~0.0078 after three writings
SPEED_SLOPE = 0.0078
DEFAULT_CHECKPOINTS = (1, 100, 500, 1000)


class KeyMismatch(ValueError):
    pass


class NoTruePositives(ValueError):
    pass


class KShortRanking(ValueError):
    pass


@dataclass(frozen=True)
class ErdeParams:
    o: int
    c_fp: float
    c_fn: float = 1.0
    c_tp: float = 1.0

    def __post_init__(self) -> None:
        if self.o < 1:
            raise ValueError("ERDE deadline o must be >= 1")
        if min(self.c_fp, self.c_fn, self.c_tp) < 0:
            raise ValueError("ERDE costs must be non-negative")

    @classmethod
    def standard(cls, o: int, truth: Mapping[str, int]) -> "ErdeParams":
        """c_fn = c_tp = 1 and c_fp = share of positives in the collection."""
        if not truth:
            raise ValueError("empty truth")
        return cls(o=o, c_fp=sum(truth.values()) / len(truth))

    def scaled(self, alpha: float) -> "ErdeParams":
        return ErdeParams(self.o, alpha * self.c_fp, alpha * self.c_fn, alpha * self.c_tp)


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    erde_5: float
    erde_50: float
    latency_tp: float | None
    speed: float | None
    f_latency: float | None

    def to_json(self) -> dict:
        return asdict(self)


def _check_keys(first_positive: Mapping, truth: Mapping) -> None:
    if set(first_positive) != set(truth):
        only_pred = sorted(set(first_positive) - set(truth))[:5]
        only_truth = sorted(set(truth) - set(first_positive))[:5]
        raise KeyMismatch(f"subject sets differ (decisions only: {only_pred}, truth only: {only_truth})")


def prf1(first_positive: Mapping[str, float], truth: Mapping[str, int]) -> tuple[float, float, float]:
    _check_keys(first_positive, truth)
    tp = fp = fn = 0
    for s, label in truth.items():
        flagged = math.isfinite(first_positive[s])
        if flagged and label == 1:
            tp += 1
        elif flagged:
            fp += 1
        elif label == 1:
            fn += 1
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def latency_cost(k: np.ndarray | float, o: int) -> np.ndarray | float:
    """lc_o(k) = 1 - 1/(1 + e^(k-o)), written as a logistic in k - o."""
    x = np.clip(np.asarray(k, dtype=float) - o, -700.0, 700.0)
    return 1.0 / (1.0 + np.exp(-x))


def erde(first_positive: Mapping[str, float], truth: Mapping[str, int], params: ErdeParams) -> float:
    _check_keys(first_positive, truth)
    subjects = sorted(truth)
    k = np.array([first_positive[s] for s in subjects], dtype=float)
    y = np.array([truth[s] for s in subjects], dtype=int)
    flagged = np.isfinite(k)
    cost = np.zeros(len(subjects))
    cost[flagged & (y == 0)] = params.c_fp
    cost[~flagged & (y == 1)] = params.c_fn
    hit = flagged & (y == 1)
    cost[hit] = params.c_tp * latency_cost(k[hit], params.o)
    return float(cost.mean())


def speed_penalty(k: float, p: float = SPEED_SLOPE) -> float:
    return -1.0 + 2.0 / (1.0 + math.exp(-p * (k - 1)))


def latency_speed(
    first_positive: Mapping[str, float], truth: Mapping[str, int], p: float = SPEED_SLOPE
) -> tuple[float, float]:
    _check_keys(first_positive, truth)
    delays = [first_positive[s] for s, y in truth.items() if y == 1 and math.isfinite(first_positive[s])]
    if not delays:
        raise NoTruePositives("no true positive was flagged")
    latency = float(statistics.median(delays))
    speed = float(statistics.median(1.0 - speed_penalty(k, p) for k in delays))
    return latency, speed


def f_latency(f1: float, speed: float) -> float:
    return f1 * speed


def decision_report(log: DecisionLog, truth: Mapping[str, int], p: float = SPEED_SLOPE) -> MetricReport:
    fp = log.first_positive()
    P, R, F1 = prf1(fp, truth)
    try:
        latency, speed = latency_speed(fp, truth, p)
        flat = f_latency(F1, speed)
    except NoTruePositives:
        latency = speed = flat = None
    return MetricReport(
        precision=P,
        recall=R,
        f1=F1,
        erde_5=erde(fp, truth, ErdeParams.standard(5, truth)),
        erde_50=erde(fp, truth, ErdeParams.standard(50, truth)),
        latency_tp=latency,
        speed=speed,
        f_latency=flat,
    )


# -- ranking -----------------------------------------------------------------------

def rank_subjects(scores: Mapping[str, float]) -> list[str]:
    """Descending score, ties broken by subject id."""
    return sorted(scores, key=lambda s: (-scores[s], s))


def _check_k(ranking: Sequence[str], k: int) -> None:
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(ranking):
        raise KShortRanking(f"ranking has {len(ranking)} subjects, need {k}")


def precision_at_k(ranking: Sequence[str], truth: Mapping[str, int], k: int) -> float:
    _check_k(ranking, k)
    return sum(truth[s] for s in ranking[:k]) / k


def dcg(relevances: Sequence[int]) -> float:
    return sum(rel / math.log2(i + 2) for i, rel in enumerate(relevances))


def ndcg_at_k(ranking: Sequence[str], truth: Mapping[str, int], k: int) -> float:
    _check_k(ranking, k)
    rels = [truth[s] for s in ranking]
    ideal = dcg(sorted(rels, reverse=True)[:k])
    if ideal == 0:
        return 0.0
    return dcg(rels[:k]) / ideal


def ranking_report(
    log: DecisionLog,
    truth: Mapping[str, int],
    checkpoints: Sequence[int] = DEFAULT_CHECKPOINTS,
) -> dict[int, dict[str, float | None]]:
    """P@10, NDCG@10 and NDCG@100 at each checkpoint; None where the ranking is too short."""
    out: dict[int, dict[str, float | None]] = {}
    for c in checkpoints:
        ranking = rank_subjects(log.scores_at(c))
        row: dict[str, float | None] = {}
        for name, fn, k in (("P@10", precision_at_k, 10), ("NDCG@10", ndcg_at_k, 10), ("NDCG@100", ndcg_at_k, 100)):
            try:
                row[name] = fn(ranking, truth, k)
            except KShortRanking:
                row[name] = None
        out[c] = row
    return out
