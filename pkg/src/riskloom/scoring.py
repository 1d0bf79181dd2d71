"""Risk scorers for serialized histories and the score-to-decision policy."""

from __future__ import annotations

import enum
import functools
import math
import os
import re
import threading
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import httpx

from .conversation import Role, parse_serialized
from .stream import DecisionRecord, Round

SCORER_URL_ENV = "RISKLOOM_SCORER_URL"


class ScorerError(RuntimeError):
    pass


class ScorerTransportError(ScorerError):
    pass


class ScorerBadResponse(ScorerError):
    pass


class ScorerTimeout(ScorerError):
    pass


class ScorerKind(str, enum.Enum):
    LEXICON = "lexicon"
    REMOTE = "remote"


@dataclass(frozen=True)
class DecisionPolicy:
    threshold: float = 0.5
    min_rounds: int = 1
    consecutive_hits: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.min_rounds < 1 or self.consecutive_hits < 1:
            raise ValueError("min_rounds and consecutive_hits must be >= 1")


@dataclass(frozen=True)
class ScorerBinding:
    kind: ScorerKind
    endpoint: str | None = None
    lexicon: Mapping[str, float] | None = None
    timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.kind is ScorerKind.REMOTE and not self.endpoint:
            raise ValueError("remote scorer requires an endpoint")
        if self.kind is ScorerKind.LEXICON and self.lexicon is None:
            raise ValueError("lexicon scorer requires a term table")


def load_lexicon(path: str | os.PathLike) -> dict[str, float]:
    """Read a ``term<TAB>weight`` file; blank lines and ``#`` comments are skipped."""
    table: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            term, sep, weight = line.partition("\t")
            if not sep:
                raise ValueError(f"{path}: line {lineno}: expected term<TAB>weight")
            value = float(weight)
            if not math.isfinite(value):
                raise ValueError(f"{path}: line {lineno}: weight must be finite")
            table[term.strip().lower()] = value
    return table


def default_lexicon() -> dict[str, float]:
    ref = resources.files("riskloom") / "data" / "default_lexicon.tsv"
    with resources.as_file(ref) as path:
        return load_lexicon(path)


@functools.lru_cache(maxsize=4096)
def _term_pattern(term: str) -> re.Pattern:
    words = [re.escape(w) for w in term.split()]
    return re.compile(r"(?<!\w)" + r"\s+".join(words) + r"(?!\w)", re.IGNORECASE)


def target_text(serialized: str) -> str:
    return " ".join(text for role, text in parse_serialized(serialized) if role is Role.TARGET)


def score_lexicon(serialized: str, lexicon: Mapping[str, float]) -> float:
    """s/(1+s) over weighted term counts in TARGET blocks only.

    Negative totals are floored at 0 so the score stays in [0, 1].
    """
    text = target_text(serialized)
    if not text:
        return 0.0
    s = 0.0
    for term, weight in lexicon.items():
        if weight and term.strip():
            s += weight * len(_term_pattern(term).findall(text))
    s = max(s, 0.0)
    return s / (1.0 + s)


class RemoteScorer:
    """POSTs ``{"text": ...}`` to an endpoint and expects ``{"score": float}``."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @classmethod
    def from_env(cls, **kwargs) -> "RemoteScorer":
        url = os.environ.get(SCORER_URL_ENV)
        if not url:
            raise ValueError(f"{SCORER_URL_ENV} is not set")
        return cls(url, **kwargs)

    def close(self) -> None:
        self._client.close()

    def __call__(self, serialized: str) -> float:
        with self._slots:
            try:
                resp = self._client.post(self.endpoint, json={"text": serialized})
            except httpx.TimeoutException as exc:
                raise ScorerTimeout(f"scorer timed out: {exc}") from exc
            except httpx.TransportError as exc:
                raise ScorerTransportError(f"scorer unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ScorerBadResponse(f"scorer returned HTTP {resp.status_code}")
        try:
            score = float(resp.json()["score"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ScorerBadResponse(f"scorer response lacks a numeric 'score': {exc}") from None
        if not math.isfinite(score):
            raise ScorerBadResponse(f"scorer returned non-finite score {score!r}")
        return min(1.0, max(0.0, score))


def score_remote(serialized: str, binding: ScorerBinding, transport: httpx.BaseTransport | None = None) -> float:
    scorer = RemoteScorer(binding.endpoint, timeout=binding.timeout, transport=transport)
    try:
        return scorer(serialized)
    finally:
        scorer.close()


def decide(policy: DecisionPolicy, score_history: Sequence[float]) -> int:
    if not score_history:
        raise ValueError("score history is empty")
    if len(score_history) < policy.min_rounds or len(score_history) < policy.consecutive_hits:
        return 0
    window = score_history[-policy.consecutive_hits:]
    return int(all(s >= policy.threshold for s in window))


class StreamClient:
    """In-process client for :func:`riskloom.stream.run_stream`.

    Scores each subject's accumulated history and applies the decision policy.
    """

    def __init__(self, scorer, policy: DecisionPolicy = DecisionPolicy()):
        self.scorer = scorer
        self.policy = policy
        self.history: dict[str, list[str]] = {}
        self.scores: dict[str, list[float]] = {}

    def __call__(self, rnd: Round) -> list[DecisionRecord]:
        out = []
        for subject, text in rnd.items:
            self.history.setdefault(subject, []).append(text)
            score = self.scorer(" ".join(self.history[subject]))
            series = self.scores.setdefault(subject, [])
            series.append(score)
            out.append(DecisionRecord(subject, rnd.k, decide(self.policy, series), score))
        return out
