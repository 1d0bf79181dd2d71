"""BDI-II symptom vectors, totals, severity categories and the pilot-task metrics.

DCHR is the share of personas placed in the right severity band, ADODL the mean
normalized closeness of BDI totals, ASHR the mean share of exactly matched items.
"""

from __future__ import annotations

import enum
import json
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

SYMPTOMS: tuple[str, ...] = (
    "Sadness",
    "Pessimism",
    "Past Failure",
    "Loss of Pleasure",
    "Guilty Feelings",
    "Punishment Feelings",
    "Self-Dislike",
    "Self-Criticalness",
    "Suicidal Thoughts or Wishes",
    "Crying",
    "Agitation",
    "Loss of Interest",
    "Indecisiveness",
    "Worthlessness",
    "Loss of Energy",
    "Changes in Sleeping Pattern",
    "Irritability",
    "Changes in Appetite",
    "Concentration Difficulty",
    "Tiredness or Fatigue",
    "Loss of Interest in Sex",
)
MAX_SCORE = 3
MAX_TOTAL = MAX_SCORE * len(SYMPTOMS)


class UnknownSymptom(ValueError):
    def __init__(self, name: str):
        super().__init__(f"unknown symptom {name!r}")
        self.name = name


class ScoreOutOfRange(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class OutOfRange(ValueError):
    pass


def _squash(name: str) -> str:
    return re.sub(r"[^a-z]", "", name.lower())


_CANONICAL = {_squash(s): s for s in SYMPTOMS}


def canonical_symptom(name: str) -> str:
    """Map a symptom name to its canonical spelling, ignoring case, spacing and punctuation."""
    try:
        return _CANONICAL[_squash(name)]
    except KeyError:
        raise UnknownSymptom(name) from None


def coerce_score(value: object) -> int:
    """Accept 0-3 as int, integral float, or numeric string; reject anything else."""
    if isinstance(value, bool):
        raise ScoreOutOfRange(f"score {value!r} is not a number")
    if isinstance(value, str):
        value = value.strip().strip("\"'")
        try:
            value = float(value)
        except ValueError:
            raise ScoreOutOfRange(f"score {value!r} is not a number") from None
    if not isinstance(value, (int, float)) or value != int(value):
        raise ScoreOutOfRange(f"score {value!r} is not an integer")
    score = int(value)
    if not 0 <= score <= MAX_SCORE:
        raise ScoreOutOfRange(f"score {score} outside 0..{MAX_SCORE}")
    return score


@dataclass(frozen=True)
class SymptomVector:
    scores: tuple[int, ...] = (0,) * len(SYMPTOMS)
    assessed: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if len(self.scores) != len(SYMPTOMS):
            raise ValueError(f"expected {len(SYMPTOMS)} scores, got {len(self.scores)}")
        for s in self.scores:
            if not isinstance(s, int) or not 0 <= s <= MAX_SCORE:
                raise ScoreOutOfRange(f"score {s!r} outside 0..{MAX_SCORE}")
        unknown = set(self.assessed) - set(SYMPTOMS)
        if unknown:
            raise UnknownSymptom(sorted(unknown)[0])

    @classmethod
    def zeros(cls) -> "SymptomVector":
        return cls()

    @classmethod
    def from_mapping(cls, scores: Mapping[str, object], assessed: Iterable[str] | None = None) -> "SymptomVector":
        """Build from a partial name -> score map; unlisted symptoms are 0."""
        values = dict.fromkeys(SYMPTOMS, 0)
        for name, score in scores.items():
            values[canonical_symptom(name)] = coerce_score(score)
        mentioned = {canonical_symptom(n) for n in (scores if assessed is None else assessed)}
        return cls(tuple(values.values()), frozenset(mentioned))

    def __getitem__(self, name: str) -> int:
        return self.scores[SYMPTOMS.index(canonical_symptom(name))]

    def as_dict(self) -> dict[str, int]:
        return dict(zip(SYMPTOMS, self.scores))

    def merge(self, update: Mapping[str, int]) -> "SymptomVector":
        """Overwrite the listed symptoms; leave the rest untouched."""
        values = self.as_dict()
        for name, score in update.items():
            values[canonical_symptom(name)] = coerce_score(score)
        return SymptomVector(tuple(values.values()), self.assessed | {canonical_symptom(n) for n in update})

    def total(self) -> int:
        return sum(self.scores)


def bdi_total(v: SymptomVector) -> int:
    return v.total()


class DepressionCategory(str, enum.Enum):
    MINIMAL = "Minimal"
    MILD = "Mild"
    MODERATE = "Moderate"
    SEVERE = "Severe"


# inclusive upper bound of each band, in DepressionCategory order
DEFAULT_CUTOFFS: tuple[int, int, int, int] = (9, 18, 29, 63)


def validate_cutoffs(cutoffs: Sequence[int]) -> tuple[int, ...]:
    cutoffs = tuple(int(c) for c in cutoffs)
    if len(cutoffs) != len(DepressionCategory):
        raise ValueError(f"need {len(DepressionCategory)} band upper bounds, got {len(cutoffs)}")
    if cutoffs[0] < 0 or cutoffs[-1] != MAX_TOTAL or any(a >= b for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError(f"cutoffs {cutoffs} do not partition 0..{MAX_TOTAL}")
    return cutoffs


def categorize(total: int, cutoffs: Sequence[int] = DEFAULT_CUTOFFS) -> DepressionCategory:
    if not 0 <= total <= MAX_TOTAL:
        raise OutOfRange(f"BDI total {total} outside 0..{MAX_TOTAL}")
    for category, upper in zip(DepressionCategory, validate_cutoffs(cutoffs)):
        if total <= upper:
            return category
    raise AssertionError("unreachable: last cutoff is MAX_TOTAL")


def _pairs(preds: Sequence[SymptomVector], truths: Sequence[SymptomVector]):
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} ground truths")
    if not preds:
        raise LengthMismatch("no personas to score")
    return zip(preds, truths)


def dchr(preds: Sequence[SymptomVector], truths: Sequence[SymptomVector], cutoffs: Sequence[int] = DEFAULT_CUTOFFS) -> float:
    hits = [categorize(p.total(), cutoffs) == categorize(t.total(), cutoffs) for p, t in _pairs(preds, truths)]
    return sum(hits) / len(hits)


def adodl(preds: Sequence[SymptomVector], truths: Sequence[SymptomVector]) -> float:
    vals = [(MAX_TOTAL - abs(p.total() - t.total())) / MAX_TOTAL for p, t in _pairs(preds, truths)]
    return sum(vals) / len(vals)


def ashr(preds: Sequence[SymptomVector], truths: Sequence[SymptomVector]) -> float:
    vals = [
        sum(a == b for a, b in zip(p.scores, t.scores)) / len(SYMPTOMS)
        for p, t in _pairs(preds, truths)
    ]
    return sum(vals) / len(vals)


def assessment_report(
    preds: Sequence[SymptomVector],
    truths: Sequence[SymptomVector],
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
) -> dict[str, float]:
    return {"DCHR": dchr(preds, truths, cutoffs), "ADODL": adodl(preds, truths), "ASHR": ashr(preds, truths)}


def load_persona_scores(path: str | os.PathLike) -> dict[str, SymptomVector]:
    """Read ``{"persona": str, "scores": {name: 0..3}}`` records into name -> vector.

    The file may hold one object, a JSON list of objects, or JSONL.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
        rows = data if isinstance(data, list) else [data]
    except json.JSONDecodeError:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    out = {}
    for row in rows:
        # persona script files ({"name", "ground_truth"}) are accepted as well
        name = row.get("persona", row.get("name")) if isinstance(row, dict) else None
        scores = row.get("scores", row.get("ground_truth")) if isinstance(row, dict) else None
        if name is None or not isinstance(scores, dict):
            raise ValueError(f"{path}: expected {{'persona': ..., 'scores': {{...}}}} records")
        out[str(name)] = SymptomVector.from_mapping(scores)
    return out
