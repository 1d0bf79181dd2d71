"""Tolerant parsing of the agents' JSON-like replies.

Models are asked for a fenced block of ``"key": "value"`` lines, but what comes
back may be a real JSON object, a braceless list of pairs, fenced or not, with
bare keys, single quotes, or trailing commas.  Strict JSON is tried first, then
a key-by-key scan.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .bdi import SYMPTOMS, UnknownSymptom, canonical_symptom, coerce_score
from .prompts import REQUIRED_FIELDS, StrategyKind


class UnparseableOutput(ValueError):
    pass


class MissingField(UnparseableOutput):
    def __init__(self, name: str):
        super().__init__(f"missing field {name!r}")
        self.name = name


@dataclass(frozen=True)
class ParsedAgentOutput:
    reasoning: str | None = None
    message: str | None = None
    experience: str | None = None
    question: str | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    def outgoing_text(self) -> str:
        """What the persona actually sees: message, experience, then question."""
        return " ".join(p for p in (self.message, self.experience, self.question) if p)


@dataclass(frozen=True)
class EvaluatorOutput:
    reasoning: str
    symptoms_detected: dict[str, int] = field(default_factory=dict)
    next_symptom: str | None = None
    next_reason: str = ""

    def to_json(self) -> dict:
        return {
            "reasoning": self.reasoning,
            "symptoms_detected": dict(self.symptoms_detected),
            "next_symptom": self.next_symptom,
            "next_reason": self.next_reason,
        }


_FENCE = re.compile(r"```[A-Za-z]*[ \t]*\n?(.*?)(?:```|\Z)", re.S)
_TRAILING_COMMA = re.compile(r",\s*([}\]])")
_KEY = re.compile(
    r"""(?:^|(?<=[{,]))[ \t]*(?:[-*•][ \t]*)?
        (?:"(?P<dq>[^"\n]{1,80})"|'(?P<sq>[^'\n]{1,80})'|(?P<bare>[A-Za-z][A-Za-z _\-/]{0,79}?))
        [ \t]*:""",
    re.M | re.X,
)
_NUMBER = re.compile(r"""^\s*["']?(-?\d+(?:\.\d+)?)""")
_DECODER = json.JSONDecoder(strict=False)


def _unfence(raw: str) -> str:
    m = _FENCE.search(raw)
    if m and m.group(1).strip():
        return m.group(1)
    return raw


def _try_json(body: str) -> dict | None:
    text = body.strip()
    candidates = [text]
    if not text.startswith("{"):
        candidates.append("{" + text + "}")
    start, end = text.find("{"), text.rfind("}")
    if 0 <= start < end:
        candidates.append(text[start:end + 1])
    for cand in candidates:
        for variant in (cand, _TRAILING_COMMA.sub(r"\1", cand.rstrip().rstrip(","))):
            try:
                data = json.loads(variant, strict=False)
            except json.JSONDecodeError:
                continue
            if isinstance(data, dict):
                return data
    return None


def _clean_value(text: str) -> str:
    text = text.strip().rstrip(",").strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        inner = text[1:-1]
        if text[0] == '"':
            try:
                return json.loads(f'"{inner}"', strict=False)
            except json.JSONDecodeError:
                return inner
        return inner
    return text.strip("\"'").strip()


def _scan_pairs(body: str) -> list[tuple[str, object]]:
    """Walk ``key: value`` pairs in order; values are str, or dict for nested objects."""
    text = body.strip()
    if text.startswith("{") and text.endswith("}"):
        text = text[1:-1]
    pairs: list[tuple[str, object]] = []
    pos = 0
    while (m := _KEY.search(text, pos)) is not None:
        key = (m.group("dq") or m.group("sq") or m.group("bare")).strip()
        i = m.end()
        while i < len(text) and text[i] in " \t":
            i += 1
        if i < len(text) and text[i] in "\"{":
            try:
                value, end = _DECODER.raw_decode(text, i)
            except json.JSONDecodeError:
                value = None
            else:
                rest = text[end:].lstrip(" \t")
                if not rest or rest[0] in ",\n}" or rest[0] == "\r":
                    pairs.append((key, value))
                    pos = end
                    continue
        nxt = _KEY.search(text, i)
        stop = nxt.start() if nxt else len(text)
        pairs.append((key, _clean_value(text[i:stop])))
        pos = stop if nxt else len(text)
        if not nxt:
            break
    return pairs


def _norm_key(key: str) -> str:
    return " ".join(key.lower().replace("_", " ").replace("-", " ").split())


def _as_text(value: object) -> str:
    if isinstance(value, str):
        return value.strip()
    return json.dumps(value) if isinstance(value, (dict, list)) else str(value)


_AGENT_FIELDS = ("reasoning", "message", "experience", "question")


def parse_agent_output(raw: str, strategy: StrategyKind) -> ParsedAgentOutput:
    if not raw or not raw.strip():
        raise UnparseableOutput("empty output")
    body = _unfence(raw)
    data = _try_json(body)
    pairs = list(data.items()) if data is not None else _scan_pairs(body)

    found: dict[str, str] = {}
    for key, value in pairs:
        name = _norm_key(key)
        if name in _AGENT_FIELDS and name not in found:
            found[name] = _as_text(value)
    if not found:
        raise UnparseableOutput(f"no recognizable fields in output: {raw[:120]!r}")

    values = {}
    for name in REQUIRED_FIELDS[StrategyKind(strategy)]:
        if not found.get(name):
            raise MissingField(name)
        values[name] = found[name]
    return ParsedAgentOutput(**values)


_REASONING = {"reasoning", "analysis"}
_SYMPTOMS_KEY = {"symptoms detected", "symptoms", "symptom scores", "scores"}
_NEXT = {"next symptom", "next"}
_NEXT_REASON = {"reason for selecting the next symptom", "next reason", "reason for next symptom", "reason"}
_FIELD_KEYS = _REASONING | _SYMPTOMS_KEY | _NEXT | _NEXT_REASON
_NONE_WORDS = {"none", "null", "na", "nothing", ""}
_SYMPTOMS_LONGEST_FIRST = sorted(SYMPTOMS, key=len, reverse=True)


def _leading_number(value: object) -> object | None:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return value
    if isinstance(value, str):
        m = _NUMBER.match(value)
        return m.group(1) if m else None
    return None


def _normalize_next(value: object) -> str | None:
    if value is None:
        return None
    text = _as_text(value).strip().strip("\"'").rstrip(".,;").strip().strip("\"'")
    squashed = re.sub(r"[^a-z]", "", text.lower())
    if squashed in _NONE_WORDS or squashed.startswith("none"):
        return None
    try:
        return canonical_symptom(text)
    except UnknownSymptom:
        pass
    lowered = text.lower()
    for name in _SYMPTOMS_LONGEST_FIRST:
        if name.lower() in lowered:
            return name
    raise UnknownSymptom(text)


def _symptom_entries(items) -> dict[str, int]:
    out: dict[str, int] = {}
    for key, value in items:
        number = _leading_number(value)
        if number is None:
            continue
        out[canonical_symptom(key)] = coerce_score(number)
    return out


def parse_evaluator_output(raw: str) -> EvaluatorOutput:
    if not raw or not raw.strip():
        raise UnparseableOutput("empty output")
    body = _unfence(raw)
    data = _try_json(body)
    pairs = list(data.items()) if data is not None else _scan_pairs(body)
    if not pairs:
        raise UnparseableOutput(f"no recognizable fields in output: {raw[:120]!r}")

    reasoning = next_reason = ""
    next_value: object = None
    has_next = False
    symptoms: dict[str, int] = {}
    header_seen = False
    in_section = False
    loose: list[tuple[str, object]] = []

    for key, value in pairs:
        name = _norm_key(key)
        if name in _FIELD_KEYS:
            in_section = False
            if name in _REASONING:
                reasoning = _as_text(value)
            elif name in _SYMPTOMS_KEY:
                header_seen = in_section = True
                if isinstance(value, dict):
                    symptoms.update(_symptom_entries(value.items()))
                elif isinstance(value, list):
                    for item in value:
                        if isinstance(item, dict) and "symptom" in item and "score" in item:
                            symptoms.update(_symptom_entries([(item["symptom"], item["score"])]))
                elif isinstance(value, str) and value.strip():
                    symptoms.update(_symptom_entries(_scan_pairs(value)))
            elif name in _NEXT:
                has_next = True
                next_value = value
            else:
                next_reason = _as_text(value)
        elif in_section:
            symptoms.update(_symptom_entries([(key, value)]))
        else:
            loose.append((key, value))

    if not header_seen:
        # no "symptoms detected" header: any numeric pair outside the known fields is a symptom
        symptoms.update(_symptom_entries(loose))
    if not has_next:
        raise MissingField("next symptom")
    return EvaluatorOutput(
        reasoning=reasoning,
        symptoms_detected=symptoms,
        next_symptom=_normalize_next(next_value),
        next_reason=next_reason,
    )
