"""Chat-completion access for both agents, plus offline stand-ins.

:class:`OpenAIChatGateway` speaks the OpenAI-compatible chat-completions wire
format.  :class:`ScriptedPersona`, :class:`MockAgent` and :class:`MockEvaluator`
replace the remote models so a whole session can run offline: the persona answers
with fixed severity phrases, and the mock evaluator decodes those phrases back
into scores.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from .bdi import SYMPTOMS, SymptomVector, canonical_symptom
from .prompts import AGENT_LABEL

log = logging.getLogger(__name__)

LLM_URL_ENV = "RISKLOOM_LLM_URL"
LLM_KEY_ENV = "RISKLOOM_LLM_KEY"
DEFAULT_MODEL = "meta-llama/Llama-3.1-8B-Instruct"
ROLES = ("system", "user", "assistant")


class GatewayError(RuntimeError):
    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class GatewayTransportError(GatewayError):
    pass


class AuthFailure(GatewayError):
    pass


class GatewayTimeout(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class BadResponse(GatewayError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatExchange:
    messages: tuple[ChatMessage, ...]
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("exchange has no messages")
        for i, m in enumerate(self.messages):
            if m.role not in ROLES:
                raise ValueError(f"unknown role {m.role!r}")
            if m.role == "system" and i != 0:
                raise ValueError("system message must come first")
            if not m.content:
                raise ValueError(f"message {i} has empty content")

    @classmethod
    def of(cls, *pairs: tuple[str, str], **knobs) -> "ChatExchange":
        return cls(tuple(ChatMessage(r, c) for r, c in pairs), **knobs)

    @property
    def system(self) -> str:
        return self.messages[0].content if self.messages[0].role == "system" else ""

    def first_user(self) -> str:
        return next((m.content for m in self.messages if m.role == "user"), "")

    def payload(self, model: str) -> dict:
        body: dict = {"model": model, "messages": [{"role": m.role, "content": m.content} for m in self.messages]}
        # sampling knobs are only sent when set; otherwise the server defaults apply
        for knob in ("temperature", "top_p", "max_tokens"):
            value = getattr(self, knob)
            if value is not None:
                body[knob] = value
        return body


class ChatGateway(Protocol):
    def complete(self, exchange: ChatExchange) -> str: ...


@dataclass
class EndpointConfig:
    url: str
    api_key: str | None = None
    model: str = DEFAULT_MODEL
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    backoff_max: float = 30.0
    max_in_flight: int = 4

    @classmethod
    def from_env(cls, url: str | None = None, **overrides) -> "EndpointConfig":
        url = url or os.environ.get(LLM_URL_ENV)
        if not url:
            raise ValueError(f"no endpoint configured; pass a URL or set {LLM_URL_ENV}")
        return cls(url=url, api_key=os.environ.get(LLM_KEY_ENV), **overrides)

    @property
    def completions_url(self) -> str:
        url = self.url.rstrip("/")
        return url if url.endswith("/chat/completions") else url + "/chat/completions"


class OpenAIChatGateway:
    """Retries transport failures, timeouts, 429 and 5xx with exponential backoff."""

    def __init__(
        self,
        config: EndpointConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        self._client = httpx.Client(timeout=config.timeout, transport=transport, headers=headers)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self.last_retries = 0

    def close(self) -> None:
        self._client.close()

    def _backoff(self, attempt: int) -> float:
        return min(self.config.backoff_max, self.config.backoff_base * 2 ** attempt)

    def complete(self, exchange: ChatExchange) -> str:
        payload = exchange.payload(self.config.model)
        attempt = 0
        while True:
            try:
                with self._slots:
                    resp = self._client.post(self.config.completions_url, json=payload)
                error = self._classify(resp, attempt)
                if error is None:
                    self.last_retries = attempt
                    return self._content(resp, attempt)
            except httpx.TimeoutException as exc:
                error = GatewayTimeout(f"request timed out: {exc}", attempt)
            except httpx.TransportError as exc:
                error = GatewayTransportError(f"transport failure: {exc}", attempt)
            if attempt >= self.config.max_retries:
                self.last_retries = attempt
                raise error
            delay = self._backoff(attempt)
            log.warning("chat completion failed (%s); retry %d/%d in %.2fs", error, attempt + 1, self.config.max_retries, delay)
            self._sleep(delay)
            attempt += 1

    @staticmethod
    def _classify(resp: httpx.Response, attempt: int) -> GatewayError | None:
        """None on success; a retryable error for 429/5xx; raises on other failures."""
        code = resp.status_code
        if code == 200:
            return None
        if code in (401, 403):
            raise AuthFailure(f"endpoint rejected credentials (HTTP {code})", attempt)
        if code == 429:
            return RateLimited("rate limited (HTTP 429)", attempt)
        if code >= 500:
            return GatewayTransportError(f"server error (HTTP {code})", attempt)
        raise BadResponse(f"endpoint returned HTTP {code}: {resp.text[:200]}", attempt)

    @staticmethod
    def _content(resp: httpx.Response, attempt: int) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BadResponse(f"malformed completion payload: {exc}", attempt) from None
        if not isinstance(content, str) or not content.strip():
            raise BadResponse("completion has empty content", attempt)
        return content


# -- scripted personas --------------------------------------------------------------

# (phrase subject used in replies, words that count as asking about the symptom)
SYMPTOM_LEXICON: dict[str, tuple[str, tuple[str, ...]]] = {
    "Sadness": ("sadness", ("sadness", "sad", "mood", "unhappy")),
    "Pessimism": ("hopelessness about the future", ("pessimism", "pessimistic", "hopeless", "hopelessness", "the future", "discouraged")),
    "Past Failure": ("the feeling that I have failed", ("past failure", "failure", "failures", "failed")),
    "Loss of Pleasure": ("losing pleasure in things", ("loss of pleasure", "pleasure", "enjoy", "enjoyment")),
    "Guilty Feelings": ("guilt", ("guilty feelings", "guilt", "guilty")),
    "Punishment Feelings": ("the feeling that I am being punished", ("punishment feelings", "punishment", "punished")),
    "Self-Dislike": ("disliking myself", ("self-dislike", "self dislike", "dislike yourself", "disappointed in yourself")),
    "Self-Criticalness": ("criticizing myself", ("self-criticalness", "self-critical", "criticize yourself", "blame yourself")),
    "Suicidal Thoughts or Wishes": ("thinking about ending my life", ("suicidal thoughts or wishes", "suicidal", "suicide", "end your life", "killing yourself")),
    "Crying": ("crying", ("crying", "cry", "tears")),
    "Agitation": ("restlessness", ("agitation", "agitated", "restless", "restlessness")),
    "Loss of Interest": ("losing interest in other people", ("loss of interest", "lost interest", "interest in other people")),
    "Indecisiveness": ("making decisions", ("indecisiveness", "indecisive", "decisions", "making decisions")),
    "Worthlessness": ("worthlessness", ("worthlessness", "worthless", "useless")),
    "Loss of Energy": ("low energy", ("loss of energy", "energy")),
    "Changes in Sleeping Pattern": ("trouble with my sleep", ("changes in sleeping pattern", "sleeping pattern", "sleep", "sleeping", "insomnia")),
    "Irritability": ("irritability", ("irritability", "irritable", "irritated")),
    "Changes in Appetite": ("changes in my appetite", ("changes in appetite", "appetite", "eating")),
    "Concentration Difficulty": ("trouble concentrating", ("concentration difficulty", "concentration", "concentrate", "focus")),
    "Tiredness or Fatigue": ("tiredness", ("tiredness or fatigue", "tiredness", "tired", "fatigue", "fatigued")),
    "Loss of Interest in Sex": ("losing interest in sex", ("loss of interest in sex", "interest in sex", "sex drive", "libido", "sex")),
}

_SEVERITY_FRAMES = (
    "Honestly, {noun} has not been a problem for me at all.",
    "I notice {noun} now and then, but it doesn't bother me much.",
    "{Noun} has been really unpleasant lately, though I can still stand it.",
    "{Noun} has been severe, I can hardly stand it anymore.",
)
DEFAULT_REFUSALS = (
    "I'd rather not put a label on how I am, can we talk about something else?",
    "That's a bit personal, I don't really want to go there.",
    "I don't know, I'm not comfortable answering that kind of question.",
)
DEFAULT_FILLER = "I'm not sure what you mean, could you ask me something more specific?"
_DIRECT_QUESTION = re.compile(
    r"(?<!\w)(?:depress\w*|diagnos\w*|mental (?:health|illness|disorder)s?|psychiatr\w*)(?!\w)", re.IGNORECASE
)


def default_phrases() -> dict[tuple[str, int], str]:
    table = {}
    for symptom, (noun, _) in SYMPTOM_LEXICON.items():
        for score, frame in enumerate(_SEVERITY_FRAMES):
            table[(symptom, score)] = frame.format(noun=noun, Noun=noun[0].upper() + noun[1:])
    return table


def default_aliases() -> dict[str, tuple[str, ...]]:
    return {s: aliases for s, (_, aliases) in SYMPTOM_LEXICON.items()}


class SymptomDetector:
    """Finds which symptoms a piece of text asks about; longest alias wins on overlap."""

    def __init__(self, aliases: Mapping[str, Iterable[str]]):
        owner: dict[str, str] = {}
        for symptom in SYMPTOMS:
            for alias in (symptom, *aliases.get(symptom, ())):
                owner.setdefault(alias.lower(), symptom)
        self._owner = owner
        alt = "|".join(re.escape(a) for a in sorted(owner, key=len, reverse=True))
        self._pattern = re.compile(rf"(?<!\w)(?:{alt})(?!\w)", re.IGNORECASE)

    def __call__(self, text: str) -> list[str]:
        hits = {self._owner[m.group(0).lower()] for m in self._pattern.finditer(text)}
        return [s for s in SYMPTOMS if s in hits]


@dataclass
class PersonaScript:
    name: str
    ground_truth: SymptomVector
    severity_phrases: dict[tuple[str, int], str] = field(default_factory=default_phrases)
    refusal_phrases: list[str] = field(default_factory=lambda: list(DEFAULT_REFUSALS))
    aliases: dict[str, tuple[str, ...]] = field(default_factory=default_aliases)
    filler: str = DEFAULT_FILLER

    def __post_init__(self) -> None:
        for symptom, score in self.ground_truth.as_dict().items():
            if (symptom, score) not in self.severity_phrases:
                raise ValueError(f"persona {self.name!r} lacks a phrase for ({symptom}, {score})")
        if not self.refusal_phrases:
            raise ValueError(f"persona {self.name!r} has no refusal phrases")

    @classmethod
    def from_json(cls, data: Mapping) -> "PersonaScript":
        kwargs: dict = {}
        if "severity_phrases" in data:
            phrases = default_phrases()
            for symptom, by_score in data["severity_phrases"].items():
                for score, text in by_score.items():
                    phrases[(canonical_symptom(symptom), int(score))] = text
            kwargs["severity_phrases"] = phrases
        if "refusal_phrases" in data:
            kwargs["refusal_phrases"] = list(data["refusal_phrases"])
        if "aliases" in data:
            aliases = default_aliases()
            aliases.update({canonical_symptom(s): tuple(a) for s, a in data["aliases"].items()})
            kwargs["aliases"] = aliases
        if "filler" in data:
            kwargs["filler"] = data["filler"]
        truth = data.get("ground_truth", data.get("scores", {}))
        return cls(name=str(data["name"]), ground_truth=SymptomVector.from_mapping(truth), **kwargs)

    def to_json(self) -> dict:
        phrases: dict[str, dict[str, str]] = {}
        for (symptom, score), text in sorted(self.severity_phrases.items(), key=lambda kv: (SYMPTOMS.index(kv[0][0]), kv[0][1])):
            phrases.setdefault(symptom, {})[str(score)] = text
        return {
            "name": self.name,
            "ground_truth": self.ground_truth.as_dict(),
            "severity_phrases": phrases,
            "refusal_phrases": list(self.refusal_phrases),
            "aliases": {s: list(a) for s, a in self.aliases.items()},
            "filler": self.filler,
        }

    def codebook(self) -> dict[str, tuple[str, int]]:
        return {text: key for key, text in self.severity_phrases.items()}


def load_personas(path: str | os.PathLike) -> list[PersonaScript]:
    """A persona file holds one script object or a list of them."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    rows = data if isinstance(data, list) else [data]
    return [PersonaScript.from_json(row) for row in rows]


def persona_reply(script: PersonaScript, agent_question: str) -> str:
    if _DIRECT_QUESTION.search(agent_question):
        idx = zlib.crc32(agent_question.encode("utf-8")) % len(script.refusal_phrases)
        return script.refusal_phrases[idx]
    mentioned = SymptomDetector(script.aliases)(agent_question)
    if not mentioned:
        return script.filler
    return " ".join(script.severity_phrases[(s, script.ground_truth[s])] for s in mentioned)


class ScriptedPersona:
    def __init__(self, script: PersonaScript):
        self.script = script
        self.name = script.name
        self._detector = SymptomDetector(script.aliases)

    def reply(self, agent_text: str) -> str:
        return persona_reply(self.script, agent_text)


# -- mock agents ----------------------------------------------------------------------

EVALUATOR_SYSTEM_PREFIX = "You are an expert in assessing depression symptoms"


class MockEvaluator:
    """Decodes persona severity phrases back into scores and plans the next symptom.

    Symptoms are planned in canonical order.  A symptom whose question drew no
    evidence is asked once more, then skipped.
    """

    def __init__(
        self,
        codebook: Mapping[str, tuple[str, int]] | None = None,
        aliases: Mapping[str, Iterable[str]] | None = None,
    ):
        if codebook is None:
            codebook = {text: key for key, text in default_phrases().items()}
        self.codebook = dict(codebook)
        self._detect = SymptomDetector(aliases or default_aliases())
        self._phrases = sorted(self.codebook, key=len, reverse=True)

    def decode(self, reply: str) -> dict[str, int]:
        found: dict[str, int] = {}
        for phrase in self._phrases:
            if phrase in reply:
                symptom, score = self.codebook[phrase]
                found[symptom] = score
        return found

    def evaluate(self, turns: Sequence[tuple[str, str]], persona_name: str) -> str:
        assessed: dict[str, int] = {}
        asked_count: dict[str, int] = {}
        evidence_ever: set[str] = set()
        last_asked: list[str] = []
        last_evidence: dict[str, int] = {}
        for speaker, text in turns:
            if speaker == persona_name:
                last_evidence = self.decode(text)
                assessed.update(last_evidence)
                evidence_ever.update(last_evidence)
            else:
                last_asked = self._detect(text)
                for s in last_asked:
                    asked_count[s] = asked_count.get(s, 0) + 1
                last_evidence = {}

        skipped = {s for s, n in asked_count.items() if n >= 2 and s not in evidence_ever}
        candidates = [s for s in SYMPTOMS if s not in assessed and s not in skipped]
        retry = [s for s in last_asked if s in candidates]
        if retry:
            nxt, why = retry[0], f"No evidence yet about {retry[0]}; asking once more."
        elif candidates:
            nxt, why = candidates[0], f"{candidates[0]} has not been assessed yet."
        else:
            nxt, why = None, "None"

        lines = [
            "```",
            f'"reasoning": "Found {len(last_evidence)} symptom statement(s) in the latest reply of {persona_name}.",',
            '"symptoms detected":',
            *(f"{s}: {assessed[s]}," for s in SYMPTOMS if s in assessed),
            f'"reason for selecting the next symptom": "{why}",',
            f'"next symptom": "{nxt if nxt else "None"}"',
            "```",
        ]
        return "\n".join(lines)

    def complete(self, exchange: ChatExchange) -> str:
        user = exchange.first_user()
        m = re.search(r"a user called (.+?) and another user", user)
        if not m:
            raise BadResponse("mock evaluator could not find the persona name in the prompt")
        name = m.group(1)
        turn_re = re.compile(rf"^({re.escape(AGENT_LABEL)}|{re.escape(name)}): (.*)$", re.M)
        turns = [(sp, text) for sp, text in turn_re.findall(user)]
        return self.evaluate(turns, name)


class MockAgent:
    """Answers agent prompts in the requested strategy format, asking about the prompted symptom."""

    def complete(self, exchange: ChatExchange) -> str:
        m = re.search(r"the symptom: '([^']+)'", exchange.first_user())
        if not m:
            raise BadResponse("mock agent could not find the target symptom in the prompt")
        symptom = m.group(1)
        topic = symptom.lower()
        fields = [("reasoning", f"The evaluator asked for more detail on {symptom}.")]
        if '"message"' in exchange.system:
            fields.append(("message", "Thank you for telling me that."))
        if '"experience"' in exchange.system:
            fields.append(("experience", f"I remember a stretch of time when {topic} weighed on me too."))
        fields.append(("question", f"Could you tell me about {topic} in your life lately?"))
        body = ",\n".join(f'"{k}": {json.dumps(v)}' for k, v in fields)
        return f"```\n{body}\n```"


class MockGateway:
    """Routes evaluator prompts to a :class:`MockEvaluator` and the rest to a :class:`MockAgent`."""

    def __init__(self, evaluator: MockEvaluator | None = None, agent: MockAgent | None = None):
        self.evaluator = evaluator or MockEvaluator()
        self.agent = agent or MockAgent()
        self.calls: list[ChatExchange] = []

    def complete(self, exchange: ChatExchange) -> str:
        self.calls.append(exchange)
        if exchange.system.startswith(EVALUATOR_SYSTEM_PREFIX):
            return self.evaluator.complete(exchange)
        return self.agent.complete(exchange)


def mock_evaluator(transcript: Sequence[tuple[str, str]], persona_name: str, codebook=None) -> str:
    return MockEvaluator(codebook).evaluate(transcript, persona_name)
