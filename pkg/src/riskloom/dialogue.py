"""Two-agent interview loop: one model questions a persona, another scores the transcript."""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import statistics
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .bdi import SYMPTOMS, SymptomVector
from .gateway import ChatExchange, ChatGateway, ChatMessage, GatewayError
from .parsing import (
    EvaluatorOutput,
    ParsedAgentOutput,
    UnparseableOutput,
    parse_agent_output,
    parse_evaluator_output,
)
from .prompts import AGENT_LABEL, StrategyKind, TemplateId, format_chat, render_prompt

log = logging.getLogger(__name__)

FIRST_SYMPTOM = "Sadness"
MAX_AGENT_MESSAGES = 21
MIN_PERSONA_REPLIES = 2
MAX_PARSE_RETRIES = 2


class Speaker(str, enum.Enum):
    AGENT = "agent"
    PERSONA = "persona"
    EVALUATOR = "evaluator"


class Persona(Protocol):
    name: str

    def reply(self, agent_text: str) -> str: ...


@dataclass
class AgentTurn:
    speaker: Speaker
    raw: str
    turn_index: int
    parsed: ParsedAgentOutput | EvaluatorOutput | None = None
    text: str = ""

    def to_json(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "speaker": self.speaker.value,
            "text": self.text,
            "raw": self.raw,
            "parsed": self.parsed.to_json() if self.parsed is not None else None,
        }


@dataclass
class DialogueState:
    strategy: StrategyKind
    persona_name: str
    transcript: list[AgentTurn] = field(default_factory=list)
    evaluations: list[AgentTurn] = field(default_factory=list)
    symptoms: SymptomVector = field(default_factory=SymptomVector.zeros)
    planned_symptom: str = FIRST_SYMPTOM
    agent_messages_sent: int = 0
    persona_replies: int = 0
    terminated: bool = False
    stop_reason: str | None = None

    def turns(self) -> list[AgentTurn]:
        """Conversation and evaluator turns interleaved in the order they happened."""
        return sorted(self.transcript + self.evaluations, key=lambda t: t.turn_index)

    def _next_index(self) -> int:
        return len(self.transcript) + len(self.evaluations)


TurnSink = Callable[[AgentTurn], None]


class TranscriptWriter:
    """Appends each turn to a JSONL file as soon as it happens."""

    def __init__(self, path: str | os.PathLike):
        self.path = path
        open(path, "w", encoding="utf-8").close()

    def __call__(self, turn: AgentTurn) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(turn.to_json(), ensure_ascii=False) + "\n")


_FORMAT_BLOCK = re.compile(r"```.*?```", re.S)


def _format_reminder(prompt_text: str, error: Exception) -> str:
    blocks = _FORMAT_BLOCK.findall(prompt_text)
    fmt = blocks[-1] if blocks else ""
    return f"Your previous answer could not be read ({error}). Answer again using exactly this format:\n{fmt}"


def _call_parsed(gateway: ChatGateway, messages: list[ChatMessage], parse, reminder_source: str):
    """Complete and parse, re-prompting with a format reminder on parse failures."""
    attempt_msgs = list(messages)
    last: UnparseableOutput | None = None
    for attempt in range(MAX_PARSE_RETRIES + 1):
        raw = gateway.complete(ChatExchange(tuple(attempt_msgs)))
        try:
            return raw, parse(raw)
        except UnparseableOutput as exc:
            last = exc
            log.warning("unreadable model output (attempt %d): %s", attempt + 1, exc)
            attempt_msgs = list(messages) + [
                ChatMessage("assistant", raw or "(empty)"),
                ChatMessage("user", _format_reminder(reminder_source, exc)),
            ]
    raise UnparseableOutput(f"gave up after {MAX_PARSE_RETRIES} re-prompts: {last}") from last


def _agent_messages(state: DialogueState) -> list[ChatMessage]:
    first = state.agent_messages_sent == 0
    tid = TemplateId.agent(state.strategy, first)
    system, user = render_prompt(tid, {"USER_NAME": state.persona_name, "SYMPTOM": state.planned_symptom})
    messages = [ChatMessage("system", system), ChatMessage("user", user)]
    for turn in state.transcript:
        if turn.speaker is Speaker.AGENT:
            messages.append(ChatMessage("assistant", turn.raw))
        else:
            messages.append(ChatMessage("user", turn.text))
    return messages


def _evaluator_messages(state: DialogueState) -> list[ChatMessage]:
    chat = format_chat(
        (AGENT_LABEL if t.speaker is Speaker.AGENT else state.persona_name, t.text) for t in state.transcript
    )
    tid = TemplateId.evaluator(first=state.persona_replies == 1)
    system, user = render_prompt(tid, {"USER_NAME": state.persona_name, "CHAT": chat})
    return [ChatMessage("system", system), ChatMessage("user", user)]


def _record(state: DialogueState, turn: AgentTurn, sink: TurnSink | None) -> None:
    (state.evaluations if turn.speaker is Speaker.EVALUATOR else state.transcript).append(turn)
    if sink is not None:
        sink(turn)


def step(state: DialogueState, gateway: ChatGateway, persona: Persona, sink: TurnSink | None = None) -> DialogueState:
    """One cycle: agent message, persona reply, evaluation.  Mutates and returns ``state``."""
    if state.terminated:
        raise ValueError("session already terminated")

    messages = _agent_messages(state)
    raw, parsed = _call_parsed(
        gateway, messages, lambda r: parse_agent_output(r, state.strategy), messages[0].content
    )
    outgoing = parsed.outgoing_text()
    _record(state, AgentTurn(Speaker.AGENT, raw, state._next_index(), parsed, outgoing), sink)
    state.agent_messages_sent += 1

    reply = persona.reply(outgoing)
    _record(state, AgentTurn(Speaker.PERSONA, reply, state._next_index(), None, reply), sink)
    state.persona_replies += 1

    messages = _evaluator_messages(state)
    raw, verdict = _call_parsed(gateway, messages, parse_evaluator_output, messages[1].content)
    _record(state, AgentTurn(Speaker.EVALUATOR, raw, state._next_index(), verdict, ""), sink)
    state.symptoms = state.symptoms.merge(verdict.symptoms_detected)

    if verdict.next_symptom is None and state.persona_replies >= MIN_PERSONA_REPLIES:
        state.terminated, state.stop_reason = True, "evaluator"
    elif state.agent_messages_sent >= MAX_AGENT_MESSAGES:
        state.terminated, state.stop_reason = True, "turn cap"
    elif verdict.next_symptom is not None:
        state.planned_symptom = verdict.next_symptom
    else:
        # "None" before the minimum exchange count: keep going on something unassessed
        pending = [s for s in SYMPTOMS if s not in state.symptoms.assessed]
        if pending:
            state.planned_symptom = pending[0]
    return state


def run_session(
    strategy: StrategyKind | str,
    persona_name: str,
    gateway: ChatGateway,
    persona: Persona,
    sink: TurnSink | None = None,
) -> tuple[SymptomVector, list[AgentTurn]]:
    """Step until termination.

    On failure the raised error gets a ``state`` attribute holding the partial session.
    """
    state = DialogueState(strategy=StrategyKind(strategy), persona_name=persona_name)
    try:
        while not state.terminated:
            step(state, gateway, persona, sink)
    except (GatewayError, UnparseableOutput) as exc:
        exc.state = state
        log.error("session with %s failed after %d agent messages: %s", persona_name, state.agent_messages_sent, exc)
        raise
    return state.symptoms, state.turns()


@dataclass(frozen=True)
class InteractionStats:
    sessions: int
    mean_messages_per_run: float
    mean_chars_per_message: float

    def to_json(self) -> dict:
        return {
            "sessions": self.sessions,
            "mean_messages_per_run": self.mean_messages_per_run,
            "mean_chars_per_message": self.mean_chars_per_message,
        }


def interaction_stats(sessions: Sequence[Sequence[AgentTurn]]) -> InteractionStats:
    """Agent messages per session, and characters per agent message pooled over sessions."""
    if not sessions:
        raise ValueError("no sessions")
    counts, lengths = [], []
    for turns in sessions:
        sent = [t.text for t in turns if t.speaker is Speaker.AGENT]
        counts.append(len(sent))
        lengths.extend(len(text) for text in sent)
    return InteractionStats(
        sessions=len(sessions),
        mean_messages_per_run=statistics.fmean(counts),
        mean_chars_per_message=statistics.fmean(lengths) if lengths else 0.0,
    )


def read_transcript(path: str | os.PathLike) -> list[AgentTurn]:
    turns = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                turns.append(AgentTurn(Speaker(row["speaker"]), row.get("raw", ""), int(row["turn_index"]), None, row.get("text", "")))
    return turns
