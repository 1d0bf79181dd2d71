"""Round-based replay of a labeled corpus, one new writing per subject per round."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence


class ProtocolError(RuntimeError):
    pass


class MissingSubject(ProtocolError):
    pass


class UnknownSubject(ProtocolError):
    pass


class DuplicateSubject(ProtocolError):
    pass


class RunNotFinished(ProtocolError):
    pass


@dataclass(frozen=True)
class Round:
    k: int
    items: list[tuple[str, str]]

    @property
    def subjects(self) -> list[str]:
        return [s for s, _ in self.items]


@dataclass(frozen=True)
class DecisionRecord:
    subject_id: str
    k: int
    decision: int
    score: float

    def to_json(self) -> dict:
        return {"subject": self.subject_id, "k": self.k, "decision": self.decision, "score": self.score}

    @classmethod
    def from_json(cls, row: Mapping) -> "DecisionRecord":
        return cls(str(row["subject"]), int(row["k"]), int(row["decision"]), float(row["score"]))


class DecisionLog:
    """Per-subject time series of (k, decision, score)."""

    def __init__(self, records: Iterable[DecisionRecord] = ()):
        self.records: list[DecisionRecord] = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DecisionLog) and self.records == other.records

    def subjects(self) -> list[str]:
        return list(dict.fromkeys(r.subject_id for r in self.records))

    def series(self, subject_id: str) -> list[DecisionRecord]:
        return sorted((r for r in self.records if r.subject_id == subject_id), key=lambda r: r.k)

    def first_positive(self) -> dict[str, float]:
        """Subject -> first round with a positive decision (inf if never flagged)."""
        out: dict[str, float] = {s: math.inf for s in self.subjects()}
        for r in self.records:
            if r.decision == 1 and r.k < out[r.subject_id]:
                out[r.subject_id] = r.k
        return out

    def scores_at(self, checkpoint: int) -> dict[str, float]:
        """Each subject's latest score emitted at or before round ``checkpoint``."""
        best: dict[str, tuple[int, float]] = {}
        for r in self.records:
            if r.k <= checkpoint and (r.subject_id not in best or r.k > best[r.subject_id][0]):
                best[r.subject_id] = (r.k, r.score)
        return {s: v for s, (_, v) in best.items()}

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json()) + "\n")

    @classmethod
    def read(cls, path: str | os.PathLike) -> "DecisionLog":
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(DecisionRecord.from_json(json.loads(line)))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}: line {lineno}: bad decision record ({exc})") from None
        return cls(records)


class RunState:
    """Single-writer state of one streaming run.

    Alternate :meth:`next_round` and :meth:`submit_decisions` until ``next_round``
    returns None.  Subjects flagged positive keep receiving rounds, but their
    decision stays 1.
    """

    def __init__(self, writings: Mapping[str, Sequence[str]]):
        self.writings = {s: list(w) for s, w in writings.items()}
        self.cursor = {s: 0 for s in self.writings}
        self.log = DecisionLog()
        self.finalized: set[str] = set()
        self.k = 0
        self.pending: Round | None = None
        self.ended = False

    @classmethod
    def from_corpus(cls, records) -> "RunState":
        return cls({r.subject_id: r.writings for r in records})

    def next_round(self) -> Round | None:
        if self.pending is not None:
            raise ProtocolError(f"decisions for round {self.pending.k} not submitted")
        if self.ended:
            return None
        items = [
            (s, self.writings[s][self.cursor[s]])
            for s in self.writings
            if self.cursor[s] < len(self.writings[s])
        ]
        if not items:
            self.ended = True
            return None
        self.k += 1
        for s, _ in items:
            self.cursor[s] += 1
        self.pending = Round(self.k, items)
        return self.pending

    def submit_decisions(self, decisions: Iterable[DecisionRecord]) -> "RunState":
        if self.pending is None:
            raise ProtocolError("no round awaiting decisions")
        decisions = list(decisions)
        expected = set(self.pending.subjects)
        seen: set[str] = set()
        for d in decisions:
            if d.subject_id not in expected:
                raise UnknownSubject(f"subject {d.subject_id!r} not in round {self.pending.k}")
            if d.subject_id in seen:
                raise DuplicateSubject(f"subject {d.subject_id!r} submitted twice")
            seen.add(d.subject_id)
            if d.k != self.pending.k:
                raise ProtocolError(f"decision for {d.subject_id!r} carries k={d.k}, expected {self.pending.k}")
            if d.decision not in (0, 1):
                raise ProtocolError(f"decision must be 0 or 1, got {d.decision!r}")
            if not (math.isfinite(d.score) and 0.0 <= d.score <= 1.0):
                raise ProtocolError(f"score for {d.subject_id!r} must be finite in [0, 1], got {d.score!r}")
        missing = expected - seen
        if missing:
            raise MissingSubject(f"round {self.pending.k} missing decisions for {sorted(missing)}")

        for d in decisions:
            if d.subject_id in self.finalized:
                d = DecisionRecord(d.subject_id, d.k, 1, d.score)
            elif d.decision == 1:
                self.finalized.add(d.subject_id)
            self.log.records.append(d)
        self.pending = None
        return self

    def transcript(self) -> DecisionLog:
        if not self.ended:
            raise RunNotFinished("run has rounds left")
        return DecisionLog(self.log.records)


def run_stream(state: RunState, client) -> DecisionLog:
    """Drive a run to the end; ``client(round) -> list[DecisionRecord]``."""
    while (rnd := state.next_round()) is not None:
        state.submit_decisions(client(rnd))
    return state.transcript()


def serve_jsonl(state: RunState, reader: IO[str], writer: IO[str]) -> DecisionLog:
    """Expose a run over line-delimited JSON.

    Emits ``{"k", "items": [{"subject", "text"}]}`` per round and expects
    ``{"k", "decisions": [{"subject", "decision", "score"}]}`` back.  A final
    ``{"end": true}`` line marks the end of the run.
    """
    while (rnd := state.next_round()) is not None:
        writer.write(json.dumps({"k": rnd.k, "items": [{"subject": s, "text": t} for s, t in rnd.items]}) + "\n")
        writer.flush()
        line = reader.readline()
        if not line:
            raise ProtocolError(f"client closed the stream during round {rnd.k}")
        try:
            reply = json.loads(line)
            if reply["k"] != rnd.k:
                raise ProtocolError(f"reply for round {reply['k']}, expected {rnd.k}")
            decisions = [
                DecisionRecord(str(d["subject"]), rnd.k, int(d["decision"]), float(d["score"]))
                for d in reply["decisions"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed reply in round {rnd.k}: {exc}") from None
        state.submit_decisions(decisions)
    writer.write(json.dumps({"end": True}) + "\n")
    writer.flush()
    return state.transcript()
