"""Thread-dump ingestion, anonymization, training-corpus assembly and volumetric stats."""

from __future__ import annotations

import enum
import json
import logging
import os
import random
import re
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .conversation import (
    Message,
    MessageKind,
    Role,
    RoleTaggedMessage,
    ThreadTree,
    ThreadTreeError,
    build_tree,
    clean_text,
    extract_relevant,
    parse_serialized,
    serialize_one,
)

log = logging.getLogger(__name__)

ANON_NAME = "user"
DEFAULT_COMMUNITIES = ("depression", "AdviceForTeens")
LABEL_NAMES = {0: "Negative", 1: "Positive"}


class Source(str, enum.Enum):
    SCRAPED_POSITIVE = "ScrapedPositive"
    SCRAPED_NEGATIVE = "ScrapedNegative"
    PROVIDED = "Provided"


class IngestIOError(OSError):
    pass


class SchemaError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SampleTooLarge(ValueError):
    pass


@dataclass
class SubjectRecord:
    subject_id: str
    label: int
    writings: list[str]
    source: Source

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not self.writings:
            raise ValueError(f"subject {self.subject_id!r} has no writings")

    @property
    def text(self) -> str:
        return " ".join(self.writings)

    def to_json(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "label": self.label,
            "source": self.source.value,
            "text": self.text,
            "writings": list(self.writings),
        }


@dataclass
class CorpusManifest:
    counts: dict[tuple[int, str], int]
    sampling_seed: int
    created_at: int

    @property
    def size(self) -> int:
        return sum(self.counts.values())

    def to_json(self) -> dict:
        return {
            "counts": {f"{label}:{src}": n for (label, src), n in sorted(self.counts.items())},
            "size": self.size,
            "sampling_seed": self.sampling_seed,
            "created_at": self.created_at,
        }


# -- loading -----------------------------------------------------------------

_REQUIRED = {
    "thread_id": str,
    "id": str,
    "author": str,
    "kind": str,
    "body": str,
    "created_utc": int,
    "target": str,
}


def _message_from_row(row: object, lineno: int) -> tuple[str, str, Message]:
    if not isinstance(row, dict):
        raise SchemaError(lineno, "expected a JSON object")
    for key, typ in _REQUIRED.items():
        if key not in row:
            raise SchemaError(lineno, f"missing field {key!r}")
        value = row[key]
        if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            raise SchemaError(lineno, f"field {key!r} must be {typ.__name__}")
    parent = row.get("parent_id")
    title = row.get("title")
    if parent is not None and not isinstance(parent, str):
        raise SchemaError(lineno, "field 'parent_id' must be str or null")
    if title is not None and not isinstance(title, str):
        raise SchemaError(lineno, "field 'title' must be str or null")
    try:
        kind = MessageKind(row["kind"])
    except ValueError:
        raise SchemaError(lineno, f"unknown kind {row['kind']!r}") from None
    if row["created_utc"] < 0:
        raise SchemaError(lineno, "created_utc must be non-negative")
    msg = Message(
        id=row["id"],
        author=row["author"],
        body=row["body"],
        timestamp=row["created_utc"],
        kind=kind,
        parent_id=parent,
        title=title,
    )
    return row["thread_id"], row["target"], msg


def load_thread_dump(path: str | os.PathLike) -> list[ThreadTree]:
    """Read a JSONL dump (one message per line) into one tree per thread id."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestIOError(f"cannot read thread dump {path}: {exc}") from exc

    groups: dict[str, list[Message]] = {}
    targets: dict[str, str] = {}
    first_line: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(lineno, f"invalid JSON ({exc.msg})") from None
        thread_id, target, msg = _message_from_row(row, lineno)
        if thread_id not in groups:
            groups[thread_id] = []
            targets[thread_id] = target
            first_line[thread_id] = lineno
        elif targets[thread_id] != target:
            raise SchemaError(lineno, f"thread {thread_id!r} has conflicting targets")
        groups[thread_id].append(msg)

    trees = []
    for thread_id, msgs in groups.items():
        try:
            trees.append(build_tree(msgs, targets[thread_id], thread_id=thread_id))
        except ThreadTreeError as exc:
            raise SchemaError(first_line[thread_id], f"thread {thread_id!r}: {exc}") from exc
    return trees


# -- anonymization ---------------------------------------------------------------

def _community_pattern(communities: Sequence[str]) -> re.Pattern | None:
    names = [re.escape(c) for c in communities if c]
    if not names:
        return None
    alt = "|".join(sorted(names, key=len, reverse=True))
    return re.compile(rf"(?<![\w/])(?:/?r)?/(?:{alt})(?![\w])", re.IGNORECASE)


def _name_pattern(names: Iterable[str]) -> re.Pattern | None:
    names = sorted({n for n in names if n and n != ANON_NAME}, key=len, reverse=True)
    if not names:
        return None
    alt = "|".join(re.escape(n) for n in names)
    return re.compile(rf"(?<![\w])(?:{alt})(?![\w])")


def scrub_text(text: str, names: Iterable[str] = (), communities: Sequence[str] = DEFAULT_COMMUNITIES) -> str:
    pattern = _name_pattern(names)
    if pattern is not None:
        text = pattern.sub(ANON_NAME, text)
    pattern = _community_pattern(communities)
    if pattern is not None and pattern.search(text):
        text = pattern.sub("", text)
        text = re.sub(r" {2,}", " ", text).strip()
    return text


def anonymize(tree: ThreadTree, communities: Sequence[str] = DEFAULT_COMMUNITIES) -> ThreadTree:
    """Replace participant names with "user" and drop community references.

    Shape and message count are untouched; only authors, titles and bodies change.
    """
    names = {m.author for m in tree.messages()}

    def scrub(msg: Message) -> Message:
        title = scrub_text(msg.title, names, communities) if msg.title is not None else None
        return replace(msg, author=ANON_NAME, body=scrub_text(msg.body, names, communities), title=title)

    children = {pid: [scrub(c) for c in kids] for pid, kids in tree.children.items()}
    return ThreadTree(
        root=scrub(tree.root),
        children=children,
        target_author=ANON_NAME,
        thread_id=tree.thread_id,
    )


def subject_from_tree(
    tree: ThreadTree,
    label: int,
    source: Source,
    communities: Sequence[str] = DEFAULT_COMMUNITIES,
) -> SubjectRecord:
    """Extract, anonymize and serialize one thread into a subject record.

    Roles come from the raw tree; text comes from the anonymized one, since after
    anonymization every author reads "user".
    """
    tagged = extract_relevant(tree)
    anon = {m.id: m for m in anonymize(tree, communities).messages()}
    writings = []
    for t in tagged:
        src = anon[t.message_id]
        title = clean_text(src.title) if src.title else None
        msg = RoleTaggedMessage(t.role, clean_text(src.body), title or None, t.message_id, t.timestamp)
        writings.append(serialize_one(msg))
    subject_id = tree.thread_id or tree.root.id
    return SubjectRecord(subject_id, label, writings, source)


def load_provided(path: str | os.PathLike, communities: Sequence[str] = DEFAULT_COMMUNITIES) -> list[SubjectRecord]:
    """Load context-free subjects: JSONL of {"subject_id", "label", "writings": [str]}."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestIOError(f"cannot read provided subjects {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            writings = [
                serialize_one(RoleTaggedMessage(Role.TARGET, clean_text(scrub_text(w, (), communities))))
                for w in row["writings"]
            ]
            out.append(SubjectRecord(str(row["subject_id"]), int(row["label"]), writings, Source.PROVIDED))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(lineno, f"bad provided subject: {exc}") from None
    return out


# -- corpus ------------------------------------------------------------------------

def build_training_corpus(
    pos: Sequence[SubjectRecord],
    neg_scraped: Sequence[SubjectRecord],
    neg_provided: Sequence[SubjectRecord],
    sample_n: int,
    seed: int,
    created_at: int | None = None,
) -> tuple[list[SubjectRecord], CorpusManifest]:
    if sample_n < 0:
        raise ValueError("sample_n must be non-negative")
    if sample_n > len(neg_provided):
        raise SampleTooLarge(f"cannot sample {sample_n} from {len(neg_provided)} provided negatives")
    sampled = random.Random(seed).sample(list(neg_provided), sample_n)
    corpus = [*pos, *neg_scraped, *sampled]

    counts: dict[tuple[int, str], int] = defaultdict(int)
    for rec in corpus:
        counts[(rec.label, rec.source.value)] += 1
    if created_at is None:
        created_at = int(os.environ.get("SOURCE_DATE_EPOCH", time.time()))
    return corpus, CorpusManifest(dict(counts), seed, created_at)


def write_corpus(path: str | os.PathLike, records: Iterable[SubjectRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def read_corpus(path: str | os.PathLike) -> list[SubjectRecord]:
    """Read corpus JSONL; records without "writings" are split on their [MSG] blocks."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestIOError(f"cannot read corpus {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            writings = row.get("writings")
            if writings is None:
                blocks = parse_serialized(row["text"])
                if blocks:
                    writings = [serialize_one(RoleTaggedMessage(role, text)) for role, text in blocks]
                else:
                    writings = [row["text"]]
            source = Source(row.get("source", Source.PROVIDED.value))
            out.append(SubjectRecord(str(row["subject_id"]), int(row["label"]), list(writings), source))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(lineno, f"bad corpus record: {exc}") from None
    return out


# -- volumetric stats -------------------------------------------------------------

def word_count(text: str) -> int:
    return len(clean_text(text).split())


@dataclass
class GroupStats:
    posts: int = 0
    comments: int = 0
    max_comments: int = 0
    min_comments: int = 0
    post_words: int = 0
    comment_words: int = 0
    self_comments: int = 0

    @property
    def avg_comments(self) -> float:
        return self.comments / self.posts if self.posts else 0.0

    @property
    def avg_post_words(self) -> float:
        return self.post_words / self.posts if self.posts else 0.0

    @property
    def avg_comment_words(self) -> float:
        return self.comment_words / self.comments if self.comments else 0.0

    @property
    def avg_self_comments(self) -> float:
        return self.self_comments / self.posts if self.posts else 0.0

    def add(self, n_comments: int, post_words: int, comment_words: int, self_comments: int) -> None:
        if self.posts == 0:
            self.max_comments = self.min_comments = n_comments
        else:
            self.max_comments = max(self.max_comments, n_comments)
            self.min_comments = min(self.min_comments, n_comments)
        self.posts += 1
        self.comments += n_comments
        self.post_words += post_words
        self.comment_words += comment_words
        self.self_comments += self_comments

    def to_json(self) -> dict:
        return {
            "posts": self.posts,
            "comments": self.comments,
            "avg_comments_per_post": self.avg_comments,
            "max_comments_per_post": self.max_comments,
            "min_comments_per_post": self.min_comments,
            "avg_words_per_post": self.avg_post_words,
            "avg_words_per_comment": self.avg_comment_words,
            "avg_self_comments_per_post": self.avg_self_comments,
        }


@dataclass
class StatsReport:
    groups: dict[str, GroupStats] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {name: g.to_json() for name, g in self.groups.items()}


def corpus_stats(trees: Iterable[tuple[ThreadTree, int]]) -> StatsReport:
    by_label: dict[int, GroupStats] = {}
    total = GroupStats()
    for tree, label in trees:
        comments = tree.comments()
        root = tree.root
        post_words = word_count(f"{root.title or ''} {root.body}")
        comment_words = sum(word_count(c.body) for c in comments)
        own = sum(1 for c in comments if c.author == tree.target_author)
        by_label.setdefault(label, GroupStats()).add(len(comments), post_words, comment_words, own)
        total.add(len(comments), post_words, comment_words, own)
    report = StatsReport()
    for label in sorted(by_label):
        report.groups[LABEL_NAMES.get(label, str(label))] = by_label[label]
    if by_label:
        report.groups["Total"] = total
    return report
