"""Conversation threads: tree building, text cleaning, context extraction, serialization.

A thread is one primary post (submission) plus its hierarchical comments.  For a
given target author the relevant part of the thread is extracted, tagged TARGET or
CONTEXT, and flattened into the ``[MSG] [USER] {type} {text}`` training format.
"""

from __future__ import annotations

import enum
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator


class MessageKind(str, enum.Enum):
    SUBMISSION = "submission"
    COMMENT = "comment"


class Role(str, enum.Enum):
    TARGET = "TARGET"
    CONTEXT = "CONTEXT"


class ThreadTreeError(ValueError):
    """Base class for malformed thread structures."""


class MissingRoot(ThreadTreeError):
    pass


class MultipleRoots(ThreadTreeError):
    pass


class OrphanComment(ThreadTreeError):
    pass


class CycleDetected(ThreadTreeError):
    pass


class DuplicateMessage(ThreadTreeError):
    pass


class TargetAbsent(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    id: str
    author: str
    body: str
    timestamp: int
    kind: MessageKind = MessageKind.COMMENT
    parent_id: str | None = None
    title: str | None = None

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"message {self.id!r} has negative timestamp")


@dataclass
class ThreadTree:
    root: Message
    children: dict[str, list[Message]]
    target_author: str
    thread_id: str = ""

    def messages(self) -> Iterator[Message]:
        """Depth-first walk starting at the root (siblings in timestamp order)."""
        stack = [self.root]
        while stack:
            msg = stack.pop()
            yield msg
            stack.extend(reversed(self.children.get(msg.id, [])))

    def chronological(self) -> list[Message]:
        return sorted(self.messages(), key=_order_key)

    def comments(self) -> list[Message]:
        return [m for m in self.messages() if m is not self.root]

    def parent_map(self) -> dict[str, Message]:
        index = {m.id: m for m in self.messages()}
        return {m.id: index[m.parent_id] for m in self.comments()}

    def depth(self) -> int:
        best = 0
        queue = deque([(self.root, 1)])
        while queue:
            msg, d = queue.popleft()
            best = max(best, d)
            queue.extend((c, d + 1) for c in self.children.get(msg.id, []))
        return best


@dataclass(frozen=True)
class RoleTaggedMessage:
    role: Role
    text: str
    title: str | None = None
    message_id: str = ""
    timestamp: int = 0


def _order_key(msg: Message) -> tuple[int, str]:
    return (msg.timestamp, msg.id)


_BRACKET_SPAN = re.compile(r"\[[^\[\]]*\]")
# a URL is any token beginning with a scheme or "www."
_URL = re.compile(r"(?<![\w/])(?:https?://|www\.)\S*", re.IGNORECASE)
_WHITESPACE = re.compile(r"\s+")


def _clean_once(text: str) -> str:
    prev = None
    while prev != text:
        prev = text
        text = _BRACKET_SPAN.sub(" ", text)
    text = _URL.sub(" ", text)
    return _WHITESPACE.sub(" ", text).strip()


def clean_text(raw: str) -> str:
    """Strip URLs, newlines and square-bracketed spans, then collapse whitespace.

    Runs to a fixed point, so the result is stable under re-cleaning.
    """
    text = raw
    while True:
        cleaned = _clean_once(text)
        if cleaned == text:
            return cleaned
        text = cleaned


def build_tree(messages: Iterable[Message], target_author: str, thread_id: str = "") -> ThreadTree:
    messages = list(messages)
    roots = [m for m in messages if m.kind is MessageKind.SUBMISSION]
    if not roots:
        raise MissingRoot(f"thread {thread_id!r} has no submission")
    if len(roots) > 1:
        raise MultipleRoots(f"thread {thread_id!r} has {len(roots)} submissions")
    root = roots[0]
    if root.parent_id is not None:
        raise ThreadTreeError(f"submission {root.id!r} must not have a parent")

    by_id: dict[str, Message] = {}
    for m in messages:
        if m.id in by_id:
            raise DuplicateMessage(f"duplicate message id {m.id!r}")
        by_id[m.id] = m

    children: dict[str, list[Message]] = defaultdict(list)
    for m in messages:
        if m is root:
            continue
        if m.parent_id is None or m.parent_id not in by_id:
            raise OrphanComment(f"comment {m.id!r} has unresolvable parent {m.parent_id!r}")
        if m.parent_id == m.id:
            raise CycleDetected(f"comment {m.id!r} is its own parent")
        children[m.parent_id].append(m)
    for siblings in children.values():
        siblings.sort(key=_order_key)

    # every message must hang off the root; anything left over sits on a cycle
    seen = {root.id}
    queue = deque([root.id])
    while queue:
        for child in children.get(queue.popleft(), []):
            seen.add(child.id)
            queue.append(child.id)
    if len(seen) != len(by_id):
        stray = sorted(set(by_id) - seen)
        raise CycleDetected(f"messages unreachable from root (cycle): {stray}")

    return ThreadTree(root=root, children=dict(children), target_author=target_author, thread_id=thread_id)


def extract_relevant(tree: ThreadTree) -> list[RoleTaggedMessage]:
    """Keep the messages that give context to the target author, in chronological order.

    If the target wrote comments, keep each target message, its direct replies and
    the ancestor chain up to the primary post.  If the target only wrote the primary
    post, keep the post and its direct replies.
    """
    target = tree.target_author
    authored = [m for m in tree.messages() if m.author == target]
    if not authored:
        raise TargetAbsent(f"{target!r} authored nothing in thread {tree.thread_id!r}")

    keep: set[str] = set()
    parents = tree.parent_map()
    for msg in authored:
        keep.add(msg.id)
        keep.update(c.id for c in tree.children.get(msg.id, []))
        node = msg
        while node.id in parents:
            node = parents[node.id]
            keep.add(node.id)

    out = []
    for msg in tree.chronological():
        if msg.id not in keep:
            continue
        role = Role.TARGET if msg.author == target else Role.CONTEXT
        title = clean_text(msg.title) if msg.title else None
        out.append(RoleTaggedMessage(role, clean_text(msg.body), title or None, msg.id, msg.timestamp))
    return out


def message_text(msg: RoleTaggedMessage) -> str:
    # title and body are concatenated when a title exists
    return " ".join(part for part in (msg.title, msg.text) if part)


def serialize_one(msg: RoleTaggedMessage) -> str:
    return f"[MSG] [USER] {msg.role.value} {message_text(msg)}"


def serialize(messages: Iterable[RoleTaggedMessage]) -> str:
    return " ".join(serialize_one(m) for m in messages)


_BLOCK = re.compile(r"\[MSG\] \[USER\] (TARGET|CONTEXT) ")


def parse_serialized(text: str) -> list[tuple[Role, str]]:
    """Split a serialized history back into (role, text) blocks."""
    starts = list(_BLOCK.finditer(text))
    blocks = []
    for i, m in enumerate(starts):
        end = starts[i + 1].start() if i + 1 < len(starts) else len(text)
        body = text[m.end():end]
        if i + 1 < len(starts) and body.endswith(" "):
            body = body[:-1]
        blocks.append((Role(m.group(1)), body))
    return blocks
