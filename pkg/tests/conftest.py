import json
from pathlib import Path

import pytest
from hypothesis import settings

from riskloom.conversation import Message, MessageKind

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def post(id_, author, body, ts, title=None):
    return Message(id_, author, body, ts, MessageKind.SUBMISSION, None, title)


def comment(id_, author, body, ts, parent):
    return Message(id_, author, body, ts, MessageKind.COMMENT, parent)


def dump_rows(thread_id, target, messages):
    return [
        {
            "thread_id": thread_id,
            "id": m.id,
            "parent_id": m.parent_id,
            "author": m.author,
            "kind": m.kind.value,
            "title": m.title,
            "body": m.body,
            "created_utc": m.timestamp,
            "target": target,
        }
        for m in messages
    ]


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def fixtures_dir():
    return FIXTURES
