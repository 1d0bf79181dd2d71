import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskloom.conversation import build_tree
from riskloom.corpus import (
    IngestIOError,
    SampleTooLarge,
    SchemaError,
    Source,
    SubjectRecord,
    anonymize,
    build_training_corpus,
    corpus_stats,
    load_provided,
    load_thread_dump,
    read_corpus,
    scrub_text,
    subject_from_tree,
    word_count,
    write_corpus,
)

from conftest import comment, dump_rows, post, write_jsonl


def two_threads():
    a = [post("a0", "JaneDoe42", "hi", 1, title="T"), comment("a1", "Bob", "thanks JaneDoe42!", 2, "a0")]
    b = [post("b0", "Carl", "root", 3), comment("b1", "Dana", "reply", 4, "b0")]
    return dump_rows("ta", "JaneDoe42", a) + dump_rows("tb", "Dana", b)


def test_load_two_threads(tmp_path):
    trees = load_thread_dump(write_jsonl(tmp_path / "d.jsonl", two_threads()))
    assert [t.thread_id for t in trees] == ["ta", "tb"]
    assert trees[1].target_author == "Dana"


def test_load_empty_file(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert load_thread_dump(p) == []


def test_malformed_line_reports_line_number(tmp_path):
    rows = two_threads() + two_threads()[:2]
    lines = [json.dumps(r) for r in rows[:6]]
    lines.insert(6, "{not json")
    p = tmp_path / "bad.jsonl"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError) as err:
        load_thread_dump(p)
    assert err.value.line == 7


def test_missing_file_raises_io_error(tmp_path):
    with pytest.raises(IngestIOError):
        load_thread_dump(tmp_path / "nope.jsonl")


def test_anonymize_examples():
    tree = build_tree([post("r", "JaneDoe42", "thanks JaneDoe42!", 1), comment("c", "x", "posted in r/depression yesterday", 2, "r")], "JaneDoe42")
    anon = anonymize(tree)
    msgs = {m.id: m for m in anon.messages()}
    assert msgs["r"].author == "user" and msgs["r"].body == "thanks user!"
    assert msgs["c"].body == "posted in yesterday"
    again = anonymize(anon)
    assert [(m.id, m.author, m.body) for m in again.messages()] == [(m.id, m.author, m.body) for m in anon.messages()]


def test_scrub_is_case_sensitive_whole_word():
    assert scrub_text("Ann and Annie and ann", ["Ann"]) == "user and Annie and ann"
    assert scrub_text("see /r/AdviceForTeens and r/depression.", []) == "see and ."


def test_subject_from_tree_keeps_roles_after_anonymizing():
    tree = build_tree([post("r", "A", "root", 1), comment("t", "T", "I am T", 2, "r")], "T")
    rec = subject_from_tree(tree, 1, Source.SCRAPED_POSITIVE)
    assert rec.writings == ["[MSG] [USER] CONTEXT root", "[MSG] [USER] TARGET I am user"]


def _records(n, label, source, prefix):
    return [SubjectRecord(f"{prefix}{i}", label, ["[MSG] [USER] TARGET x"], source) for i in range(n)]


def test_build_corpus_counts_and_errors():
    pos = _records(3, 1, Source.SCRAPED_POSITIVE, "p")
    neg = _records(2, 0, Source.SCRAPED_NEGATIVE, "n")
    prov = _records(10, 0, Source.PROVIDED, "v")
    corpus, manifest = build_training_corpus(pos, neg, prov, 0, seed=1, created_at=0)
    assert len(corpus) == 5 and manifest.size == 5
    corpus, manifest = build_training_corpus(pos, neg, prov, 4, seed=1, created_at=0)
    assert manifest.counts[(0, "Provided")] == 4 and manifest.size == len(corpus) == 9
    with pytest.raises(SampleTooLarge):
        build_training_corpus(pos, neg, prov, 11, seed=1)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_sampling_determinism(seed_a, seed_b):
    pos = _records(3, 1, Source.SCRAPED_POSITIVE, "p")
    neg = _records(2, 0, Source.SCRAPED_NEGATIVE, "n")
    prov = _records(20, 0, Source.PROVIDED, "v")
    a1, _ = build_training_corpus(pos, neg, prov, 7, seed_a, created_at=0)
    a2, _ = build_training_corpus(pos, neg, prov, 7, seed_a, created_at=0)
    b, _ = build_training_corpus(pos, neg, prov, 7, seed_b, created_at=0)
    assert a1 == a2
    fixed = lambda c: [r for r in c if r.source is not Source.PROVIDED]
    assert fixed(a1) == fixed(b)


def test_corpus_roundtrip(tmp_path):
    recs = _records(2, 1, Source.SCRAPED_POSITIVE, "p")
    write_corpus(tmp_path / "c.jsonl", recs)
    assert read_corpus(tmp_path / "c.jsonl") == recs
    row = {"subject_id": "s", "label": 0, "source": "Provided", "text": "[MSG] [USER] TARGET a [MSG] [USER] CONTEXT b"}
    write_jsonl(tmp_path / "t.jsonl", [row])
    assert read_corpus(tmp_path / "t.jsonl")[0].writings == ["[MSG] [USER] TARGET a", "[MSG] [USER] CONTEXT b"]


def test_load_provided(tmp_path):
    write_jsonl(tmp_path / "p.jsonl", [{"subject_id": 7, "label": 0, "writings": ["see r/depression\nnow"]}])
    (rec,) = load_provided(tmp_path / "p.jsonl")
    assert rec.subject_id == "7" and rec.writings == ["[MSG] [USER] TARGET see now"]


def _thread(i, n_comments, target_comments):
    msgs = [post(f"{i}r", "T", "one two three", 1)]
    for j in range(n_comments):
        msgs.append(comment(f"{i}c{j}", "T" if j < target_comments else "O", "a b", 2 + j, f"{i}r"))
    return build_tree(msgs, "T", str(i))


def test_stats_small_examples():
    single = corpus_stats([(_thread(0, 0, 0), 0)]).groups["Negative"]
    assert (single.avg_comments, single.max_comments, single.min_comments) == (0, 0, 0)
    pair = corpus_stats([(_thread(0, 2, 0), 1), (_thread(1, 4, 1), 1)]).groups["Positive"]
    assert (pair.avg_comments, pair.max_comments, pair.min_comments) == (3.0, 4, 2)
    assert pair.avg_self_comments == 0.5


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(0, 1)), min_size=1, max_size=8))
def test_stats_match_naive_recount(spec):
    trees = [(_thread(i, n, min(t, n)), y) for i, (n, t, y) in enumerate(spec)]
    report = corpus_stats(trees)
    total = report.groups["Total"]
    assert total.posts == len(trees)
    assert total.comments == sum(len(list(t.messages())) - 1 for t, _ in trees)
    assert total.self_comments == sum(sum(1 for m in t.comments() if m.author == "T") for t, _ in trees)
    assert total.post_words == 3 * len(trees)
    assert total.comment_words == 2 * total.comments


def test_word_count_uses_cleaned_tokens():
    assert word_count("hi [removed] https://a.b there\n") == 2
