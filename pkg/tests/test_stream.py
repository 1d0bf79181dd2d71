import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskloom.stream import (
    DecisionLog,
    DecisionRecord,
    DuplicateSubject,
    MissingSubject,
    ProtocolError,
    RunNotFinished,
    RunState,
    UnknownSubject,
    run_stream,
    serve_jsonl,
)


def zeros(rnd):
    return [DecisionRecord(s, rnd.k, 0, 0.0) for s in rnd.subjects]


def test_round_sizes_hand_trace():
    state = RunState({"a": ["1", "2", "3"], "b": ["x"]})
    sizes = []
    while (rnd := state.next_round()) is not None:
        sizes.append(len(rnd.items))
        state.submit_decisions(zeros(rnd))
    assert sizes == [2, 1, 1]


def test_empty_corpus_ends_immediately():
    state = RunState({})
    assert state.next_round() is None
    assert len(state.transcript()) == 0


def test_next_round_twice_is_protocol_error():
    state = RunState({"a": ["1"]})
    state.next_round()
    with pytest.raises(ProtocolError):
        state.next_round()


def test_sticky_positive():
    state = RunState({"a": ["1", "2", "3", "4"]})
    for k, d in enumerate([0, 0, 1, 0], start=1):
        state.next_round()
        state.submit_decisions([DecisionRecord("a", k, d, 0.5)])
    state.next_round()
    log = state.transcript()
    assert [r.decision for r in log.series("a")] == [0, 0, 1, 1]
    assert log.first_positive() == {"a": 3}


def test_submission_contract_errors():
    state = RunState({"a": ["1"], "b": ["2"]})
    state.next_round()
    with pytest.raises(MissingSubject):
        state.submit_decisions([DecisionRecord("a", 1, 0, 0.1)])
    with pytest.raises(UnknownSubject):
        state.submit_decisions([DecisionRecord("a", 1, 0, 0.1), DecisionRecord("zz", 1, 0, 0.1)])
    with pytest.raises(DuplicateSubject):
        state.submit_decisions([DecisionRecord("a", 1, 0, 0.1), DecisionRecord("a", 1, 0, 0.1)])
    with pytest.raises(ProtocolError):
        state.submit_decisions([DecisionRecord("a", 1, 0, 1.5), DecisionRecord("b", 1, 0, 0.1)])
    # a rejected batch leaves nothing behind
    assert len(state.log) == 0
    state.submit_decisions(zeros(state.pending))


def test_transcript_before_end():
    state = RunState({"a": ["1"]})
    with pytest.raises(RunNotFinished):
        state.transcript()


def test_all_zero_run_and_record_count():
    S, R = 3, 4
    log = run_stream(RunState({f"s{i}": ["w"] * R for i in range(S)}), zeros)
    assert len(log) == S * R
    assert all(math.isinf(k) for k in log.first_positive().values())


def test_single_subject_first_positive():
    log = run_stream(RunState({"a": ["w"]}), lambda r: [DecisionRecord("a", r.k, 1, 1.0)])
    assert log.first_positive() == {"a": 1}


@given(st.dictionaries(st.text("ab", min_size=1, max_size=3), st.integers(0, 5), max_size=6), st.randoms(use_true_random=False))
def test_stream_invariants(lengths, rng):
    writings = {s: [f"{s}-{i}" for i in range(n)] for s, n in lengths.items()}
    seen = {s: [] for s in writings}
    sizes = []

    def client(rnd):
        sizes.append(len(rnd.items))
        for s, text in rnd.items:
            seen[s].append(text)
        return [DecisionRecord(s, rnd.k, rng.randint(0, 1), rng.random()) for s in rnd.subjects]

    log = run_stream(RunState(writings), client)
    assert seen == writings
    assert sizes == sorted(sizes, reverse=True)
    for s in log.subjects():
        series = log.series(s)
        assert [r.k for r in series] == list(range(1, len(series) + 1))
        decisions = [r.decision for r in series]
        assert decisions == sorted(decisions)


def test_deterministic_replay():
    writings = {"a": ["sad", "ok"], "b": ["fine"]}
    client = lambda r: [DecisionRecord(s, r.k, int(len(t) == 3), len(t) / 10) for s, t in r.items]
    assert run_stream(RunState(writings), client) == run_stream(RunState(writings), client)


def test_log_roundtrip_and_scores_at(tmp_path):
    log = DecisionLog([DecisionRecord("a", 1, 0, 0.2), DecisionRecord("a", 2, 1, 0.9), DecisionRecord("b", 1, 0, 0.4)])
    log.write(tmp_path / "l.jsonl")
    assert DecisionLog.read(tmp_path / "l.jsonl") == log
    assert log.scores_at(1) == {"a": 0.2, "b": 0.4}
    assert log.scores_at(100) == {"a": 0.9, "b": 0.4}


def test_wire_mode():
    state = RunState({"a": ["hi", "there"]})
    replies = io.StringIO(
        json.dumps({"k": 1, "decisions": [{"subject": "a", "decision": 0, "score": 0.1}]}) + "\n"
        + json.dumps({"k": 2, "decisions": [{"subject": "a", "decision": 1, "score": 0.8}]}) + "\n"
    )
    out = io.StringIO()
    log = serve_jsonl(state, replies, out)
    lines = [json.loads(x) for x in out.getvalue().splitlines()]
    assert lines[0] == {"k": 1, "items": [{"subject": "a", "text": "hi"}]}
    assert lines[-1] == {"end": True}
    assert log.first_positive() == {"a": 2}


def test_wire_mode_client_hangs_up():
    with pytest.raises(ProtocolError):
        serve_jsonl(RunState({"a": ["hi"]}), io.StringIO(""), io.StringIO())
