"""End-to-end acceptance checks; each prints one PASS/FAIL line with its measurement."""

import math
import random
import time

import pytest

from riskloom.bdi import SYMPTOMS, SymptomVector, assessment_report
from riskloom.conversation import build_tree, extract_relevant, serialize
from riskloom.corpus import SubjectRecord, Source, build_training_corpus, corpus_stats
from riskloom.dialogue import Speaker, interaction_stats, read_transcript, run_session
from riskloom.gateway import MockEvaluator, MockGateway, PersonaScript, ScriptedPersona
from riskloom.metrics import ErdeParams, decision_report, erde, latency_speed, ndcg_at_k, precision_at_k, rank_subjects
from riskloom.parsing import parse_agent_output, parse_evaluator_output
from riskloom.prompts import StrategyKind
from riskloom.report import fmt2, interaction_table
from riskloom.stream import DecisionLog, DecisionRecord

from conftest import FIXTURES, comment, post
from oracles import erde_bruteforce, ndcg_bruteforce, precision_bruteforce, random_log
from test_parsing import ERRORS, VARIANTS


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail, elapsed, budget):
        ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\ncriterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail} ({elapsed:.2f}s of {budget}s)")
        assert ok, detail

    return report


def reference_run_log():
    # 24 true positives flagged around k=3 (median 3), 76 false positives, no misses
    records = []
    truth = {}
    for i in range(100):
        subject = f"s{i:03d}"
        truth[subject] = int(i < 24)
        flag_at = (2, 3, 4)[i % 3] if i < 24 else 1 + i % 5
        for k in range(1, 6):
            records.append(DecisionRecord(subject, k, int(k >= flag_at), 0.9 if k >= flag_at else 0.1))
    return DecisionLog(records), truth


def test_criterion_1_reference_run_metrics(verdict):
    start = time.perf_counter()
    log, truth = reference_run_log()
    r = decision_report(log, truth)
    elapsed = time.perf_counter() - start
    ok = (
        r.precision == 0.24 and r.recall == 1.0 and r.latency_tp == 3
        and abs(r.speed - 0.99) <= 0.005 and abs(r.f1 - 0.39) <= 0.005 and abs(r.f_latency - 0.38) <= 0.01
        and (fmt2(r.precision), fmt2(r.recall), fmt2(r.f1), fmt2(r.latency_tp), fmt2(r.speed), fmt2(r.f_latency))
        == ("0.24", "1.00", "0.39", "3.00", "0.99", "0.38")
    )
    detail = f"P={r.precision} R={r.recall} F1={r.f1:.4f} latencyT={r.latency_tp} speed={r.speed:.4f} Flatency={r.f_latency:.4f}"
    verdict(1, "decision metrics match the reference run row", ok, detail, elapsed, 1)


def test_criterion_2_speed_boundaries(verdict):
    start = time.perf_counter()
    _, speed1 = latency_speed({"a": 1, "b": 1}, {"a": 1, "b": 1})
    _, speed2 = latency_speed({"a": 2}, {"a": 1})
    elapsed = time.perf_counter() - start
    ok = speed1 == 1.0 and fmt2(speed1) == "1.00" and fmt2(speed2) == "1.00" and speed2 < 1.0
    verdict(2, "speed at k=1 and k=2", ok, f"speed(k=1)={speed1!r} speed(k=2)={speed2:.6f} -> {fmt2(speed2)}", elapsed, 1)


def test_criterion_3_erde_oracle(verdict):
    rng = random.Random(20250101)
    start = time.perf_counter()
    worst = 0.0
    cases = 1000
    for _ in range(cases):
        log, truth = random_log(rng, max_subjects=50, max_rounds=100)
        fp = log.first_positive()
        for o in (5, 50):
            params = ErdeParams.standard(o, truth)
            worst = max(worst, abs(erde(fp, truth, params) - erde_bruteforce(fp, truth, o, params.c_fp)))
    elapsed = time.perf_counter() - start
    verdict(3, "closed-form ERDE5/ERDE50 equal brute force", worst <= 1e-12, f"{cases} logs, max |diff|={worst:.2e}", elapsed, 30)


def test_criterion_4_ranking_oracle(verdict):
    rng = random.Random(7)
    start = time.perf_counter()
    worst = 0.0
    cases = 1000
    for _ in range(cases):
        n = rng.randint(10, 60)
        scores = {f"s{i}": rng.random() for i in range(n)}
        truth = {s: rng.randint(0, 1) for s in scores}
        ranking = rank_subjects(scores)
        worst = max(
            worst,
            abs(precision_at_k(ranking, truth, 10) - precision_bruteforce(ranking, truth, 10)),
            abs(ndcg_at_k(ranking, truth, 10) - ndcg_bruteforce(ranking, truth, 10)),
        )
    perfect = [f"p{i}" for i in range(10)] + [f"n{i}" for i in range(40)]
    labels = {s: int(s.startswith("p")) for s in perfect}
    p10, ndcg10 = precision_at_k(perfect, labels, 10), ndcg_at_k(perfect, labels, 10)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and (fmt2(p10), fmt2(ndcg10)) == ("1.00", "1.00")
    verdict(4, "P@10/NDCG@10 equal brute force; perfect prefix scores 1.00", ok, f"{cases} rankings, max |diff|={worst:.2e}, perfect={p10}/{ndcg10}", elapsed, 10)


def volumetric_trees():
    """975 negative posts with 23,314 comments (max 72, min 0); 1,782 positive with 7,863 (max 49, min 0)."""

    def group(prefix, posts, comments, max_c):
        counts = [0] * posts
        counts[0], counts[1] = max_c, 0
        remaining = comments - max_c
        i = 2
        while remaining:
            take = min(remaining, max_c - 1)
            counts[i] += take
            remaining -= take
            i = 2 + (i - 1) % (posts - 2)
        trees = []
        for p, n in enumerate(counts):
            msgs = [post(f"{prefix}{p}", "T", "a post", 0)]
            msgs += [comment(f"{prefix}{p}c{j}", "O", "a reply", j + 1, f"{prefix}{p}") for j in range(n)]
            trees.append(build_tree(msgs, "T", f"{prefix}{p}"))
        return trees

    return [(t, 0) for t in group("n", 975, 23314, 72)] + [(t, 1) for t in group("p", 1782, 7863, 49)]


def test_criterion_5_corpus_arithmetic(verdict):
    start = time.perf_counter()
    make = lambda n, label, source, tag: [SubjectRecord(f"{tag}{i}", label, ["[MSG] [USER] TARGET x"], source) for i in range(n)]
    corpus, manifest = build_training_corpus(
        make(1782, 1, Source.SCRAPED_POSITIVE, "p"),
        make(975, 0, Source.SCRAPED_NEGATIVE, "n"),
        make(6000, 0, Source.PROVIDED, "v"),
        2757,
        seed=42,
        created_at=0,
    )
    negatives = sum(1 for r in corpus if r.label == 0)
    stats = corpus_stats(volumetric_trees()).groups
    neg, pos, total = stats["Negative"], stats["Positive"], stats["Total"]
    elapsed = time.perf_counter() - start
    ok = (
        len(corpus) == manifest.size == 5514 and negatives == 3732
        and abs(neg.avg_comments - 23.91) <= 0.01 and abs(pos.avg_comments - 4.41) <= 0.01
        and abs(total.avg_comments - 11.31) <= 0.01
        and (neg.max_comments, neg.min_comments, pos.max_comments, pos.min_comments) == (72, 0, 49, 0)
    )
    detail = (
        f"subjects={len(corpus)} negatives={negatives}; avg comments/post "
        f"neg={neg.avg_comments:.4f} pos={pos.avg_comments:.4f} total={total.avg_comments:.4f}"
    )
    verdict(5, "corpus sizes and volumetric averages", ok, detail, elapsed, 5)


GOLDEN_TARGET_IN_COMMENTS = (
    "[MSG] [USER] CONTEXT Exam stress Anyone else panicking? "
    "[MSG] [USER] CONTEXT Every single day. "
    "[MSG] [USER] TARGET Same here, I can't sleep at all. "
    "[MSG] [USER] CONTEXT Have you tried talking to someone?"
)
GOLDEN_TARGET_ONLY_POST = (
    "[MSG] [USER] TARGET Feeling empty I don't enjoy anything lately. "
    "[MSG] [USER] CONTEXT I'm sorry to hear that. "
    "[MSG] [USER] CONTEXT What changed? "
    "[MSG] [USER] CONTEXT Sending hugs."
)


def test_criterion_6_serialization_golden(verdict):
    start = time.perf_counter()
    in_comments = build_tree(
        [
            post("r", "A", "Anyone else panicking?\n", 1, title="Exam stress"),
            comment("c1", "B", "Every single day.", 2, "r"),
            comment("t1", "T", "Same here, I can't sleep at all. https://t.co/x", 3, "c1"),
            comment("x1", "C", "Have you tried talking to someone?", 4, "t1"),
            comment("x2", "D", "[deleted]", 5, "x1"),
            comment("s1", "E", "Good luck everyone!", 6, "r"),
        ],
        "T",
    )
    only_post = build_tree(
        [
            post("r", "T", "I don't enjoy anything lately.", 1, title="Feeling empty"),
            comment("c1", "A", "I'm sorry to hear that.", 2, "r"),
            comment("c2", "B", "What changed?", 3, "r"),
            comment("c3", "C", "Sending hugs.", 4, "r"),
            comment("g1", "D", "Same question.", 5, "c2"),
            comment("g2", "T", "Nothing really.", 6, "c1"),
        ][:5],
        "T",
    )
    a = serialize(extract_relevant(in_comments))
    b = serialize(extract_relevant(only_post))
    elapsed = time.perf_counter() - start
    ok = a == GOLDEN_TARGET_IN_COMMENTS and b == GOLDEN_TARGET_ONLY_POST
    verdict(6, "byte-exact serialization for both thread shapes", ok, f"target-in-comments={a == GOLDEN_TARGET_IN_COMMENTS} target-only-post={b == GOLDEN_TARGET_ONLY_POST}", elapsed, 1)


def test_criterion_7_dialogue_closed_loop(verdict):
    rng = random.Random(12345)
    vectors = [SymptomVector(tuple(rng.randint(0, 3) for _ in SYMPTOMS)) for _ in range(100)]
    vectors[0], vectors[1] = SymptomVector.zeros(), SymptomVector.from_mapping({"Sadness": 3, "Crying": 2})
    start = time.perf_counter()
    failures = []
    max_sent = 0
    min_replies = math.inf
    scores = {}
    for strategy in StrategyKind:
        preds = []
        for i, truth in enumerate(vectors):
            script = PersonaScript(f"persona{i}", truth)
            gateway = MockGateway(MockEvaluator(script.codebook(), script.aliases))
            vector, turns = run_session(strategy, script.name, gateway, ScriptedPersona(script))
            sent = sum(1 for t in turns if t.speaker is Speaker.AGENT)
            replies = sum(1 for t in turns if t.speaker is Speaker.PERSONA)
            max_sent, min_replies = max(max_sent, sent), min(min_replies, replies)
            if vector.scores != truth.scores:
                failures.append((strategy.value, i))
            preds.append(vector)
        scores[strategy.value] = assessment_report(preds, vectors)
    elapsed = time.perf_counter() - start
    perfect = all(v == 1.0 for s in scores.values() for v in s.values())
    ok = not failures and perfect and max_sent <= 21 and min_replies >= 2
    detail = f"{len(vectors)} personas x 3 strategies, mismatches={len(failures)}, max agent messages={max_sent}, min persona replies={min_replies}, metrics={scores}"
    verdict(7, "closed loop recovers ground truth", ok, detail, elapsed, 60)


def test_criterion_8_parser_robustness(verdict):
    start = time.perf_counter()
    accepted = rejected = 0
    bad = []
    for case in VARIANTS["agent"]:
        try:
            out = parse_agent_output(case["raw"], StrategyKind(case["strategy"])).to_json()
            good = "expect" in case and out == case["expect"]
            accepted += good
        except Exception as exc:  # noqa: BLE001
            good = "error" in case and isinstance(exc, ERRORS[case["error"]])
            rejected += good
        if not good:
            bad.append(case["raw"][:40])
    for case in VARIANTS["evaluator"]:
        try:
            out = parse_evaluator_output(case["raw"])
            good = "expect" in case and all(getattr(out, k) == v for k, v in case["expect"].items())
            accepted += good
        except Exception as exc:  # noqa: BLE001
            good = "error" in case and isinstance(exc, ERRORS[case["error"]])
            rejected += good
        if not good:
            bad.append(case["raw"][:40])
    elapsed = time.perf_counter() - start
    total = len(VARIANTS["agent"]) + len(VARIANTS["evaluator"])
    ok = total >= 30 and not bad
    verdict(8, "tolerant parsing with typed rejections", ok, f"{total} variants: {accepted} parsed, {rejected} rejected as expected, {len(bad)} wrong", elapsed, 1)


def test_criterion_9_interaction_stats(verdict):
    start = time.perf_counter()
    sessions = [read_transcript(p) for p in sorted((FIXTURES / "transcripts").glob("*.jsonl"))]
    stats = interaction_stats(sessions)
    table = interaction_table({"fixture": stats})
    elapsed = time.perf_counter() - start
    # hand count: 3 + 2 agent messages over 2 sessions; 33+32+19 and 25+17 characters
    ok = (
        stats.sessions == 2 and stats.mean_messages_per_run == 2.5 and stats.mean_chars_per_message == 126 / 5
        and "mean messages/run" in table and "mean chars/message" in table
    )
    verdict(9, "interaction statistics", ok, f"mean messages/run={stats.mean_messages_per_run} mean chars/message={stats.mean_chars_per_message}", elapsed, 1)
