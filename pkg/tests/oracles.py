"""Independent brute-force reference implementations used as test oracles."""

import math
import random

from riskloom.stream import DecisionLog, DecisionRecord


def erde_bruteforce(first_positive, truth, o, c_fp, c_fn=1.0, c_tp=1.0):
    total = 0.0
    for subject, label in truth.items():
        k = first_positive[subject]
        flagged = k != math.inf
        if flagged and label == 0:
            total += c_fp
        elif not flagged and label == 1:
            total += c_fn
        elif flagged and label == 1:
            total += c_tp * (1 - 1 / (1 + math.exp(k - o)))
    return total / len(truth)


def confusion(first_positive, truth):
    tp = sum(1 for s, y in truth.items() if y == 1 and first_positive[s] != math.inf)
    fp = sum(1 for s, y in truth.items() if y == 0 and first_positive[s] != math.inf)
    fn = sum(1 for s, y in truth.items() if y == 1 and first_positive[s] == math.inf)
    return tp, fp, fn


def dcg_bruteforce(rels):
    total = 0.0
    for position in range(1, len(rels) + 1):
        total += rels[position - 1] / math.log2(position + 1)
    return total


def ndcg_bruteforce(ranking, truth, k):
    rels = [truth[s] for s in ranking]
    ideal = dcg_bruteforce(sorted(rels, reverse=True)[:k])
    return dcg_bruteforce(rels[:k]) / ideal if ideal else 0.0


def precision_bruteforce(ranking, truth, k):
    hits = 0
    for s in ranking[:k]:
        if truth[s] == 1:
            hits += 1
    return hits / k


def random_log(rng: random.Random, max_subjects=50, max_rounds=100):
    """A sticky-positive decision log plus labels."""
    n = rng.randint(1, max_subjects)
    rounds = rng.randint(1, max_rounds)
    truth = {f"s{i:02d}": rng.randint(0, 1) for i in range(n)}
    records = []
    for s in truth:
        flag_at = rng.randint(1, rounds) if rng.random() < 0.6 else None
        for k in range(1, rounds + 1):
            decision = int(flag_at is not None and k >= flag_at)
            records.append(DecisionRecord(s, k, decision, rng.random()))
    return DecisionLog(records), truth
