"""Ranking and classification metrics plus the negative-sampling protocols."""
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Set, Tuple

import numpy as np


@dataclass(frozen=True)
class EvalProtocol:
    negatives_per_query: int = 50
    seed: int = 0
    filtered: bool = True


def directed_queries(triples, relation_count) -> np.ndarray:
    """``(head, augmented relation, answer)`` rows: every triple asked both ways.

    Row ``2i`` is ``(h, r, t)`` and row ``2i + 1`` is ``(t, r + R, h)``.
    """
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    out = np.empty((2 * len(t), 3), dtype=np.int64)
    out[0::2] = t
    out[1::2, 0] = t[:, 2]
    out[1::2, 1] = t[:, 1] + relation_count
    out[1::2, 2] = t[:, 0]
    return out


def known_answers(relation_count, *triple_sets) -> Dict[Tuple[int, int], Set[int]]:
    """Map ``(head, augmented relation)`` to every known answer, both directions."""
    out = defaultdict(set)
    for ts in triple_sets:
        for h, r, t in np.asarray(ts, dtype=np.int64).reshape(-1, 3).tolist():
            out[(h, r)].add(t)
            out[(t, r + relation_count)].add(h)
    return out


def sample_negatives(queries, entity_count, n, rng: np.random.Generator, known=None) -> List[np.ndarray]:
    """Up to ``n`` distinct negative answers per query, never the true answer.

    With ``known`` (from :func:`known_answers`) every known answer of the
    query is excluded as well.
    """
    out = []
    all_ents = np.arange(entity_count)
    for h, r, a in np.asarray(queries, dtype=np.int64).tolist():
        banned = {a}
        if known is not None:
            banned |= known.get((h, r), set())
        if len(banned) * 4 < entity_count and n * 4 < entity_count:
            picked = []
            seen = set(banned)
            while len(picked) < n:
                e = int(rng.integers(entity_count))
                if e not in seen:
                    seen.add(e)
                    picked.append(e)
            out.append(np.array(picked, dtype=np.int64))
        else:
            pool = np.setdiff1d(all_ents, np.fromiter(banned, dtype=np.int64))
            take = min(n, len(pool))
            out.append(np.sort(rng.choice(pool, size=take, replace=False)) if take else
                       np.zeros(0, dtype=np.int64))
    return out


def pessimistic_rank(pos_score, neg_scores) -> int:
    """1 + number of negatives scoring at least as high as the positive."""
    return 1 + int(np.count_nonzero(np.asarray(neg_scores) >= pos_score))


def hits_from_ranks(ranks, K=10) -> float:
    ranks = np.asarray(ranks)
    return float(np.mean(ranks <= K)) if len(ranks) else 0.0


def precision_recall_points(labels, scores):
    """Precision and recall at each distinct score threshold, high to low."""
    y = np.asarray(labels).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / max(int(y.sum()), 1)
    return precision, recall


def average_precision(labels, scores) -> float:
    """Step-wise area under the precision-recall curve: sum (R_i - R_{i-1}) P_i."""
    if not np.any(labels):
        return 0.0
    precision, recall = precision_recall_points(labels, scores)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def corrupt_triples(triples, entity_count, rng: np.random.Generator, known: Set[Tuple[int, int, int]] = None,
                    max_tries=100) -> np.ndarray:
    """One negative per triple, replacing the head or the tail with equal odds."""
    out = []
    for h, r, t in np.asarray(triples, dtype=np.int64).tolist():
        side = rng.integers(2)
        cand = (h, r, t)
        for _ in range(max_tries):
            e = int(rng.integers(entity_count))
            cand = (e, r, t) if side == 0 else (h, r, e)
            if cand != (h, r, t) and (known is None or cand not in known):
                break
        out.append(cand)
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


DEGREE_BUCKETS = ((0, 3), (3, 6), (6, None))


def degree_bucket(deg) -> str:
    for lo, hi in DEGREE_BUCKETS:
        if deg >= lo and (hi is None or deg < hi):
            return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"
    raise ValueError(deg)
