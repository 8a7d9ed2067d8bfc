"""Training entry point, ranking / classification evaluation and the
reasoning-time benchmark."""
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .estimator import GLAR
from .evaluation import (DEGREE_BUCKETS, EvalProtocol, average_precision, corrupt_triples, degree_bucket,
                         directed_queries, hits_from_ranks, known_answers, pessimistic_rank, sample_negatives)
from .kg import DatasetSplit, augment_with_inverses, known_triples

logger = logging.getLogger(__name__)


def train(split: DatasetSplit, config: RunConfig) -> GLAR:
    config.validate()
    model = GLAR(**config.estimator_params())
    return model.fit(split.train_graph, valid_triples=split.valid_triples)


def ranking_candidates(split: DatasetSplit, protocol: EvalProtocol):
    """Directed test queries and their candidate lists (true answer first)."""
    g = split.test_graph
    queries = directed_queries(split.test_triples, g.relation_count)
    known = known_answers(g.relation_count, g.triples, split.test_triples) if protocol.filtered else None
    negs = sample_negatives(queries, g.entity_count, protocol.negatives_per_query,
                            np.random.default_rng(protocol.seed), known)
    return queries, [np.r_[q[2], n] for q, n in zip(queries, negs)]


def _exclusions(split: DatasetSplit, queries):
    # the base triple behind each directed query; hidden from its own subgraph if present
    R = split.test_graph.relation_count
    out = []
    for h, r, a in queries.tolist():
        out.append((h, r, a) if r < R else (a, r - R, h))
    return out


def query_ranks(model: GLAR, split: DatasetSplit, protocol: EvalProtocol, use_cache=True) -> np.ndarray:
    queries, cands = ranking_candidates(split, protocol)
    scores = model.score_queries(split.test_graph, queries[:, :2], cands, use_cache=use_cache,
                                 exclude_triples=_exclusions(split, queries))
    return np.array([pessimistic_rank(s[0], s[1:]) for s in scores], dtype=np.int64)


def hits_at_k(model: GLAR, split: DatasetSplit, protocol: EvalProtocol = EvalProtocol(), K=10) -> float:
    return hits_from_ranks(query_ranks(model, split, protocol), K)


def hits_by_degree(model: GLAR, split: DatasetSplit, protocol: EvalProtocol = EvalProtocol(), K=10) -> Dict:
    """Hits@K per answer-entity degree bucket."""
    queries, _ = ranking_candidates(split, protocol)
    ranks = query_ranks(model, split, protocol)
    deg = split.test_graph.degrees
    out = {}
    for lo, hi in DEGREE_BUCKETS:
        name = degree_bucket(lo)
        mask = np.array([degree_bucket(deg[a]) == name for a in queries[:, 2]], dtype=bool)
        out[name] = {"queries": int(mask.sum()),
                     f"hits@{K}": hits_from_ranks(ranks[mask], K) if mask.any() else None}
    return out


def auc_pr(model: GLAR, split: DatasetSplit, seed=0) -> float:
    """Average precision with one head-or-tail corruption per test triple."""
    g = split.test_graph
    known = known_triples(g.triples, split.test_triples)
    neg = corrupt_triples(split.test_triples, g.entity_count, np.random.default_rng(seed), known)
    triples = np.concatenate([split.test_triples, neg])
    labels = np.r_[np.ones(len(split.test_triples)), np.zeros(len(neg))]
    scores = model.predict_proba(g, triples)
    return average_precision(labels, scores)


def auc_pr_seeds(model: GLAR, split: DatasetSplit, seeds: Sequence[int]) -> Dict:
    values = [auc_pr(model, split, s) for s in seeds]
    return {"mean": float(np.mean(values)), "per_seed": values, "seeds": list(seeds)}


def evaluate(model: GLAR, split: DatasetSplit, config: RunConfig, group_by_degree=False):
    """Metrics dict (deterministic under the config seed) and wall times (kept apart)."""
    protocol = EvalProtocol(config.negatives_eval, config.seed, config.filtered_eval)
    t0 = time.perf_counter()
    hits = hits_at_k(model, split, protocol, 10)
    t1 = time.perf_counter()
    auc = auc_pr_seeds(model, split, [config.seed + i for i in range(config.auc_seeds)])
    t2 = time.perf_counter()
    out = {
        "dataset": split.name,
        "version": split.name.rsplit("_", 1)[-1] if "_" in split.name else "",
        "seed": config.seed,
        "negatives": config.negatives_eval,
        "filtered": config.filtered_eval,
        "hits@10": hits,
        "auc_pr": auc["mean"],
        "auc_pr_per_seed": auc["per_seed"],
    }
    if group_by_degree:
        out["hits@10_by_degree"] = hits_by_degree(model, split, protocol, 10)
    return out, {"hits_s": t1 - t0, "auc_pr_s": t2 - t1}


@dataclass
class BenchRow:
    version: str
    negatives: int
    seconds: float
    extraction_s: float
    labeling_s: float
    forward_s: float
    queries: int
    candidates: int
    extractions: int
    forward_queries: int

    @property
    def component_s(self):
        return self.extraction_s + self.labeling_s + self.forward_s


@dataclass
class BenchReport:
    rows: List[BenchRow] = field(default_factory=list)

    def ratio(self) -> Optional[float]:
        """Time at the largest negatives count over time at the smallest."""
        if len(self.rows) < 2:
            return None
        lo = min(self.rows, key=lambda r: r.negatives)
        hi = max(self.rows, key=lambda r: r.negatives)
        return hi.seconds / lo.seconds

    CSV_COLUMNS = ("version", "negatives", "seconds", "extraction_s", "labeling_s", "forward_s")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_COLUMNS)
            for r in self.rows:
                w.writerow([r.version, r.negatives] + [f"{getattr(r, c):.6f}" for c in self.CSV_COLUMNS[2:]])


def bench_reasoning(model: GLAR, split: DatasetSplit, negatives_list: Sequence[int], seed=0,
                    filtered=True) -> BenchReport:
    """Time full test-set scoring for each negatives count.

    Candidate sampling happens before the clock starts. The subgraph cache
    is off, so every directed query is extracted and labeled exactly once.
    """
    if not len(negatives_list):
        raise ValueError("negatives_list must not be empty")
    report = BenchReport()
    test_graph = augment_with_inverses(split.test_graph)
    for n in negatives_list:
        protocol = EvalProtocol(int(n), seed, filtered)
        queries, cands = ranking_candidates(split, protocol)
        excl = _exclusions(split, queries)
        model._rebuild_runtime()
        c = model.counters_
        t0 = time.perf_counter()
        model.context(test_graph, refresh=True)
        model.score_queries(test_graph, queries[:, :2], cands, use_cache=False, exclude_triples=excl)
        elapsed = time.perf_counter() - t0
        report.rows.append(BenchRow(split.name, int(n), elapsed, c.extraction_s, c.labeling_s, c.forward_s,
                                    len(queries), int(sum(len(x) for x in cands)), c.extractions,
                                    c.forward_queries))
        logger.info("bench negatives=%d: %.3fs (%d extractions)", n, elapsed, c.extractions)
    model._rebuild_runtime()
    return report


def metrics_json(metrics: Dict) -> str:
    return json.dumps(metrics, sort_keys=True, indent=1)
