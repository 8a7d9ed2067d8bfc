"""sklearn-style estimator wrapping featurization, training and scoring."""
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .autodiff import Tensor
from .evaluation import (EvalProtocol, directed_queries, hits_from_ranks, known_answers,
                         pessimistic_rank, sample_negatives)
from .exceptions import NumericError, ParameterError
from .global_anchor import GlobalAnchorFeaturizer, GlobalFeatureBundle
from .kg import AugmentedGraph, KnowledgeGraph, augment_with_inverses, check_triples
from .local_anchor import LocalAnchorFeaturizer, local_feature_width
from .model import ModelDims, ModelParams, QueryBatch, forward, global_stream, loss_from_logits
from .subgraph import OpeningSubgraph, extract_opening_subgraph

logger = logging.getLogger(__name__)


@dataclass
class GraphContext:
    graph: AugmentedGraph
    features: GlobalFeatureBundle
    relational: Tensor
    structure: Tensor
    triple_set: frozenset


class Counters:
    def __init__(self):
        self.reset()

    def reset(self):
        self.extractions = 0
        self.labelings = 0
        self.forward_queries = 0
        self.forward_passes = 0
        self.cache_hits = 0
        self.extraction_s = 0.0
        self.labeling_s = 0.0
        self.forward_s = 0.0

    def as_dict(self):
        return dict(vars(self))


class GLAR(BaseEstimator):
    """Inductive link predictor over opening subgraphs with local and global anchors.

    ``fit`` takes the training :class:`KnowledgeGraph`; scoring methods take
    any graph over the same relation vocabulary, including one whose
    entities were never seen in training.
    """

    def __init__(self, k=6, J=2, n_clusters=100, n_layers=2, dim=32, batch_size=16, learning_rate=1e-3,
                 max_epochs=50, patience=10, negatives_train=1, negatives_eval=50, valid_max_queries=500,
                 relational_multiplicity=True, eval_batch_size=64, cache_size=512, random_state=0):
        self.k = k
        self.J = J
        self.n_clusters = n_clusters
        self.n_layers = n_layers
        self.dim = dim
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.negatives_train = negatives_train
        self.negatives_eval = negatives_eval
        self.valid_max_queries = valid_max_queries
        self.relational_multiplicity = relational_multiplicity
        self.eval_batch_size = eval_batch_size
        self.cache_size = cache_size
        self.random_state = random_state

    # -- setup ---------------------------------------------------------------

    def _validate_params(self):
        for name in ("k", "n_clusters", "n_layers", "dim", "batch_size", "negatives_train", "eval_batch_size"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.J < 0:
            raise ParameterError("J must be >= 0")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")

    def _setup(self, train_graph: AugmentedGraph):
        self.relation_count_ = train_graph.relation_count
        self.relation_labels_ = list(train_graph.base.relation_labels)
        self.local_featurizer_ = LocalAnchorFeaturizer(self.J).fit(train_graph)
        self.dims_ = ModelDims(
            augmented_relation_count=train_graph.augmented_relation_count,
            local_width=local_feature_width(train_graph.augmented_relation_count, self.k, self.J),
            global_struct_width=(self.J + 1) * self.n_clusters,
            dim=self.dim, n_layers=self.n_layers)
        self.counters_ = Counters()
        self._cache = OrderedDict()
        self._contexts = {}

    def _rebuild_runtime(self):
        self.counters_ = Counters()
        self._cache = OrderedDict()
        self._contexts = {}

    def context(self, graph, refresh=False) -> GraphContext:
        """Global features of ``graph`` under the fitted centroids (memoized)."""
        check_is_fitted(self, "params_")
        aug = graph if isinstance(graph, AugmentedGraph) else augment_with_inverses(graph)
        if aug.relation_count != self.relation_count_:
            raise ParameterError(f"graph has {aug.relation_count} relations, model expects {self.relation_count_}")
        key = id(aug.base)
        if not refresh and key in self._contexts and self._contexts[key][0] is aug.base:
            return self._contexts[key][1]
        t0 = time.perf_counter()
        feats = self.global_featurizer_.transform(aug)
        self.counters_.labeling_s += time.perf_counter() - t0
        ctx = GraphContext(aug, feats, Tensor(feats.relational), Tensor(feats.structure),
                           frozenset(map(tuple, aug.base.triples.tolist())))
        self._contexts = {key: (aug.base, ctx)}
        return ctx

    # -- featurization -------------------------------------------------------

    def featurize_query(self, ctx: GraphContext, head: int, exclude=None, use_cache=True):
        """Opening subgraph of ``head`` and its flattened local features.

        ``exclude`` is a base triple removed from the graph for this query
        (ignored when it is not in the graph).
        """
        if exclude is not None and tuple(exclude) not in ctx.triple_set:
            exclude = None
        key = (id(ctx), int(head), self.k, None if exclude is None else tuple(exclude))
        if use_cache and key in self._cache:
            self._cache.move_to_end(key)
            self.counters_.cache_hits += 1
            return self._cache[key]
        c = self.counters_
        t0 = time.perf_counter()
        sub = extract_opening_subgraph(ctx.graph, int(head), self.k,
                                       exclude=None if exclude is None else [exclude])
        t1 = time.perf_counter()
        feats = self.local_featurizer_.transform(sub).flat()
        t2 = time.perf_counter()
        c.extractions += 1
        c.labelings += 1
        c.extraction_s += t1 - t0
        c.labeling_s += t2 - t1
        if use_cache and self.cache_size:
            self._cache[key] = (sub, feats)
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return sub, feats

    # -- training ------------------------------------------------------------

    def fit(self, X: KnowledgeGraph, y=None, valid_triples=None):
        """Train on graph ``X``; ``valid_triples`` (over ``X``) drive early stopping."""
        self._validate_params()
        graph = augment_with_inverses(X)
        if X.triple_count == 0:
            raise ParameterError("cannot fit on an empty graph")
        rng = np.random.default_rng(self.random_state)
        self._setup(graph)
        self.global_featurizer_ = GlobalAnchorFeaturizer(
            self.n_clusters, self.J, self.relational_multiplicity, random_state=self.random_state).fit(graph)
        self.params_ = ModelParams.initialize(self.dims_, rng)
        ctx = self.context(graph)
        opt = ad.Adam(self.params_, learning_rate=self.learning_rate)

        queries = directed_queries(X.triples, X.relation_count)
        base_of = np.repeat(X.triples, 2, axis=0)
        valid = None if valid_triples is None or not len(valid_triples) else check_triples(valid_triples, X)
        self.loss_history_: List[float] = []
        self.valid_history_: List[float] = []
        best, best_values, stale = -1.0, None, 0
        for epoch in range(self.max_epochs):
            order = rng.permutation(len(queries))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                try:
                    total += self._train_step(ctx, queries[idx], base_of[idx], opt, rng)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch + 1}, batch at {start}: {exc}") from exc
            epoch_loss = total / len(queries)
            if not np.isfinite(epoch_loss):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}")
            self.loss_history_.append(epoch_loss)
            msg = f"epoch {epoch + 1}: loss {epoch_loss:.5f}"
            if valid is not None:
                score = self._validation_hits(graph, valid)
                self.valid_history_.append(score)
                msg += f", valid hits@10 {score:.4f}"
                if score > best:
                    best, best_values, stale = score, self.params_.copy_values(), 0
                else:
                    stale += 1
            logger.info(msg)
            if valid is not None and stale >= self.patience:
                break
        if best_values is not None:
            self.params_.load_values(best_values)
        self.n_epochs_ = len(self.loss_history_)
        self._rebuild_runtime()
        return self

    def _train_step(self, ctx: GraphContext, queries, base_triples, opt, rng) -> float:
        # the global pass sees the whole training graph; each query's own
        # triple is hidden from its subgraph, as at evaluation time
        g = ctx.graph
        layers = global_stream(g, ctx.relational, ctx.structure, self.params_)
        subs, feats = [], []
        for (h, _, _), base in zip(queries.tolist(), base_triples.tolist()):
            sub = extract_opening_subgraph(g, h, self.k, exclude=[base])
            subs.append(sub)
            feats.append(self.local_featurizer_.transform(sub).flat())
        n_ent = g.entity_count
        cands = []
        for _, _, a in queries.tolist():
            negs = rng.integers(n_ent - 1, size=self.negatives_train)
            negs = negs + (negs >= a)  # uniform over entities other than the answer
            cands.append(np.r_[a, negs])
        batch = QueryBatch.build(subs, feats, queries[:, 1], cands)
        state = forward(self.params_, batch, layers)
        width = 1 + self.negatives_train
        logits = state.logits
        pos = ad.gather(logits, np.arange(0, len(cands) * width, width))
        neg_idx = np.setdiff1d(np.arange(len(cands) * width), np.arange(0, len(cands) * width, width))
        neg = ad.gather(logits, neg_idx)
        value = loss_from_logits(pos, neg)
        value.backward()
        opt.step()
        return float(value.values[0, 0])

    def _validation_hits(self, graph: AugmentedGraph, valid) -> float:
        protocol = EvalProtocol(self.negatives_eval, seed=self.random_state, filtered=True)
        queries = directed_queries(valid, graph.relation_count)
        if self.valid_max_queries and len(queries) > self.valid_max_queries:
            pick = np.random.default_rng(protocol.seed).choice(len(queries), self.valid_max_queries, replace=False)
            queries = queries[np.sort(pick)]
        known = known_answers(graph.relation_count, graph.base.triples, valid)
        negs = sample_negatives(queries, graph.entity_count, protocol.negatives_per_query,
                                np.random.default_rng(protocol.seed), known)
        scores = self.score_queries(graph, queries[:, :2], [np.r_[q[2], n] for q, n in zip(queries, negs)],
                                    use_cache=False)
        self._rebuild_runtime()
        return hits_from_ranks([pessimistic_rank(s[0], s[1:]) for s in scores], 10)

    # -- scoring -------------------------------------------------------------

    def score_queries(self, graph, queries, candidates: Sequence[Sequence[int]], use_cache=True,
                      exclude_triples=None) -> List[np.ndarray]:
        """Score candidate answers for ``(head, augmented relation)`` queries.

        One opening subgraph and one global-local pass serve all candidates
        of a query. ``exclude_triples`` gives, per query, a base triple to
        hide from its subgraph.
        """
        check_is_fitted(self, "params_")
        ctx = self.context(graph)
        queries = np.asarray(queries, dtype=np.int64).reshape(-1, 2)
        if len(queries) != len(candidates):
            raise ValueError("one candidate list per query is required")
        if len(queries) and (queries[:, 0].max() >= ctx.graph.entity_count or queries.min() < 0
                             or queries[:, 1].max() >= self.dims_.augmented_relation_count):
            raise IndexError("query id out of range")
        c = self.counters_
        t0 = time.perf_counter()
        layers = [Tensor(t.values) for t in global_stream(ctx.graph, ctx.relational, ctx.structure, self.params_)]
        c.forward_s += time.perf_counter() - t0
        out = []
        for start in range(0, len(queries), self.eval_batch_size):
            chunk = range(start, min(start + self.eval_batch_size, len(queries)))
            subs, feats = [], []
            for i in chunk:
                ex = None if exclude_triples is None else exclude_triples[i]
                sub, f = self.featurize_query(ctx, queries[i, 0], exclude=ex, use_cache=use_cache)
                subs.append(sub)
                feats.append(f)
            t0 = time.perf_counter()
            cands = [np.asarray(candidates[i], dtype=np.int64) for i in chunk]
            batch = QueryBatch.build(subs, feats, queries[list(chunk), 1], cands)
            scores = forward(self.params_, batch, layers).scores
            bounds = np.cumsum([len(x) for x in cands])[:-1]
            out.extend(np.split(scores, bounds))
            c.forward_s += time.perf_counter() - t0
            c.forward_passes += 1
            c.forward_queries += len(chunk)
        return out

    def predict_proba(self, graph, triples) -> np.ndarray:
        """Plausibility of each ``(h, r, t)`` via the query ``(h, r, ?)``."""
        g = graph.base if isinstance(graph, AugmentedGraph) else graph
        t = check_triples(triples, g, augmented=True)
        scores = self.score_queries(graph, t[:, :2], [[x] for x in t[:, 2]])
        return np.array([s[0] for s in scores])

    def predict(self, graph, triples, threshold=0.5) -> np.ndarray:
        """Boolean plausibility decision per triple."""
        return self.predict_proba(graph, triples) >= threshold

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        from .checkpoint import save_checkpoint
        return save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "GLAR":
        from .checkpoint import load_checkpoint
        return load_checkpoint(path)
