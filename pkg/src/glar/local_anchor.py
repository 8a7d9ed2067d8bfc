"""Local anchors of an opening subgraph and the per-node features built from them.

Anchor index 0 is the center node. Anchor ``1 + r`` is "reached from the
center through augmented relation ``r``"; the vocabulary is fixed at
``1 + 2R`` columns so feature layouts line up across subgraphs and graphs.
"""
from dataclasses import dataclass
from typing import Dict

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .kg import AugmentedGraph
from .labeling import anchor_hop_counts
from .subgraph import OpeningSubgraph


@dataclass(frozen=True)
class LocalAnchorSet:
    vocab_size: int
    relational_anchors: Dict[int, int]
    anchor_nodes: Dict[int, np.ndarray]

    @property
    def size(self) -> int:
        return 1 + len(self.relational_anchors)

    def occurrences(self):
        """Parallel ``(node, anchor index)`` arrays, one entry per realization."""
        nodes, dims = [], []
        for idx, members in sorted(self.anchor_nodes.items()):
            nodes.append(members)
            dims.append(np.full(len(members), idx, dtype=np.int64))
        return np.concatenate(nodes), np.concatenate(dims)


@dataclass(frozen=True)
class LocalFeatureBundle:
    structure: np.ndarray        # (n, J + 1, vocab)
    distance_onehot: np.ndarray  # (n, k + 2)

    @property
    def J(self):
        return self.structure.shape[1] - 1

    def flat(self) -> np.ndarray:
        """``[v^0 | v^1 | ... | v^J | v^d]`` per node, as float64."""
        n = self.structure.shape[0]
        return np.concatenate([self.structure.reshape(n, -1), self.distance_onehot], axis=1).astype(np.float64)


def select_local_anchors(sub: OpeningSubgraph, augmented_relation_count: int) -> LocalAnchorSet:
    t = sub.triples
    from_center = t[t[:, 0] == 0]
    anchor_nodes = {0: np.array([0], dtype=np.int64)}
    relational = {}
    for r in np.unique(from_center[:, 1]).tolist():
        relational[r] = 1 + r
        anchor_nodes[1 + r] = np.unique(from_center[from_center[:, 1] == r, 2])
    return LocalAnchorSet(1 + augmented_relation_count, relational, anchor_nodes)


def label_structure_features(sub: OpeningSubgraph, anchors: LocalAnchorSet, J: int) -> np.ndarray:
    nodes, dims = anchors.occurrences()
    return anchor_hop_counts(sub.adjacency, nodes, dims, anchors.vocab_size, J)


def label_distance_features(sub: OpeningSubgraph) -> np.ndarray:
    """One-hot hop distance from the center; column ``k + 1`` is the out-of-range bucket."""
    d = np.minimum(sub.distances, sub.k + 1)
    out = np.zeros((sub.node_count, sub.k + 2), dtype=np.int64)
    out[np.arange(sub.node_count), d] = 1
    return out


def local_feature_width(augmented_relation_count: int, k: int, J: int) -> int:
    return (J + 1) * (1 + augmented_relation_count) + k + 2


class LocalAnchorFeaturizer(TransformerMixin, BaseEstimator):
    """Transform an :class:`OpeningSubgraph` into a :class:`LocalFeatureBundle`.

    ``fit`` only records the relation vocabulary width of the graph.
    """

    def __init__(self, J=2):
        self.J = J

    def fit(self, graph: AugmentedGraph, y=None):
        if self.J < 0:
            raise ValueError("J must be >= 0")
        self.augmented_relation_count_ = graph.augmented_relation_count
        return self

    def transform(self, sub: OpeningSubgraph) -> LocalFeatureBundle:
        check_is_fitted(self, "augmented_relation_count_")
        anchors = select_local_anchors(sub, self.augmented_relation_count_)
        return LocalFeatureBundle(label_structure_features(sub, anchors, self.J),
                                  label_distance_features(sub))
