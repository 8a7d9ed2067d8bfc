"""Global anchors: cluster entities by incident-relation profile, keep the
highest-degree member of each cluster, then label every entity with hop
counts to those anchors.

Centroids are fitted on the training graph only and reused to pick anchors
on the test graph, so nothing here depends on entity identity.
"""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ParameterError
from .kg import AugmentedGraph, KnowledgeGraph
from .labeling import anchor_hop_counts


def relational_features(g: AugmentedGraph, multiplicity=True) -> np.ndarray:
    """Row ``n`` counts the augmented relations on edges leaving ``n``."""
    counts = np.zeros((g.entity_count, g.augmented_relation_count), dtype=np.int64)
    np.add.at(counts, (g.src, g.rel), 1)
    if not multiplicity:
        counts = (counts > 0).astype(np.int64)
    return counts


def normalize_rows(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def _sq_distances(X, centers):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd's k-means with k-means++ seeding.

    ``inertia_history_`` records the within-cluster sum of squares after the
    seeding assignment and after every Lloyd iteration. A cluster that loses
    all members keeps its previous centroid.
    """

    def __init__(self, n_clusters=8, max_iter=100, tol=1e-6, random_state=None):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _init_centers(self, X, rng):
        n = len(X)
        centers = np.empty((self.n_clusters, X.shape[1]))
        centers[0] = X[rng.integers(n)]
        closest = _sq_distances(X, centers[:1])[:, 0]
        for i in range(1, self.n_clusters):
            total = closest.sum()
            idx = rng.choice(n, p=closest / total) if total > 0 else rng.integers(n)
            centers[i] = X[idx]
            closest = np.minimum(closest, _sq_distances(X, centers[i:i + 1])[:, 0])
        return centers

    @staticmethod
    def _inertia(X, centers, labels):
        diff = X - centers[labels]
        return float((diff * diff).sum())

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.n_clusters < 1:
            raise ParameterError("n_clusters must be >= 1")
        if self.n_clusters > len(X):
            raise ParameterError(f"n_clusters={self.n_clusters} exceeds the {len(X)} samples")
        rng = np.random.default_rng(self.random_state)
        centers = self._init_centers(X, rng)
        labels = _sq_distances(X, centers).argmin(1)
        history = [self._inertia(X, centers, labels)]
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            sums = np.zeros_like(centers)
            np.add.at(sums, labels, X)
            sizes = np.bincount(labels, minlength=self.n_clusters)
            filled = sizes > 0
            centers[filled] = sums[filled] / sizes[filled, None]
            new_labels = _sq_distances(X, centers).argmin(1)
            # keep the old label on exact ties so the objective cannot rise
            d_new = ((X - centers[new_labels]) ** 2).sum(1)
            d_old = ((X - centers[labels]) ** 2).sum(1)
            new_labels = np.where(d_old <= d_new, labels, new_labels)
            history.append(self._inertia(X, centers, new_labels))
            stable = np.array_equal(new_labels, labels)
            labels = new_labels
            prev = history[-2]
            if stable or (prev > 0 and (prev - history[-1]) / prev < self.tol) or history[-1] == 0:
                break
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = history[-1]
        self.inertia_history_ = history
        self.n_iter_ = n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return _sq_distances(X, self.cluster_centers_).argmin(1)


def fit_clusters(features, m, seed=0, max_iter=100, tol=1e-6) -> KMeans:
    """Fit k-means on L2-normalized relational features."""
    return KMeans(m, max_iter=max_iter, tol=tol, random_state=seed).fit(normalize_rows(features))


@dataclass(frozen=True)
class GlobalAnchorSet:
    anchors: np.ndarray     # (m,) entity id per cluster, -1 for an empty cluster
    assignment: np.ndarray  # (E,) cluster label per entity

    @property
    def m(self):
        return len(self.anchors)


def top_degree(members, degrees) -> int:
    """Member with the largest degree; ties go to the lowest id."""
    members = np.asarray(members)
    order = np.lexsort((members, -degrees[members]))
    return int(members[order[0]])


def select_global_anchors(model: KMeans, g: KnowledgeGraph, features) -> GlobalAnchorSet:
    assignment = model.predict(normalize_rows(features)) if g.entity_count else np.zeros(0, dtype=np.int64)
    m = len(model.cluster_centers_)
    anchors = np.full(m, -1, dtype=np.int64)
    deg = g.degrees
    for c in range(m):
        members = np.flatnonzero(assignment == c)
        if len(members):
            anchors[c] = top_degree(members, deg)
    return GlobalAnchorSet(anchors, assignment)


def label_global_features(g: AugmentedGraph, anchors: GlobalAnchorSet, J: int) -> np.ndarray:
    """``[v^0 | ... | v^J]`` global-anchor hop counts per entity, shape ``(E, (J + 1) m)``."""
    present = np.flatnonzero(anchors.anchors >= 0)
    counts = anchor_hop_counts(g.adjacency, anchors.anchors[present], present, anchors.m, J)
    return counts.reshape(g.entity_count, -1)


@dataclass(frozen=True)
class GlobalFeatureBundle:
    structure: np.ndarray   # (E, (J + 1) m)
    relational: np.ndarray  # (E, 2R)
    anchors: GlobalAnchorSet


class GlobalAnchorFeaturizer(TransformerMixin, BaseEstimator):
    """Fit cluster centroids on a training graph; featurize any graph with them."""

    def __init__(self, n_clusters=100, J=2, relational_multiplicity=True, max_iter=100, tol=1e-6,
                 random_state=0):
        self.n_clusters = n_clusters
        self.J = J
        self.relational_multiplicity = relational_multiplicity
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, graph: AugmentedGraph, y=None):
        feats = relational_features(graph, self.relational_multiplicity)
        self.kmeans_ = fit_clusters(feats, self.n_clusters, self.random_state, self.max_iter, self.tol)
        return self

    def transform(self, graph: AugmentedGraph) -> GlobalFeatureBundle:
        check_is_fitted(self, "kmeans_")
        feats = relational_features(graph, self.relational_multiplicity)
        anchors = select_global_anchors(self.kmeans_, graph.base, feats)
        return GlobalFeatureBundle(label_global_features(graph, anchors, self.J), feats, anchors)
