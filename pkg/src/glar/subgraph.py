"""k-hop opening subgraph around a query head."""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .kg import AugmentedGraph


@dataclass(frozen=True, eq=False)
class OpeningSubgraph:
    """Nodes within ``k`` hops of ``center`` plus every augmented edge among them.

    ``node_ids[i]`` is the entity at local index ``i``; the center is local
    index 0. ``triples`` holds ``(local head, relation, local tail)`` rows.
    """
    center: int
    k: int
    node_ids: np.ndarray
    distances: np.ndarray
    triples: np.ndarray
    entity_count: int = field(repr=False)

    @cached_property
    def _position(self):
        pos = np.full(self.entity_count, -1, dtype=np.int64)
        pos[self.node_ids] = np.arange(len(self.node_ids))
        return pos

    @property
    def local_index(self):
        return {int(n): i for i, n in enumerate(self.node_ids.tolist())}

    @property
    def node_count(self):
        return len(self.node_ids)

    def local_positions(self, entities) -> np.ndarray:
        """Local index of each entity, ``-1`` for entities outside the subgraph."""
        return self._position[np.asarray(entities, dtype=np.int64)]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 local adjacency over the induced triples."""
        n = self.node_count
        t = self.triples
        a = sp.csr_matrix((np.ones(len(t), dtype=np.int32), (t[:, 0], t[:, 2])), shape=(n, n))
        a.data[:] = 1
        return a

    def to_json(self):
        return {
            "center": int(self.center),
            "k": int(self.k),
            "nodes": self.node_ids.tolist(),
            "distances": self.distances.tolist(),
            "triples": self.triples.tolist(),
        }


def membership(sub: OpeningSubgraph, n: int) -> Optional[int]:
    if not 0 <= n < sub.entity_count:
        return None
    pos = int(sub._position[n])
    return pos if pos >= 0 else None


def hop_levels(adjacency: sp.csr_matrix, source: int, depth: int):
    """Breadth-first levels from ``source``: a list of sorted node arrays."""
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[source] = True
    levels = [np.array([source], dtype=np.int64)]
    frontier = levels[0]
    indptr, indices = adjacency.indptr, adjacency.indices
    for _ in range(depth):
        if not len(frontier):
            break
        starts, stops = indptr[frontier], indptr[frontier + 1]
        nbrs = np.concatenate([indices[a:b] for a, b in zip(starts, stops)]) if len(frontier) < 64 \
            else adjacency[frontier].indices
        nbrs = np.unique(nbrs)
        nbrs = nbrs[~seen[nbrs]]
        if not len(nbrs):
            break
        seen[nbrs] = True
        levels.append(nbrs.astype(np.int64))
        frontier = levels[-1]
    return levels


def extract_opening_subgraph(g: AugmentedGraph, h: int, k: int, exclude=None) -> OpeningSubgraph:
    """BFS from ``h`` over augmented edges up to depth ``k``.

    Nodes are ordered by hop level and by ascending id within a level.
    ``exclude`` lists base triples (e.g. the query's own triple) whose edges
    and inverse edges are removed before traversal.
    """
    if not 0 <= h < g.entity_count:
        raise IndexError(f"entity id {h} out of range [0, {g.entity_count})")
    if k < 1:
        raise ValueError("hop radius k must be >= 1")
    if exclude is not None and len(np.asarray(exclude).reshape(-1)):
        g = g.without(exclude)

    levels = hop_levels(g.adjacency, h, k)
    node_ids = np.concatenate(levels)
    distances = np.concatenate([np.full(len(lv), d, dtype=np.int64) for d, lv in enumerate(levels)])

    pos = np.full(g.entity_count, -1, dtype=np.int64)
    pos[node_ids] = np.arange(len(node_ids))
    ls, ld = pos[g.src], pos[g.dst]
    keep = (ls >= 0) & (ld >= 0)
    triples = np.stack([ls[keep], g.rel[keep], ld[keep]], axis=1) if keep.any() \
        else np.zeros((0, 3), dtype=np.int64)
    for a in (node_ids, distances, triples):
        a.setflags(write=False)
    return OpeningSubgraph(int(h), int(k), node_ids, distances, triples, g.entity_count)
