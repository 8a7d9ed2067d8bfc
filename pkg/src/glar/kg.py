"""Immutable triple stores for the inductive train/test regime.

Entities and relations are dense integer ids. A :class:`KnowledgeGraph` keeps
the base triples plus CSR-style out/in adjacency; :class:`AugmentedGraph`
adds an inverse edge ``(t, r + R, h)`` for every base triple ``(h, r, t)``.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import LoadError, ParseError, VocabularyError

logger = logging.getLogger(__name__)

Triple = Tuple[int, int, int]


def _csr(keys, payload_a, payload_b, n):
    order = np.argsort(keys, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, keys + 1, 1)
    np.cumsum(ptr, out=ptr)
    return ptr, payload_a[order], payload_b[order]


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    entity_count: int
    relation_count: int
    triples: np.ndarray
    entity_labels: Tuple[str, ...] = ()
    relation_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if len(triples):
            if triples.min() < 0:
                raise ValueError("negative id in triples")
            if triples[:, [0, 2]].max() >= self.entity_count:
                raise ValueError("entity id out of range")
            if triples[:, 1].max() >= self.relation_count:
                raise ValueError("relation id out of range")
        triples.setflags(write=False)
        object.__setattr__(self, "triples", triples)
        if not self.entity_labels:
            object.__setattr__(self, "entity_labels", tuple(str(i) for i in range(self.entity_count)))
        if not self.relation_labels:
            object.__setattr__(self, "relation_labels", tuple(str(i) for i in range(self.relation_count)))

    @classmethod
    def from_triples(cls, triples, entity_count=None, relation_count=None,
                     entity_labels=(), relation_labels=()):
        """Build a graph, silently dropping duplicate triples."""
        arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if len(arr):
            _, first = np.unique(arr, axis=0, return_index=True)
            removed = len(arr) - len(first)
            if removed:
                logger.info("removed %d duplicate triples", removed)
            arr = arr[np.sort(first)]
        if entity_count is None:
            entity_count = int(arr[:, [0, 2]].max()) + 1 if len(arr) else 0
        if relation_count is None:
            relation_count = int(arr[:, 1].max()) + 1 if len(arr) else 0
        return cls(int(entity_count), int(relation_count), arr,
                   tuple(entity_labels), tuple(relation_labels))

    @property
    def triple_count(self) -> int:
        return len(self.triples)

    @cached_property
    def _out(self):
        t = self.triples
        return _csr(t[:, 0], t[:, 1], t[:, 2], self.entity_count)

    @cached_property
    def _in(self):
        t = self.triples
        return _csr(t[:, 2], t[:, 1], t[:, 0], self.entity_count)

    def out_edges(self, n):
        ptr, rel, nbr = self._out
        return rel[ptr[n]:ptr[n + 1]], nbr[ptr[n]:ptr[n + 1]]

    def in_edges(self, n):
        ptr, rel, nbr = self._in
        return rel[ptr[n]:ptr[n + 1]], nbr[ptr[n]:ptr[n + 1]]

    @property
    def out_adjacency(self) -> List[List[Tuple[int, int]]]:
        return [list(zip(*map(np.ndarray.tolist, self.out_edges(n)))) for n in range(self.entity_count)]

    @property
    def in_adjacency(self) -> List[List[Tuple[int, int]]]:
        return [list(zip(*map(np.ndarray.tolist, self.in_edges(n)))) for n in range(self.entity_count)]

    @cached_property
    def degrees(self) -> np.ndarray:
        """In-degree plus out-degree of every entity over base triples."""
        deg = np.bincount(self.triples[:, 0], minlength=self.entity_count)
        deg += np.bincount(self.triples[:, 2], minlength=self.entity_count)
        return deg

    @property
    def relations_present(self) -> int:
        return len(np.unique(self.triples[:, 1]))

    @cached_property
    def entity_index(self) -> Dict[str, int]:
        return {label: i for i, label in enumerate(self.entity_labels)}

    @cached_property
    def relation_index(self) -> Dict[str, int]:
        return {label: i for i, label in enumerate(self.relation_labels)}

    def without(self, triples) -> "KnowledgeGraph":
        """Copy of the graph with the given base triples removed."""
        drop = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if not len(drop) or not len(self.triples):
            return self
        keep = ~_rows_in(self.triples, drop, self.entity_count, self.relation_count)
        if keep.all():
            return self
        return KnowledgeGraph(self.entity_count, self.relation_count, self.triples[keep],
                              self.entity_labels, self.relation_labels)


def _encode(triples, n_ent, n_rel):
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (t[:, 0] * n_rel + t[:, 1]) * n_ent + t[:, 2]


def _rows_in(triples, query, n_ent, n_rel):
    return np.isin(_encode(triples, n_ent, n_rel), _encode(query, n_ent, n_rel))


def degree(g: KnowledgeGraph, n: int) -> int:
    if not 0 <= n < g.entity_count:
        raise IndexError(f"entity id {n} out of range [0, {g.entity_count})")
    return int(g.degrees[n])


def inverse_relation(r, relation_count):
    """Map a relation id to its inverse in the augmented vocabulary."""
    return (r + relation_count) % (2 * relation_count)


@dataclass(frozen=True, eq=False)
class AugmentedGraph:
    """Base graph plus materialized inverse edges.

    ``src``, ``rel`` and ``dst`` list the ``2 * T`` augmented edges, base edges
    first and inverses after, in matching order.
    """
    base: KnowledgeGraph
    src: np.ndarray = field(repr=False)
    rel: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)

    @property
    def entity_count(self):
        return self.base.entity_count

    @property
    def relation_count(self):
        return self.base.relation_count

    @property
    def augmented_relation_count(self):
        return 2 * self.base.relation_count

    @property
    def edge_count(self):
        return len(self.src)

    @cached_property
    def _csr(self):
        order = np.argsort(self.src, kind="stable")
        ptr = np.zeros(self.entity_count + 1, dtype=np.int64)
        np.add.at(ptr, self.src + 1, 1)
        np.cumsum(ptr, out=ptr)
        return ptr, order

    def edges_from(self, n):
        """Augmented out-edges of ``n`` as ``(relation ids, neighbor ids)``."""
        ptr, order = self._csr
        idx = order[ptr[n]:ptr[n + 1]]
        return self.rel[idx], self.dst[idx]

    @property
    def augmented_adjacency(self) -> List[List[Tuple[int, int]]]:
        return [list(zip(*map(np.ndarray.tolist, self.edges_from(n)))) for n in range(self.entity_count)]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 entity adjacency used for hop-distance traversals."""
        n = self.entity_count
        data = np.ones(len(self.src), dtype=np.int32)
        a = sp.csr_matrix((data, (self.src, self.dst)), shape=(n, n))
        a.data[:] = 1
        return a

    @cached_property
    def mean_operators(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        """Row-normalized (neighbor, relation) incidence over augmented out-edges.

        Row ``n`` of the first averages the neighbors of ``n`` (with
        multiplicity), row ``n`` of the second averages the relations on its
        out-edges. Rows of isolated nodes are zero.
        """
        n, E = self.entity_count, len(self.src)
        deg = np.bincount(self.src, minlength=n).astype(np.float64)
        w = 1.0 / deg[self.src] if E else np.zeros(0)
        nb = sp.csr_matrix((w, (self.src, self.dst)), shape=(n, n))
        rel = sp.csr_matrix((w, (self.src, self.rel)), shape=(n, self.augmented_relation_count))
        return nb, rel

    def without(self, triples) -> "AugmentedGraph":
        base = self.base.without(triples)
        return self if base is self.base else augment_with_inverses(base)


def augment_with_inverses(g: KnowledgeGraph) -> AugmentedGraph:
    t = g.triples
    src = np.concatenate([t[:, 0], t[:, 2]])
    rel = np.concatenate([t[:, 1], t[:, 1] + g.relation_count])
    dst = np.concatenate([t[:, 2], t[:, 0]])
    for a in (src, rel, dst):
        a.setflags(write=False)
    return AugmentedGraph(g, src, rel, dst)


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train_graph: KnowledgeGraph
    test_graph: KnowledgeGraph
    valid_triples: np.ndarray
    test_triples: np.ndarray
    name: str = ""

    def overlapping_entities(self) -> List[str]:
        return sorted(set(self.train_graph.entity_labels) & set(self.test_graph.entity_labels))

    def statistics(self) -> Dict[str, Dict[str, int]]:
        out = {}
        for part, g in (("train", self.train_graph), ("test", self.test_graph)):
            out[part] = {"relations": g.relations_present, "entities": g.entity_count,
                         "triples": g.triple_count}
        out["valid"] = {"triples": len(self.valid_triples)}
        out["test_queries"] = {"triples": len(self.test_triples)}
        return out


def read_triple_file(path) -> List[Tuple[str, str, str]]:
    if not os.path.isfile(path):
        raise LoadError(f"missing triple file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise ParseError(path, lineno, line)
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def graph_from_labels(rows, relation_vocab: Optional[Dict[str, int]] = None, path="<triples>"):
    """Assign ids in first-appearance order and build a graph.

    With ``relation_vocab`` the relation ids are fixed and an unknown label is
    a :class:`VocabularyError`.
    """
    if not rows:
        raise LoadError(f"{path}: zero triples")
    ents: Dict[str, int] = {}
    rels: Dict[str, int] = dict(relation_vocab) if relation_vocab is not None else {}
    ids = []
    for h, r, t in rows:
        if r not in rels:
            if relation_vocab is not None:
                raise VocabularyError(f"{path}: relation {r!r} not in the training vocabulary")
            rels[r] = len(rels)
        hi = ents.setdefault(h, len(ents))
        ti = ents.setdefault(t, len(ents))
        ids.append((hi, rels[r], ti))
    rel_labels = [None] * len(rels)
    for label, i in rels.items():
        rel_labels[i] = label
    return KnowledgeGraph.from_triples(ids, len(ents), len(rels), list(ents), rel_labels)


def map_triples(rows, g: KnowledgeGraph, path="<triples>") -> np.ndarray:
    """Map label triples onto ``g``'s ids; triples with unknown entities are dropped."""
    out = []
    dropped = 0
    ent, rel = g.entity_index, g.relation_index
    for h, r, t in rows:
        if r not in rel:
            raise VocabularyError(f"{path}: relation {r!r} not in the training vocabulary")
        if h not in ent or t not in ent:
            dropped += 1
            continue
        out.append((ent[h], rel[r], ent[t]))
    if dropped:
        logger.warning("%s: dropped %d triples with entities outside the graph", path, dropped)
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)


def _inductive_dir(dir_path):
    for cand in (dir_path.rstrip("/\\") + "_ind", os.path.join(dir_path, "ind")):
        if os.path.isdir(cand):
            return cand
    raise LoadError(f"no inductive test directory next to {dir_path} (expected {dir_path}_ind or {dir_path}/ind)")


def load_split(dir_path, inductive_dir=None) -> DatasetSplit:
    """Load a GraIL-layout inductive split.

    ``dir_path`` holds ``train.txt`` (the training graph), ``valid.txt`` and
    ``test.txt``; the inductive directory (``<dir>_ind`` or ``<dir>/ind``)
    holds ``train.txt`` (the test graph) and ``test.txt`` (the test queries).
    """
    dir_path = os.fspath(dir_path)
    if not os.path.isdir(dir_path):
        raise LoadError(f"dataset directory not found: {dir_path}")
    for p in (os.path.join(dir_path, f) for f in ("train.txt", "valid.txt", "test.txt")):
        if not os.path.isfile(p):
            raise LoadError(f"missing triple file: {p}")
    ind = os.fspath(inductive_dir) if inductive_dir is not None else _inductive_dir(dir_path)

    path = os.path.join(dir_path, "train.txt")
    train = graph_from_labels(read_triple_file(path), path=path)
    vocab = train.relation_index
    path = os.path.join(dir_path, "valid.txt")
    valid = map_triples(read_triple_file(path), train, path)
    path = os.path.join(ind, "train.txt")
    test_graph = graph_from_labels(read_triple_file(path), relation_vocab=vocab, path=path)
    path = os.path.join(ind, "test.txt")
    test = map_triples(read_triple_file(path), test_graph, path)
    return DatasetSplit(train, test_graph, valid, test, name=os.path.basename(dir_path.rstrip("/\\")))


def write_triples(g: KnowledgeGraph, path, triples=None):
    """Write triples (default: the graph's own) as label TSV lines."""
    rows = g.triples if triples is None else np.asarray(triples).reshape(-1, 3)
    el, rl = g.entity_labels, g.relation_labels
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in rows.tolist():
            fh.write(f"{el[h]}\t{rl[r]}\t{el[t]}\n")


def dump_id_maps(g: KnowledgeGraph, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"entities": g.entity_index, "relations": g.relation_index}, fh, indent=1)


def write_split(split: DatasetSplit, dir_path, inductive_dir=None):
    """Serialize a split in the layout :func:`load_split` reads."""
    dir_path = os.fspath(dir_path)
    ind = inductive_dir or dir_path.rstrip("/\\") + "_ind"
    os.makedirs(dir_path, exist_ok=True)
    os.makedirs(ind, exist_ok=True)
    write_triples(split.train_graph, os.path.join(dir_path, "train.txt"))
    write_triples(split.train_graph, os.path.join(dir_path, "valid.txt"), split.valid_triples)
    open(os.path.join(dir_path, "test.txt"), "w").close()
    write_triples(split.test_graph, os.path.join(ind, "train.txt"))
    write_triples(split.test_graph, os.path.join(ind, "test.txt"), split.test_triples)
    return dir_path, ind


def check_triples(triples, g: KnowledgeGraph, augmented=False) -> np.ndarray:
    """Validate an ``(n, 3)`` integer triple array against ``g``'s id ranges."""
    arr = np.asarray(triples)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) triple array, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("triple ids must be integers")
    arr = arr.astype(np.int64)
    n_rel = g.relation_count * (2 if augmented else 1)
    if arr.size:
        if arr.min() < 0 or arr[:, [0, 2]].max() >= g.entity_count or arr[:, 1].max() >= n_rel:
            raise IndexError("triple id out of range for graph")
    return arr


def known_triples(*parts: Sequence) -> set:
    """Set of ``(h, r, t)`` tuples, for filtered evaluation."""
    out = set()
    for p in parts:
        out.update(map(tuple, np.asarray(p, dtype=np.int64).reshape(-1, 3).tolist()))
    return out
