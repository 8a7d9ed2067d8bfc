"""Global-local reasoning network.

A query batch is a disjoint union of opening subgraphs. The global stream is
a mean-aggregation GCN over the whole graph, computed once per batch; the
local stream runs attention-weighted, gated message passing inside each
subgraph and reads the global embeddings of the nodes it touches.

Candidates outside a query's subgraph have no local information: their
local input is zero at every layer, so their layer output reduces to the
gated global term ``beta * ([0 | e_g] W_beta)`` with a zero neighborhood
message. That embedding does not depend on the query and is computed once
per batch for every entity.
"""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ShapeError
from .kg import AugmentedGraph
from .subgraph import OpeningSubgraph


@dataclass(frozen=True)
class ModelDims:
    augmented_relation_count: int
    local_width: int
    global_struct_width: int
    dim: int = 32
    n_layers: int = 2


class ModelParams:
    """Ordered collection of named trainable tensors."""

    def __init__(self, dims: ModelDims, tensors: "OrderedDict[str, Tensor]"):
        self.dims = dims
        self.tensors = tensors

    @classmethod
    def initialize(cls, dims: ModelDims, rng: np.random.Generator) -> "ModelParams":
        d = dims.dim
        t = OrderedDict()

        def w(name, fan_in, fan_out):
            t[name] = ad.glorot(fan_in, fan_out, rng, name=name)

        def b(name, width=d):
            t[name] = ad.zeros(1, width, name=name)

        w("relation_embeddings", dims.augmented_relation_count, d)
        w("local_W0", dims.local_width, d)
        b("local_b0")
        w("global_Wr", dims.augmented_relation_count, d)
        w("global_Wg", dims.global_struct_width, d)
        w("att_r", d, 1)
        for l in range(dims.n_layers):
            w(f"gcn_W{l}", 2 * d, d)
            b(f"gcn_b{l}")
            w(f"agg_W{l}", 3 * d, d)
            b(f"agg_b{l}")
            w(f"att_W{l}", 4 * d, d)
            b(f"att_b{l}")
            w(f"gate_W{l}", 2 * d, d)
            w(f"gatein_W{l}", 3 * d, d)
            b(f"gatein_b{l}")
        w("out_W", (dims.n_layers + 1) * d, d)
        b("out_b")
        w("query_W", 3 * d, d)
        b("query_b")
        return cls(dims, t)

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def names(self):
        return list(self.tensors)

    def copy_values(self) -> Dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.tensors.items()}

    def load_values(self, values: Dict[str, np.ndarray]):
        for k, v in values.items():
            if self.tensors[k].shape != v.shape:
                raise ShapeError(f"parameter {k}: expected {self.tensors[k].shape}, got {v.shape}")
            self.tensors[k].values[...] = v


@dataclass
class QueryBatch:
    """Disjoint union of opening subgraphs, one per query, plus candidates."""
    subgraphs: List[OpeningSubgraph]
    local_features: np.ndarray   # (N, local_width), rows in union order
    relations: np.ndarray        # (B,) augmented query relation ids
    node_entity: np.ndarray      # (N,) entity id of each union node
    node_query: np.ndarray       # (N,) query index of each union node
    offsets: np.ndarray          # (B,) union row of each center
    edge_src: np.ndarray
    edge_rel: np.ndarray
    edge_dst: np.ndarray
    cand_query: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cand_entity: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def build(cls, subgraphs: Sequence[OpeningSubgraph], features: Sequence[np.ndarray], relations,
              candidates: Optional[Sequence[Sequence[int]]] = None):
        sizes = np.array([s.node_count for s in subgraphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        node_entity = np.concatenate([s.node_ids for s in subgraphs])
        node_query = np.repeat(np.arange(len(subgraphs)), sizes)
        src, rel, dst = [], [], []
        for off, s in zip(offsets, subgraphs):
            src.append(s.triples[:, 0] + off)
            rel.append(s.triples[:, 1])
            dst.append(s.triples[:, 2] + off)
        batch = cls(list(subgraphs), np.concatenate(features, axis=0), np.asarray(relations, dtype=np.int64),
                    node_entity, node_query, offsets,
                    np.concatenate(src).astype(np.int64), np.concatenate(rel).astype(np.int64),
                    np.concatenate(dst).astype(np.int64))
        if candidates is not None:
            batch.set_candidates(candidates)
        return batch

    def set_candidates(self, candidates: Sequence[Sequence[int]]):
        self.cand_query = np.concatenate([np.full(len(c), i, dtype=np.int64) for i, c in enumerate(candidates)]) \
            if len(candidates) else np.zeros(0, dtype=np.int64)
        self.cand_entity = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates]) \
            if len(candidates) else np.zeros(0, dtype=np.int64)

    @property
    def size(self):
        return len(self.subgraphs)

    @property
    def node_count(self):
        return len(self.node_entity)

    def candidate_rows(self, entity_count) -> np.ndarray:
        """Row of each candidate in ``[local nodes ; all-entity outside table]``."""
        rows = np.empty(len(self.cand_entity), dtype=np.int64)
        for i, s in enumerate(self.subgraphs):
            mask = self.cand_query == i
            pos = s.local_positions(self.cand_entity[mask])
            rows[mask] = np.where(pos >= 0, pos + self.offsets[i], self.node_count + self.cand_entity[mask])
        return rows


@dataclass
class ForwardState:
    global_layers: List[Tensor]
    local_layers: List[Tensor]
    neighborhood: List[Tensor]
    attention: List[Tensor]
    gates: List[Tensor]
    node_embeddings: Tensor
    outside_embeddings: Tensor
    subgraph_embeddings: Tensor
    query_embeddings: Tensor
    logits: Tensor

    @property
    def scores(self) -> np.ndarray:
        return ad.sigmoid(self.logits).values[:, 0]


def init_local_embeddings(features, params: ModelParams) -> Tensor:
    x = features if isinstance(features, Tensor) else Tensor(features)
    if x.shape[1] != params["local_W0"].shape[0]:
        raise ShapeError(f"local features have width {x.shape[1]}, expected {params['local_W0'].shape[0]}")
    return ad.linear(x, params["local_W0"], params["local_b0"])


def init_global_embeddings(relational, structure, params: ModelParams) -> Tensor:
    xr = relational if isinstance(relational, Tensor) else Tensor(relational)
    xg = structure if isinstance(structure, Tensor) else Tensor(structure)
    if xr.shape[1] != params["global_Wr"].shape[0] or xg.shape[1] != params["global_Wg"].shape[0]:
        raise ShapeError("global feature widths do not match the model")
    return ad.matmul(xr, params["global_Wr"]) + ad.matmul(xg, params["global_Wg"])


def _blocks(W: Tensor, d: int, count: int) -> List[Tensor]:
    # ``[x_1 | ... | x_c] W == sum_i x_i W_i``; projecting blocks separately
    # keeps per-edge work at width ``d``
    return [ad.slice_rows(W, i * d, (i + 1) * d) for i in range(count)]


def global_gcn_layer(graph: AugmentedGraph, eg: Tensor, params: ModelParams, l: int) -> Tensor:
    """Mean over augmented out-neighbors of ``[e_g(p) | r_p]``, then affine."""
    W_node, W_rel = _blocks(params[f"gcn_W{l}"], eg.shape[1], 2)
    nb, rel = graph.mean_operators
    out = ad.matmul(ad.spmm(nb, eg), W_node) + ad.spmm(rel, ad.matmul(params["relation_embeddings"], W_rel))
    return out + params[f"gcn_b{l}"]


def global_local_layer(batch: QueryBatch, e: Tensor, eg: Tensor, params: ModelParams, l: int):
    """One attention + gate layer over the batch's subgraphs.

    Attention on edge ``n -> z`` reads ``[e_n | e_g(z) | r | e_z]``; the
    neighborhood message sums ``alpha * [e_z | e_g(z) | r]`` over out-edges.
    Returns ``(e_next, neighborhood, attention, gate)``.
    """
    d = e.shape[1]
    ent = batch.node_entity
    src, rel, dst = batch.edge_src, batch.edge_rel, batch.edge_dst
    R = params["relation_embeddings"]

    def from_global(W):
        # entity-level projection, then one row per subgraph node
        return ad.gather(ad.matmul(eg, W), ent)

    # the attention hidden layer is linear, so each block is projected onto
    # att_r per node and only scalars are gathered per edge
    a_r = params["att_r"]
    A_n, A_g, A_r, A_z = (ad.matmul(A, a_r) for A in _blocks(params[f"att_W{l}"], d, 4))
    from_src = ad.matmul(e, A_n)
    from_dst = from_global(A_g) + ad.matmul(e, A_z)
    logit = ad.gather(from_src, src) + ad.gather(from_dst, dst) + ad.gather(ad.matmul(R, A_r), rel)
    alpha = ad.sigmoid(logit + ad.matmul(params[f"att_b{l}"], a_r))

    M_z, M_g, M_r = _blocks(params[f"agg_W{l}"], d, 3)
    node_msg = ad.matmul(e, M_z) + from_global(M_g)
    n = batch.node_count
    e_prime = (ad.edge_sum(alpha, src, dst, node_msg, n) + ad.edge_sum(alpha, src, rel, ad.matmul(R, M_r), n)
               + params[f"agg_b{l}"])

    G_e, G_g, G_p = _blocks(params[f"gatein_W{l}"], d, 3)
    beta = ad.sigmoid(ad.matmul(e, G_e) + from_global(G_g) + ad.matmul(e_prime, G_p) + params[f"gatein_b{l}"])
    O_e, O_g = _blocks(params[f"gate_W{l}"], d, 2)
    own = ad.matmul(e, O_e) + from_global(O_g)
    e_next = ad.mul(beta, own) + ad.mul(ad.one_minus(beta), e_prime)
    return e_next, e_prime, alpha, beta


def outside_layer(eg: Tensor, params: ModelParams, l: int) -> Tensor:
    """Layer output for nodes with a zero local stream and no neighborhood."""
    d = eg.shape[1]
    gate_in = _blocks(params[f"gatein_W{l}"], d, 3)[1]
    beta = ad.sigmoid(ad.linear(eg, gate_in, params[f"gatein_b{l}"]))
    return ad.mul(beta, ad.matmul(eg, _blocks(params[f"gate_W{l}"], d, 2)[1]))


def global_stream(graph: AugmentedGraph, relational, structure, params: ModelParams) -> List[Tensor]:
    layers = [init_global_embeddings(relational, structure, params)]
    for l in range(params.dims.n_layers):
        layers.append(global_gcn_layer(graph, layers[-1], params, l))
    return layers


def forward(params: ModelParams, batch: QueryBatch, global_layers: List[Tensor]) -> ForwardState:
    L = params.dims.n_layers
    e = init_local_embeddings(batch.local_features, params)
    local_layers, nbh, att, gates = [e], [], [], []
    for l in range(L):
        e, e_prime, alpha, beta = global_local_layer(batch, e, global_layers[l], params, l)
        local_layers.append(e)
        nbh.append(e_prime)
        att.append(alpha)
        gates.append(beta)
    node_emb = ad.linear(ad.concat(local_layers), params["out_W"], params["out_b"])

    n_ent = global_layers[0].shape[0]
    outside = [Tensor(np.zeros((n_ent, params.dims.dim)))]
    for l in range(L):
        outside.append(outside_layer(global_layers[l], params, l))
    outside_emb = ad.linear(ad.concat(outside), params["out_W"], params["out_b"])

    e_graph = ad.segment_mean(node_emb, batch.node_query, batch.size)
    e_head = ad.gather(node_emb, batch.offsets)
    r = ad.gather(params["relation_embeddings"], batch.relations)
    e_query = ad.linear(ad.concat([e_graph, e_head, r]), params["query_W"], params["query_b"])

    if len(batch.cand_entity) and (batch.cand_entity.min() < 0 or batch.cand_entity.max() >= n_ent):
        raise IndexError("candidate entity id out of range")
    table = ad.concat([node_emb, outside_emb], axis=0)
    cand = ad.gather(table, batch.candidate_rows(n_ent))
    logits = ad.check_finite(ad.sum(ad.mul(cand, ad.gather(e_query, batch.cand_query)), axis=1), "scores")
    return ForwardState(global_layers, local_layers, nbh, att, gates, node_emb, outside_emb,
                        e_graph, e_query, logits)


def loss_from_logits(pos_logits: Tensor, neg_logits: Tensor) -> Tensor:
    """``-sum log f(pos) - sum log(1 - f(neg))`` evaluated in logit space."""
    pos = ad.sum(ad.log_sigmoid(pos_logits))
    neg = ad.sum(ad.log_sigmoid(ad.scale(neg_logits, -1.0)))
    return ad.scale(pos + neg, -1.0)


def loss(scores_pos, scores_neg) -> float:
    """Same objective on probabilities, for reporting and checking."""
    p = np.asarray(scores_pos, dtype=np.float64)
    n = np.asarray(scores_neg, dtype=np.float64)
    return float(-(np.log(p).sum() + np.log1p(-n).sum()))
