import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glar.kg import augment_with_inverses
from glar.subgraph import extract_opening_subgraph, membership

from conftest import graph
from oracles import frontier_distances, random_triples


def _path(n):
    return augment_with_inverses(graph([[i, 0, i + 1] for i in range(n - 1)]))


def test_path_graph_radius_two():
    sub = extract_opening_subgraph(_path(5), 0, 2)
    assert sub.node_ids.tolist() == [0, 1, 2]
    assert sub.distances.tolist() == [0, 1, 2]


def test_isolated_center():
    aug = augment_with_inverses(graph([[0, 0, 1]], n=3))
    sub = extract_opening_subgraph(aug, 2, 4)
    assert sub.node_ids.tolist() == [2]
    assert len(sub.triples) == 0


def test_bad_arguments():
    aug = _path(3)
    with pytest.raises(IndexError):
        extract_opening_subgraph(aug, 3, 1)
    with pytest.raises(ValueError):
        extract_opening_subgraph(aug, 0, 0)


def test_nodes_ordered_by_level_then_id():
    aug = augment_with_inverses(graph([[0, 0, 5], [0, 0, 3], [5, 1, 1], [3, 1, 4]]))
    sub = extract_opening_subgraph(aug, 0, 2)
    assert sub.node_ids.tolist() == [0, 3, 5, 1, 4]


def test_induced_edges_include_edges_at_the_boundary():
    # 1 and 2 are both at depth 1; their edge must survive
    aug = augment_with_inverses(graph([[0, 0, 1], [0, 0, 2], [1, 1, 2], [2, 0, 3]]))
    sub = extract_opening_subgraph(aug, 0, 1)
    ents = sub.node_ids
    edges = {(ents[h], r, ents[t]) for h, r, t in sub.triples.tolist()}
    assert (1, 1, 2) in edges and (2, 3, 1) in edges
    assert all(3 not in (h, t) for h, _, t in edges)


def test_random_graphs_match_frontier_oracle(rng):
    for _ in range(20):
        n = 200
        triples = random_triples(rng, n, 300, 3)
        aug = augment_with_inverses(graph(triples, n, 3))
        center, k = int(rng.integers(n)), int(rng.integers(1, 5))
        sub = extract_opening_subgraph(aug, center, k)
        oracle = frontier_distances(triples, n, center, k)
        assert dict(zip(sub.node_ids.tolist(), sub.distances.tolist())) == oracle
        for e in range(n):
            pos = membership(sub, e)
            assert (pos is not None) == (e in oracle)
            if pos is not None:
                assert sub.node_ids[pos] == e


def test_induced_triples_are_exact(rng):
    triples = random_triples(rng, 60, 150, 2)
    aug = augment_with_inverses(graph(triples, 60, 2))
    sub = extract_opening_subgraph(aug, 0, 2)
    inside = set(sub.node_ids.tolist())
    expected = {(h, r, t) for h, r, t in zip(aug.src.tolist(), aug.rel.tolist(), aug.dst.tolist())
                if h in inside and t in inside}
    ents = sub.node_ids
    got = [(ents[h], r, ents[t]) for h, r, t in sub.triples.tolist()]
    assert len(got) == len(set(got))
    assert set(got) == expected


def test_membership_examples():
    sub = extract_opening_subgraph(_path(6), 0, 2)
    assert membership(sub, 0) == 0
    assert membership(sub, 3) is None
    assert membership(sub, 99) is None


def test_exclude_hides_the_query_triple():
    aug = augment_with_inverses(graph([[0, 0, 1], [1, 0, 2]]))
    sub = extract_opening_subgraph(aug, 0, 3, exclude=[[0, 0, 1]])
    assert sub.node_ids.tolist() == [0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_radius_monotonicity(seed, k):
    rng = np.random.default_rng(seed)
    aug = augment_with_inverses(graph(random_triples(rng, 40, 60, 2), 40, 2))
    c = int(rng.integers(40))
    small = set(extract_opening_subgraph(aug, c, k).node_ids.tolist())
    big = set(extract_opening_subgraph(aug, c, k + 1).node_ids.tolist())
    assert small <= big


def test_extraction_is_deterministic(rng):
    aug = augment_with_inverses(graph(random_triples(rng, 50, 120, 3), 50, 3))
    a = extract_opening_subgraph(aug, 7, 3)
    b = extract_opening_subgraph(aug, 7, 3)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    assert a.to_json()["center"] == 7
