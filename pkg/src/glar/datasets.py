"""Synthetic inductive benchmark with rule-derivable held-out facts.

Each family is a three-generation genealogy with ``parent_of``, ``child_of``,
``spouse_of``, ``sibling_of`` and ``grandparent_of`` facts, plus a few random
``knows`` edges between families. Held-out facts are implied by the facts
that remain (inverse, symmetric or two-hop compositions), so a model that
reads local structure can recover them on a graph of entirely new families.
"""
import numpy as np

from .kg import DatasetSplit, graph_from_labels, map_triples

_COUNTERPART = {
    "parent_of": "child_of",
    "child_of": "parent_of",
    "spouse_of": "spouse_of",
    "sibling_of": "sibling_of",
}


def _family(prefix, rng):
    facts = []
    ids = iter(range(10 ** 6))

    def new():
        return f"{prefix}_{next(ids)}"

    def marry(a, b):
        facts.append((a, "spouse_of", b))
        facts.append((b, "spouse_of", a))

    def have_children(parents, n):
        kids = [new() for _ in range(n)]
        for c in kids:
            for p in parents:
                facts.append((p, "parent_of", c))
                facts.append((c, "child_of", p))
        for x in kids:
            for y in kids:
                if x != y:
                    facts.append((x, "sibling_of", y))
        return kids

    root = (new(), new())
    marry(*root)
    members = list(root)
    for child in have_children(root, int(rng.integers(2, 4))):
        members.append(child)
        if rng.random() < 0.8:
            partner = new()
            members.append(partner)
            marry(child, partner)
            grandkids = have_children((child, partner), int(rng.integers(1, 4)))
        else:
            grandkids = have_children((child,), int(rng.integers(0, 3)))
        members.extend(grandkids)
        for g in root:
            for gk in grandkids:
                facts.append((g, "grandparent_of", gk))
    return facts, members


def _world(prefix, n_families, n_bridges, holdout, rng):
    facts, everyone = [], []
    for f in range(n_families):
        fam_facts, members = _family(f"{prefix}{f}", rng)
        facts.extend(fam_facts)
        everyone.append(members)
    for _ in range(n_bridges):
        a, b = rng.choice(n_families, size=2, replace=False)
        x = everyone[a][rng.integers(len(everyone[a]))]
        y = everyone[b][rng.integers(len(everyone[b]))]
        facts.append((x, "knows", y))

    held, held_set = [], set()
    for i in rng.permutation(len(facts)):
        h, r, t = facts[i]
        if r == "knows" or rng.random() >= holdout:
            continue
        partner = (t, _COUNTERPART[r], h) if r in _COUNTERPART else None
        if partner in held_set:
            continue
        held.append(facts[i])
        held_set.add(facts[i])
    kept = [f for f in facts if f not in held_set]
    return kept, held


def make_family_benchmark(n_train_families=30, n_test_families=15, holdout=0.1, bridges_per_family=1,
                          seed=0, name="family_v1") -> DatasetSplit:
    rng = np.random.default_rng(seed)
    train_rows, valid_rows = _world("a", n_train_families, bridges_per_family * n_train_families, holdout, rng)
    test_rows, test_queries = _world("b", n_test_families, bridges_per_family * n_test_families, holdout, rng)
    train = graph_from_labels(train_rows, path="train")
    test_graph = graph_from_labels(test_rows, relation_vocab=train.relation_index, path="test graph")
    return DatasetSplit(train, test_graph, map_triples(valid_rows, train, "valid"),
                        map_triples(test_queries, test_graph, "test"), name=name)
