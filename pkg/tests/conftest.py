import numpy as np
import pytest

from glar import GLAR
from glar.datasets import make_family_benchmark
from glar.kg import KnowledgeGraph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def family_split():
    return make_family_benchmark(n_train_families=8, n_test_families=4, seed=3)


@pytest.fixture(scope="session")
def tiny_model(family_split):
    model = GLAR(k=3, J=2, n_clusters=6, dim=8, max_epochs=2, patience=2, valid_max_queries=40,
                 random_state=0)
    return model.fit(family_split.train_graph, valid_triples=family_split.valid_triples)


def graph(triples, n=None, R=None):
    return KnowledgeGraph.from_triples(np.asarray(triples, dtype=np.int64).reshape(-1, 3), n, R)


def toy_instance(seed=0, n=14, n_triples=30, R=2, k=2, J=2, m=3, dim=8, n_layers=1, n_queries=3, n_cands=4):
    """Small graph, featurized queries, a query batch and fresh parameters."""
    from glar.evaluation import directed_queries
    from glar.global_anchor import GlobalAnchorFeaturizer
    from glar.kg import augment_with_inverses
    from glar.local_anchor import LocalAnchorFeaturizer, local_feature_width
    from glar.model import ModelDims, ModelParams, QueryBatch
    from glar.subgraph import extract_opening_subgraph
    from oracles import random_triples

    rng = np.random.default_rng(seed)
    triples = random_triples(rng, n, n_triples, R)
    aug = augment_with_inverses(graph(triples, n, R))
    gfeat = GlobalAnchorFeaturizer(m, J, random_state=seed).fit(aug).transform(aug)
    lf = LocalAnchorFeaturizer(J).fit(aug)
    queries = directed_queries(triples[:n_queries], R)
    subs = [extract_opening_subgraph(aug, h, k) for h in queries[:, 0]]
    feats = [lf.transform(s).flat() for s in subs]
    cands = [np.r_[a, rng.choice(n, n_cands - 1, replace=False)] for a in queries[:, 2]]
    batch = QueryBatch.build(subs, feats, queries[:, 1], cands)
    dims = ModelDims(2 * R, local_feature_width(2 * R, k, J), (J + 1) * m, dim, n_layers)
    params = ModelParams.initialize(dims, rng)
    return dict(triples=triples, aug=aug, gfeat=gfeat, queries=queries, subs=subs, feats=feats,
                cands=cands, batch=batch, params=params)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance")
        for line in RESULTS:
            terminalreporter.write_line(line)
