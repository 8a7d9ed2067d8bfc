"""Versioned JSON checkpoints.

Layout (format ``glar-checkpoint``, version 1)::

    {
      "format": "glar-checkpoint",
      "version": 1,
      "config": {<estimator get_params()>},
      "relation_labels": [...],            # base relation vocabulary, id order
      "centroids": {"shape": [m, 2R], "values": [...]},
      "params": [{"name": ..., "shape": [rows, cols], "values": [...]}, ...],
      "loss_history": [...],
      "valid_history": [...]
    }

Arrays are flattened row-major. Floats are written with ``repr`` precision,
so a save/load round trip is exact and identical runs produce identical bytes.
"""
import hashlib
import json
import os

import numpy as np

from .exceptions import LoadError

FORMAT = "glar-checkpoint"
VERSION = 1


def _array(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "values": a.ravel().tolist()}


def _unarray(d):
    return np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])


def to_dict(model) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": model.get_params(),
        "relation_labels": list(model.relation_labels_),
        "centroids": _array(model.global_featurizer_.kmeans_.cluster_centers_),
        "params": [{"name": name, **_array(t.values)} for name, t in model.params_.tensors.items()],
        "loss_history": list(model.loss_history_),
        "valid_history": list(getattr(model, "valid_history_", [])),
    }


def save_checkpoint(model, path):
    payload = json.dumps(to_dict(model), sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(payload)
    return path


def from_dict(data: dict):
    from .estimator import GLAR
    from .global_anchor import GlobalAnchorFeaturizer, KMeans
    from .kg import KnowledgeGraph, augment_with_inverses
    from .model import ModelParams

    if data.get("format") != FORMAT:
        raise LoadError("not a GLAR checkpoint")
    if data.get("version") != VERSION:
        raise LoadError(f"unsupported checkpoint version {data.get('version')}")
    model = GLAR(**data["config"])
    labels = data["relation_labels"]
    # a graph with no triples is enough to fix the vocabulary-dependent shapes
    vocab_graph = augment_with_inverses(KnowledgeGraph(1, len(labels), np.zeros((0, 3)), ("_",), tuple(labels)))
    model._setup(vocab_graph)
    centers = _unarray(data["centroids"])
    km = KMeans(len(centers), random_state=model.random_state)
    km.cluster_centers_ = centers
    gf = GlobalAnchorFeaturizer(model.n_clusters, model.J, model.relational_multiplicity,
                                random_state=model.random_state)
    gf.kmeans_ = km
    model.global_featurizer_ = gf
    params = ModelParams.initialize(model.dims_, np.random.default_rng(0))
    stored = {p["name"]: _unarray(p) for p in data["params"]}
    if set(stored) != set(params.names()):
        raise LoadError("checkpoint parameters do not match the model layout")
    params.load_values(stored)
    model.params_ = params
    model.loss_history_ = list(data.get("loss_history", []))
    model.valid_history_ = list(data.get("valid_history", []))
    model.n_epochs_ = len(model.loss_history_)
    return model


def load_checkpoint(path):
    if not os.path.isfile(path):
        raise LoadError(f"checkpoint not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(data)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
