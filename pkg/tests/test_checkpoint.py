import json

import numpy as np
import pytest

from glar import GLAR
from glar.checkpoint import file_digest, load_checkpoint
from glar.exceptions import LoadError, ParameterError
from glar.kg import KnowledgeGraph


def test_round_trip_is_exact(family_split, tiny_model, tmp_path):
    path = tmp_path / "model.json"
    tiny_model.save(path)
    loaded = GLAR.load(path)
    for name in tiny_model.params_.names():
        assert loaded.params_[name].values.tobytes() == tiny_model.params_[name].values.tobytes()
    assert loaded.get_params() == tiny_model.get_params()
    t = family_split.test_triples[:10]
    assert np.array_equal(loaded.predict_proba(family_split.test_graph, t),
                          tiny_model.predict_proba(family_split.test_graph, t))


def test_saving_twice_gives_identical_bytes(tiny_model, tmp_path):
    tiny_model.save(tmp_path / "a.json")
    GLAR.load(tmp_path / "a.json").save(tmp_path / "b.json")
    assert file_digest(tmp_path / "a.json") == file_digest(tmp_path / "b.json")


def test_bad_files_are_load_errors(tiny_model, tmp_path):
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "missing.json")
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "junk.json")
    (tmp_path / "other.json").write_text(json.dumps({"format": "something"}))
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "other.json")
    tiny_model.save(tmp_path / "ok.json")
    data = json.loads((tmp_path / "ok.json").read_text())
    data["version"] = 99
    (tmp_path / "future.json").write_text(json.dumps(data))
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "future.json")
    data["version"] = 1
    data["params"] = data["params"][:-1]
    (tmp_path / "short.json").write_text(json.dumps(data))
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "short.json")


def test_relation_vocabulary_mismatch_is_refused(tiny_model):
    other = KnowledgeGraph.from_triples(np.array([[0, 0, 1]]), 2, tiny_model.relation_count_ // 2 + 1)
    with pytest.raises(ParameterError):
        tiny_model.predict_proba(other, [[0, 0, 1]])
