import pytest

from glar.config import RunConfig, parse_config
from glar.exceptions import ParameterError


def test_parse_with_comments_and_types():
    cfg = parse_config("# run\nk = 3\nlearning_rate=0.01  # faster\nrelational_multiplicity=false\n\nthreads=\n")
    assert cfg.k == 3 and cfg.learning_rate == 0.01
    assert cfg.relational_multiplicity is False and cfg.threads is None
    assert cfg.dim == RunConfig().dim


def test_text_round_trip():
    cfg = RunConfig(dataset_dir="data/x", k=4, threads=2, filtered_eval=False)
    assert parse_config(cfg.to_text()) == cfg


@pytest.mark.parametrize("text", ["nonsense_key=1", "k=three", "k", "relational_multiplicity=maybe"])
def test_bad_lines(text):
    with pytest.raises(ParameterError):
        parse_config(text)


@pytest.mark.parametrize("field", ["k", "m", "L", "dim", "epochs", "negatives_eval", "auc_seeds"])
def test_non_positive_values_are_rejected(field):
    with pytest.raises(ParameterError):
        RunConfig(**{field: 0}).validate()
    RunConfig(J=0).validate()


def test_overrides_skip_none():
    cfg = RunConfig(k=5).with_overrides(k=None, dim=16)
    assert cfg.k == 5 and cfg.dim == 16
    assert cfg.structural() == {"k": 5, "J": 2, "m": 100, "L": 2, "dim": 16}
