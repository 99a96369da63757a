import json

import pytest

from voxtop.utils.Config import RunConfig, load_config
from voxtop.utils.Errors import ConfigError, MissingInputError
from voxtop.utils.Helpers import parse_list, require_path


def write_json(path, document):
    path.write_text(json.dumps(document))
    return path


def test_defaults():
    config = load_config()
    assert config.domain.build().element_count == 3456
    assert config.train.lr == 0.01 and config.train.momentum == 0.9
    assert config.process.tau == 0.05 and config.process.gap == 5
    assert config.sampler.load_lambda == 4.0
    assert config.simp_config().move == 0.2


def test_load_partial_config(tmp_path):
    path = write_json(
        tmp_path / "config.json",
        {
            "seed": 42,
            "domain": {"nx": 4, "ny": 2, "nz": 2},
            "simp": {"max_iter": 30},
            "sampler": {"anchor_ranges": [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]},
            "process": {"grid_m": [5, 10]},
        },
    )
    config = load_config(path)
    assert config.seed == 42
    assert config.domain.build().shape == (4, 2, 2)
    assert config.simp_config().max_iter == 30
    assert config.simp_config().rmin == 1.5
    assert config.sampler.anchor_ranges == ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    assert config.process.grid_m == (5, 10)


def test_json_round_trip():
    config = RunConfig().override("train", epochs=3).with_seed(9)
    document = json.loads(json.dumps(config.toJSON()))
    assert RunConfig.fromJSON(document) == config


@pytest.mark.parametrize(
    "document",
    [
        {"domain": {"nx": 5}},  # Non-cubic elements
        {"simp": {"bogus": 1}},
        {"unknown": {}},
        {"train": {"epochs": 0}},
        {"material": {"nu": 0.5}},
        {"dataset": {"strategy": "poisson7"}},
        {"seed": -1},
        {"process": []},
        {"hybrid": {"seed_offset": -3}},
    ],
)
def test_invalid_configs(tmp_path, document):
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / "config.json", document))


def test_bad_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_config(tmp_path):
    with pytest.raises(MissingInputError):
        load_config(tmp_path / "absent.json")


def test_hybrid_seeds_skip_dataset_seeds():
    config = RunConfig().with_seed(100)
    dataset = set(config.dataset_seeds())
    assert dataset == set(range(100, 160))
    hybrid = range(config.hybrid_seed(), config.hybrid_seed() + config.hybrid.problems)
    assert not dataset & set(hybrid)

    assert config.override("dataset", problems=10).hybrid_seed() == 110
    assert config.override("hybrid", seed_offset=5000).hybrid_seed() == 5100


def test_override_ignores_unset_flags():
    config = RunConfig()
    assert config.override("process", tau=None) is config
    assert config.override("process", tau=0.1).process.tau == 0.1
    with pytest.raises(ConfigError):
        config.override("process", gap=0)


def test_with_seed():
    assert RunConfig().with_seed(None).seed == 0
    assert RunConfig().with_seed(2 ** 64 - 1).seed == 2 ** 64 - 1
    with pytest.raises(ConfigError):
        RunConfig().with_seed(2 ** 64)


def test_parse_list():
    assert parse_list(None) is None
    assert parse_list("density, gradient") == ("density", "gradient")
    assert parse_list("5,10,", int) == (5, 10)
    with pytest.raises(ConfigError):
        parse_list("5,ten", int)


def test_require_path(tmp_path):
    assert require_path(tmp_path) == tmp_path
    with pytest.raises(MissingInputError):
        require_path(tmp_path / "nope", "dataset")
