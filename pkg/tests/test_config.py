from tspq import ConfigError, ForestConfig, NoiseModel, SolveConfig, load_config
import json
import pytest


def test_defaults():
    config = SolveConfig()
    assert config.method == "quantum"
    assert config.encoding == "auto"
    assert config.shots == 4096
    assert config.noise is None
    assert config.forest == ForestConfig()
    assert config.ml_shortlist == 5


@pytest.mark.parametrize("name,method", [("quantum-ml", "quantum_ml"), ("Hybrid-ML", "hybrid_ml"),
                                         ("classical", "classical")])
def test_method_spelling(name, method):
    assert SolveConfig(method=name).method == method


@pytest.mark.parametrize("changes", [
    {"method": "annealing"},
    {"encoding": "binary"},
    {"shots": 0},
    {"p": 1.5},
    {"max_iters": True},
    {"alpha": 0.5},
    {"cost_threshold": -1.0},
    {"ml_shortlist": 0},
    {"min_cities": 2},
    {"min_cities": 6, "max_cities": 5},
    {"noise": {"p1q": 2.0}},
    {"forest": {"n_trees": 0}},
])
def test_invalid(changes):
    with pytest.raises(ConfigError):
        SolveConfig.from_dict(changes)


def test_unknown_key():
    with pytest.raises(ConfigError, match="shotz"):
        SolveConfig.from_dict({"shotz": 10})


def test_noise_true():
    config = SolveConfig(noise=True)
    assert config.noise == NoiseModel()
    assert config.to_dict()["noise"] == NoiseModel().to_dict()


def test_replace_ignores_none():
    config = SolveConfig(shots=100)
    assert config.replace(shots=None, p=2) == SolveConfig(shots=100, p=2)


def test_load_with_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"shots": 512, "k": 2, "forest": {"n_trees": 5}}))
    config = load_config(str(path), shots=256, max_iters=None)
    assert config.shots == 256
    assert config.k == 2
    assert config.max_iters == 100
    assert config.forest.n_trees == 5
    assert load_config(None) == SolveConfig()


def test_dict_round_trip():
    config = SolveConfig(noise=True, method="hybrid_ml", ml_shortlist=3)
    assert SolveConfig.from_dict(config.to_dict()) == config


@pytest.mark.parametrize("text", ["{not json", "[1, 2]"])
def test_unreadable(tmp_path, text):
    path = tmp_path / "config.json"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.json"))
