import json

import numpy as np
import pytest

from textinpaint import checkpoint
from textinpaint.config import RunConfig, config_hash, from_dict, load_config, paper_profile, to_dict
from textinpaint.errors import CompatibilityError, ConfigError


def test_paper_profile_values():
    d = json.loads(json.dumps(to_dict(paper_profile())))
    assert d["learning_rate"] == 1e-5
    assert (d["beta1"], d["beta2"]) == (0.9, 0.999)
    assert d["weight_decay"] == 1e-2
    assert (d["batch_size"], d["epochs"], d["image_size"]) == (24, 20, 512)


def test_profile_with_overrides():
    cfg = from_dict({"training": {"profile": "paper", "epochs": 3}})
    assert cfg.training.learning_rate == 1e-5 and cfg.training.epochs == 3
    with pytest.raises(ConfigError):
        from_dict({"training": {"profile": "huge"}})


def test_strict_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        from_dict({"sampler": {"stepz": 3}})
    with pytest.raises(ConfigError):
        from_dict({"nonsense": {}})
    with pytest.raises(ConfigError):
        from_dict({"sampler": 3})


def test_validation():
    with pytest.raises(ConfigError):
        from_dict({"recognizer": {"threshold": 1.5}})
    with pytest.raises(ConfigError):
        from_dict({"autoencoder": {"factor": 3}})


def test_yaml_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 4\nsampler:\n  steps: 10\n")
    cfg = load_config(p, {"sampler.steps": 20, "crops.max_jobs": 2})
    assert (cfg.seed, cfg.sampler.steps, cfg.crops.max_jobs) == (4, 20, 2)
    p.write_text("- not a mapping\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_hash_stable_and_sensitive():
    assert config_hash(RunConfig()) == config_hash(RunConfig())
    assert config_hash(RunConfig()) != config_hash(from_dict({"seed": 1}))


def test_checkpoint_round_trip(tmp_path):
    arrays = {"b": np.arange(6, dtype=np.float32).reshape(2, 3), "a": np.array([1, 2], np.int64)}
    h1 = checkpoint.save(tmp_path / "x", arrays, {"k": [1, 2]})
    h2 = checkpoint.save(tmp_path / "y", dict(reversed(list(arrays.items()))), {"k": [1, 2]})
    assert h1 == h2 == checkpoint.file_hash(tmp_path / "x")
    back, meta = checkpoint.load(tmp_path / "x")
    assert meta == {"k": [1, 2]}
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype and np.array_equal(back[k], arrays[k])
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(CompatibilityError):
        checkpoint.load(tmp_path / "bad")
