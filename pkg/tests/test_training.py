import dataclasses

import numpy as np
import pytest
import torch

from textinpaint import checkpoint
from textinpaint.config import AutoencoderConfig, ConditionConfig, DenoiserConfig, DiffusionConfig, RunConfig, TrainConfig
from textinpaint.errors import ConfigError, InvalidAnnotationError
from textinpaint.geometry import box_to_quad
from textinpaint.model import DiffusionModel, build_from_config
from textinpaint.oracles import raster_count
from textinpaint.schedule import build_schedule
from textinpaint.training import encode_pairs, make_masked_pair, run_training, training_step


def test_full_image_mask():
    img = np.zeros((16, 16, 3), np.float32)
    pair = make_masked_pair(img, box_to_quad(0, 0, 16, 16), "a")
    assert pair.mask.all()


def test_zero_area_polygon():
    img = np.zeros((16, 16, 3), np.float32)
    with pytest.raises(InvalidAnnotationError):
        make_masked_pair(img, [[2, 2], [8, 2], [14, 2], [5, 2]], "a")


def test_quarter_box_pixel_count(rng):
    img = rng.uniform(-1, 1, size=(64, 64, 3)).astype(np.float32)
    quad = box_to_quad(16, 16, 48, 48)
    pair = make_masked_pair(img, quad, "w")
    assert pair.mask.sum() == raster_count(quad, 64, 64) == 1024
    assert np.array_equal(pair.masked[~pair.mask], img[~pair.mask])
    assert np.all(pair.masked[pair.mask] == 0.0)
    assert np.array_equal(pair.original, img)


class _Fixed(torch.nn.Module):
    """Stub denoiser that returns the noise it is told to return."""

    def __init__(self, sign):
        super().__init__()
        self.sign = sign
        self.eps = None

    def forward(self, x, t, cond):
        return self.sign * self.eps


def _stub_model(tiny_model, sign):
    stub = _Fixed(sign)
    model = dataclasses.replace(tiny_model, denoiser=stub)
    return model, stub


@pytest.mark.parametrize("sign, expected", [(1.0, 0.0), (-1.0, 4.0)])
def test_loss_with_stub_predictions(tiny_model, rng, sign, expected, monkeypatch):
    from textinpaint import training

    model, stub = _stub_model(tiny_model, sign)
    real = training.sample_noised

    def capture(x0, schedule, g):
        x_t, eps, t = real(x0, schedule, g)
        stub.eps = eps
        return x_t, eps, t

    monkeypatch.setattr(training, "sample_noised", capture)
    img = rng.uniform(-1, 1, size=(32, 32, 3)).astype(np.float32)
    batch = [make_masked_pair(img, box_to_quad(4, 4, 20, 12), "cat")] * 4
    loss = training_step(batch, model, model.schedule, np.random.default_rng(0))
    # with pred = -eps the loss is 4 * mean(eps^2), close to 4 for a few thousand draws
    assert loss == pytest.approx(expected, abs=0.25)


def _tiny_cfg(steps=6):
    cfg = RunConfig()
    cfg.diffusion = DiffusionConfig(T=100)
    cfg.autoencoder = AutoencoderConfig(hidden=8)
    cfg.condition = ConditionConfig(dim=16, layers=1, heads=2)
    cfg.denoiser = DenoiserConfig(channels=16, heads=2, groups=4)
    cfg.training = TrainConfig(steps=steps, batch_size=2, seed=4)
    return cfg


def _pairs(rng, n=3):
    return [
        make_masked_pair(rng.uniform(-1, 1, size=(16, 16, 3)).astype(np.float32), box_to_quad(2, 2, 12, 8), w)
        for w in ["ab", "cd", "ef"][:n]
    ]


def test_run_training_deterministic_checkpoints(tiny_model, rng, tmp_path):
    pairs = _pairs(rng)
    ae_before = checkpoint.module_arrays(tiny_model.autoencoder, "ae")
    m1 = run_training(pairs, _tiny_cfg(), autoencoder=tiny_model.autoencoder)
    m2 = run_training(pairs, _tiny_cfg(), autoencoder=tiny_model.autoencoder)
    h1, h2 = m1.save(tmp_path / "a.ckpt"), m2.save(tmp_path / "b.ckpt")
    assert h1 == h2
    assert len(m1.loss_history) == 6
    # frozen autoencoder is bit-identical after training
    for k, v in checkpoint.module_arrays(m1.autoencoder, "ae").items():
        assert v.tobytes() == ae_before[k].tobytes()
    assert m1.freeze_policy["autoencoder"] == "frozen"
    loaded = DiffusionModel.load(tmp_path / "a.ckpt")
    assert loaded.loss_history == m1.loss_history
    assert loaded.freeze_policy == m1.freeze_policy


def test_frozen_condition_encoder(tiny_model, rng):
    cfg = _tiny_cfg(3)
    cfg.training.freeze_condition_encoder = True
    before = checkpoint.module_arrays(build_from_config(cfg, tiny_model.autoencoder).condition, "c")
    m = run_training(_pairs(rng), cfg, autoencoder=tiny_model.autoencoder)
    for k, v in checkpoint.module_arrays(m.condition, "c").items():
        assert v.tobytes() == before[k].tobytes()


def test_training_errors(tiny_model):
    with pytest.raises(ConfigError):
        run_training([], _tiny_cfg(), autoencoder=tiny_model.autoencoder)
    with pytest.raises(ConfigError):
        training_step([], tiny_model, tiny_model.schedule, np.random.default_rng(0))


def test_encode_pairs_shapes(tiny_model, rng):
    enc = encode_pairs(_pairs(rng, 2), tiny_model)
    assert tuple(enc.x0.shape) == (2, 4, 4, 4)
    assert tuple(enc.m_lat.shape) == (2, 1, 4, 4)
    assert tuple(enc.tokens.shape) == (2, 16)
