"""Convolutional autoencoder mapping images to the diffusion latent space.

Images are ``(H, W, C)`` float arrays in ``[-1, 1]``; latents are
``(H/f, W/f, C_lat)``. The encoder ends in ``tanh`` so latents share the
image value range before ``latent_scale`` is applied.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch
from torch import nn

from .config import AutoencoderConfig
from .errors import ConfigError, ShapeError
from .torchutil import images_to_tensor, seeded, tensor_to_images


class LatentAutoencoder(nn.Module):
    def __init__(self, cfg: AutoencoderConfig):
        super().__init__()
        self.cfg = cfg
        levels = int(round(math.log2(cfg.factor)))
        h = cfg.hidden
        enc: list[nn.Module] = [nn.Conv2d(cfg.channels, h, 3, padding=1), nn.SiLU()]
        ch = h
        for i in range(levels):
            out = h * 2 ** min(i + 1, 2)
            enc += [nn.Conv2d(ch, out, 4, stride=2, padding=1), nn.SiLU(), nn.Conv2d(out, out, 3, padding=1), nn.SiLU()]
            ch = out
        enc += [nn.Conv2d(ch, cfg.latent_channels, 3, padding=1), nn.Tanh()]
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv2d(cfg.latent_channels, ch, 3, padding=1), nn.SiLU()]
        for i in reversed(range(levels)):
            out = h * 2 ** min(i, 2) if i > 0 else h
            dec += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(ch, out, 3, padding=1),
                nn.SiLU(),
                nn.Conv2d(out, out, 3, padding=1),
                nn.SiLU(),
            ]
            ch = out
        dec += [nn.Conv2d(ch, cfg.channels, 3, padding=1), nn.Tanh()]
        self.decoder = nn.Sequential(*dec)

    @property
    def factor(self) -> int:
        return self.cfg.factor

    def encode_tensor(self, x: torch.Tensor) -> torch.Tensor:
        _check_image_dims(x.shape[-2], x.shape[-1], self.cfg.factor)
        return self.encoder(x) * self.cfg.latent_scale

    def decode_tensor(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[1] != self.cfg.latent_channels:
            raise ShapeError(f"latent has {z.shape[1]} channels, model expects {self.cfg.latent_channels}")
        return self.decoder(z / self.cfg.latent_scale)

    def forward(self, x):
        return self.decode_tensor(self.encode_tensor(x))


def _check_image_dims(h: int, w: int, f: int) -> None:
    if h % f or w % f:
        raise ShapeError(f"image dims {h}x{w} not divisible by factor {f}")


def build_autoencoder(cfg: AutoencoderConfig, seed: int = 0) -> LatentAutoencoder:
    with seeded(seed):
        model = LatentAutoencoder(cfg)
    return model.eval()


@torch.no_grad()
def encode(model: LatentAutoencoder, image: np.ndarray) -> np.ndarray:
    """Project one ``(H, W, C)`` image (or an ``(N, H, W, C)`` stack) to latents."""
    arr = np.asarray(image, dtype=np.float32)
    single = arr.ndim == 3
    if arr.shape[-1] != model.cfg.channels:
        raise ShapeError(f"image has {arr.shape[-1]} channels, model expects {model.cfg.channels}")
    _check_image_dims(arr.shape[-3], arr.shape[-2], model.cfg.factor)
    z = tensor_to_images(model.encode_tensor(images_to_tensor(arr)))
    return z[0] if single else z


@torch.no_grad()
def decode(model: LatentAutoencoder, latent: np.ndarray) -> np.ndarray:
    arr = np.asarray(latent, dtype=np.float32)
    single = arr.ndim == 3
    if arr.shape[-1] != model.cfg.latent_channels:
        raise ShapeError(f"latent has {arr.shape[-1]} channels, model expects {model.cfg.latent_channels}")
    x = tensor_to_images(model.decode_tensor(images_to_tensor(arr)))
    x = np.clip(x, -1.0, 1.0)
    return x[0] if single else x


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR for images in [-1, 1] (peak-to-peak range 2)."""
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    return float("inf") if mse == 0 else 10.0 * math.log10(4.0 / mse)


def train_autoencoder(images, cfg: AutoencoderConfig, seed: int = 0, steps: int | None = None):
    """Fit the autoencoder to an image collection by MSE reconstruction.

    Returns ``(model, loss_history)``; the model is left in eval mode.
    """
    corpus = np.asarray(images, dtype=np.float32)
    if corpus.size == 0 or len(corpus) == 0:
        raise ConfigError("autoencoder corpus is empty")
    if corpus.ndim != 4 or corpus.shape[-1] != cfg.channels:
        raise ShapeError(f"corpus must be (N, H, W, {cfg.channels}), got {corpus.shape}")
    steps = cfg.steps if steps is None else steps
    model = build_autoencoder(cfg, seed).train()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(steps, 1), eta_min=cfg.learning_rate * 0.05)
    rng = np.random.default_rng(seed)
    data = images_to_tensor(corpus)
    history = []
    for _ in range(steps):
        idx = rng.choice(len(corpus), size=min(cfg.batch_size, len(corpus)), replace=False)
        batch = data[torch.from_numpy(np.sort(idx))]
        loss = torch.mean((model(batch) - batch) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        history.append(float(loss.item()))
    model.eval()
    if cfg.calibrate_latent_scale:
        model.cfg = dataclasses.replace(model.cfg, latent_scale=calibrated_scale(model, corpus))
    return model, history


@torch.no_grad()
def calibrated_scale(model: LatentAutoencoder, images, limit: int = 256) -> float:
    """``1 / std`` of the raw encoder output, so scaled latents have unit variance."""
    x = images_to_tensor(np.asarray(images[:limit], dtype=np.float32))
    std = float(model.encoder(x).double().std())
    return round(1.0 / max(std, 1e-3), 4)
