"""Masked training pairs and the noise-prediction objective.

Each annotated instance yields one pair: the original image, a copy with the
instance polygon filled with ``FILL_VALUE``, and the binary mask. Training
encodes both with the frozen autoencoder, noises the original latent at a
uniformly drawn step and regresses the noise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from .config import RunConfig
from .denoiser import downsample_mask
from .errors import ConfigError, InvalidAnnotationError, NumericalDivergenceError, ShapeError
from .geometry import rasterize_polygon, validate_polygon
from .model import DiffusionModel, build_from_config
from .schedule import NoiseSchedule, forward_diffuse
from .torchutil import images_to_tensor, seeded

log = logging.getLogger(__name__)

FILL_VALUE = 0.0


@dataclass
class MaskedPair:
    original: np.ndarray
    masked: np.ndarray
    mask: np.ndarray  # bool (H, W)
    text: str


def make_masked_pair(image, polygon, text: str, fill: float = FILL_VALUE) -> MaskedPair:
    original = np.asarray(image, dtype=np.float32)
    if original.ndim != 3:
        raise ShapeError(f"image must be (H, W, C), got {original.shape}")
    h, w = original.shape[:2]
    poly = validate_polygon(polygon, h, w)
    mask = rasterize_polygon(poly, h, w)
    if not mask.any():
        raise InvalidAnnotationError("polygon covers no pixel centre")
    masked = original.copy()
    masked[mask] = fill
    return MaskedPair(original.copy(), masked, mask, text)


@dataclass
class EncodedBatch:
    x0: torch.Tensor  # (B, C_lat, h, w)
    zb: torch.Tensor
    m_lat: torch.Tensor  # (B, 1, h, w)
    tokens: torch.Tensor  # (B, L)


@torch.no_grad()
def encode_pairs(pairs, model: DiffusionModel) -> EncodedBatch:
    if not pairs:
        raise ConfigError("empty batch")
    ae = model.autoencoder
    originals = images_to_tensor(np.stack([p.original for p in pairs]))
    masked = images_to_tensor(np.stack([p.masked for p in pairs]))
    masks = np.stack([downsample_mask(p.mask, ae.cfg.factor) for p in pairs])[:, None]
    return EncodedBatch(
        x0=ae.encode_tensor(originals),
        zb=ae.encode_tensor(masked),
        m_lat=torch.from_numpy(masks),
        tokens=model.condition.tokens_for([p.text for p in pairs]),
    )


def sample_noised(x0: torch.Tensor, schedule: NoiseSchedule, rng: np.random.Generator):
    """Draw per-sample t uniform on [1, T] and eps ~ N(0, I); return (x_t, eps, t)."""
    b = x0.shape[0]
    t = rng.integers(1, schedule.T + 1, size=b)
    eps = rng.standard_normal(size=tuple(x0.shape))
    x0_np = x0.detach().cpu().numpy().astype(np.float64)
    x_t = np.stack([forward_diffuse(x0_np[i], int(t[i]), eps[i], schedule).x_t for i in range(b)])
    dt = x0.dtype
    return torch.from_numpy(x_t).to(dt), torch.from_numpy(eps).to(dt), torch.from_numpy(t)


def noise_loss(model: DiffusionModel, enc: EncodedBatch, x_t, eps, t) -> torch.Tensor:
    """Mean squared error between the drawn noise and the predicted noise."""
    cond = model.condition(enc.tokens)
    inp = torch.cat([x_t, enc.zb.to(x_t.dtype), enc.m_lat.to(x_t.dtype)], dim=1)
    pred = model.denoiser(inp, t, cond)
    return torch.mean((pred - eps) ** 2)


def trainable_parameters(model: DiffusionModel, freeze_condition_encoder: bool):
    params = list(model.denoiser.parameters())
    if not freeze_condition_encoder:
        params += list(model.condition.parameters())
    return params


def make_optimizer(model: DiffusionModel, cfg) -> torch.optim.Optimizer:
    return torch.optim.AdamW(
        trainable_parameters(model, cfg.freeze_condition_encoder),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        weight_decay=cfg.weight_decay,
    )


def _step_encoded(model, enc, schedule, rng, optimizer, grad_clip=None) -> float:
    x_t, eps, t = sample_noised(enc.x0, schedule, rng)
    loss = noise_loss(model, enc, x_t, eps, t)
    value = float(loss.item())
    if not math.isfinite(value):
        raise NumericalDivergenceError(f"non-finite loss {value} at timesteps {t.tolist()}")
    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        if grad_clip:
            torch.nn.utils.clip_grad_norm_([p for g in optimizer.param_groups for p in g["params"]], grad_clip)
        optimizer.step()
    return value


def training_step(batch, model: DiffusionModel, schedule: NoiseSchedule, rng: np.random.Generator, optimizer=None) -> float:
    """One optimisation step on a list of MaskedPair; returns the pre-update loss."""
    if not batch:
        raise ConfigError("training batch is empty")
    return _step_encoded(model, encode_pairs(batch, model), schedule, rng, optimizer)


def run_training(pairs, cfg: RunConfig, autoencoder=None, progress=None) -> DiffusionModel:
    """Train the condition encoder and denoiser on masked pairs.

    ``autoencoder`` must be a trained, frozen autoencoder; its parameters are
    never touched. The returned model carries its loss history and freeze
    policy.
    """
    if not pairs:
        raise ConfigError("training dataset is empty")
    if autoencoder is None:
        raise ConfigError("run_training needs a trained autoencoder")
    tr = cfg.training
    model = build_from_config(cfg, autoencoder=autoencoder)
    for p in model.autoencoder.parameters():
        p.requires_grad_(False)
    if tr.freeze_condition_encoder:
        for p in model.condition.parameters():
            p.requires_grad_(False)
    model.freeze_policy = {
        "autoencoder": "frozen",
        "condition_encoder": "frozen" if tr.freeze_condition_encoder else "co-trained",
        "denoiser": "trained",
    }
    enc_all = encode_pairs(pairs, model)
    n = len(pairs)
    bs = min(tr.batch_size, n)
    steps = tr.steps if tr.steps is not None else tr.epochs * math.ceil(n / bs)
    rng = np.random.default_rng(tr.seed)
    opt = make_optimizer(model, tr)
    model.denoiser.train()
    if not tr.freeze_condition_encoder:
        model.condition.train()
    history: list[float] = []
    order: list[int] = []
    with seeded(tr.seed):
        for step in range(steps):
            if len(order) < bs:
                order.extend(rng.permutation(n).tolist())
            idx = torch.tensor(sorted(order[:bs]))
            del order[:bs]
            enc = EncodedBatch(enc_all.x0[idx], enc_all.zb[idx], enc_all.m_lat[idx], enc_all.tokens[idx])
            try:
                history.append(_step_encoded(model, enc, model.schedule, rng, opt, tr.grad_clip))
            except NumericalDivergenceError as exc:
                raise NumericalDivergenceError(f"step {step}: {exc}") from exc
            if progress is not None:
                progress(step, history[-1])
    model.loss_history = history
    return model.eval()


def pairs_from_annotations(samples) -> list[MaskedPair]:
    """``samples`` is an iterable of ``(image, polygon, text)``."""
    return [make_masked_pair(img, poly, text) for img, poly, text in samples]
