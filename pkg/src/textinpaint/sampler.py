"""Inference-time inpainting from Gaussian noise in the latent space."""
from __future__ import annotations

import numpy as np
import torch

from .crops import CropJob, extract_crop
from .denoiser import downsample_mask
from .errors import CompatibilityError, DataError, ShapeError
from .geometry import rasterize_polygon, validate_polygon
from .model import DiffusionModel
from .schedule import denoise_step, sampling_timesteps
from .torchutil import images_to_tensor
from .training import FILL_VALUE


def _check_inputs(crop, mask, factor: int):
    crop = np.asarray(crop, dtype=np.float32)
    mask = np.asarray(mask).astype(bool)
    if crop.ndim != 3 or mask.shape != crop.shape[:2]:
        raise ShapeError(f"crop {crop.shape} and mask {mask.shape} do not match")
    if crop.shape[0] % factor or crop.shape[1] % factor:
        raise ShapeError(f"crop dims {crop.shape[:2]} not divisible by {factor}")
    return crop, mask


@torch.no_grad()
def _sample(model: DiffusionModel, crops, masks, texts, seeds, steps: int, deterministic: bool, clip: float | None):
    """Shared batched sampling loop. All crops must have one shape."""
    ae, sched = model.autoencoder, model.schedule
    masked = np.stack([np.where(m[..., None], np.float32(FILL_VALUE), c) for c, m in zip(crops, masks)])
    zb = ae.encode_tensor(images_to_tensor(masked))
    m_lat = torch.from_numpy(np.stack([downsample_mask(m, ae.cfg.factor) for m in masks])[:, None])
    cond = model.condition(model.condition.tokens_for(texts))
    gens = [np.random.default_rng(s) for s in seeds]
    shape = tuple(zb.shape[1:])
    z = np.stack([g.standard_normal(shape) for g in gens])
    ts = sampling_timesteps(sched.T, steps)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        inp = torch.cat([torch.from_numpy(z).float(), zb, m_lat], dim=1)
        eps = model.denoiser(inp, torch.full((len(crops),), t), cond).double().numpy()
        noise = None if deterministic or t_prev == 0 else np.stack([g.standard_normal(shape) for g in gens])
        z = denoise_step(z, eps, t, sched, noise=noise, t_prev=t_prev, clip=clip)
    decoded = ae.decode_tensor(torch.from_numpy(z).float()).numpy().transpose(0, 2, 3, 1)
    decoded = np.clip(decoded, -1.0, 1.0)
    # outside the mask the result is the input crop, exactly
    return [np.where(m[..., None], d, c).astype(np.float32) for d, c, m in zip(decoded, crops, masks)]


def _clip_value(model: DiffusionModel, clip_latent: bool):
    return model.autoencoder.cfg.latent_scale if clip_latent else None


def inpaint(
    crop,
    mask,
    text: str,
    model: DiffusionModel,
    steps: int = 50,
    seed: int = 0,
    deterministic: bool = True,
    clip_latent: bool = True,
    charset_hash: str | None = None,
) -> np.ndarray:
    """Generate ``text`` inside ``mask`` of ``crop``; pixels outside the mask are returned unchanged."""
    if charset_hash is not None and charset_hash != model.charset_hash:
        raise CompatibilityError(f"checkpoint charset {model.charset_hash} != expected {charset_hash}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    crop, mask = _check_inputs(crop, mask, model.factor)
    if not mask.any():
        return crop.copy()
    return _sample(model, [crop], [mask], [text], [seed], steps, deterministic, _clip_value(model, clip_latent))[0]


def job_mask(job: CropJob) -> np.ndarray:
    return rasterize_polygon(job.region_local, job.height, job.width)


def _validate_job(job: CropJob, backgrounds, factor: int):
    try:
        if job.image_id not in backgrounds:
            raise DataError(f"no background for image {job.image_id!r}")
        bg = backgrounds[job.image_id]
        x0, y0, x1, y1 = job.crop_box
        if not (0 <= x0 < x1 <= bg.shape[1] and 0 <= y0 < y1 <= bg.shape[0]):
            raise ShapeError(f"crop box {job.crop_box} outside background {bg.shape[:2]}")
        if job.width % factor or job.height % factor:
            raise ShapeError(f"crop box {job.crop_box} sides not divisible by {factor}")
        validate_polygon(job.region_local, job.height, job.width)
    except DataError as exc:
        raise type(exc)(f"job {job.job_id}: {exc}") from exc


def batch_inpaint(
    jobs,
    backgrounds: dict,
    model: DiffusionModel,
    steps: int = 50,
    deterministic: bool = True,
    clip_latent: bool = True,
) -> list[tuple[CropJob, np.ndarray]]:
    """Inpaint every job; results come back in input order.

    All jobs are validated before any sampling starts. Each job is sampled on
    its own: batched convolutions reorder floating-point reductions, and a
    job's output must not depend on which other jobs share its batch.
    """
    jobs = list(jobs)
    for job in jobs:
        _validate_job(job, backgrounds, model.factor)
    clip = _clip_value(model, clip_latent)
    out = []
    for job in jobs:
        crop = extract_crop(backgrounds[job.image_id], job)
        mask = job_mask(job)
        if not mask.any():
            out.append((job, crop))
            continue
        result = _sample(model, [crop], [mask], [job.text], [job.seed], steps, deterministic, clip)[0]
        out.append((job, result))
    return out
