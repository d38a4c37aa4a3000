"""End-to-end generation: placement, crop jobs, inpainting, gating, paste-back, emission.

Planning (regions, crop jobs, word assignment) runs sequentially in image
order, inpainting may run on a thread pool, and emission is serial, so the
manifest depends only on config, seed and inputs.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash, to_dict
from .crops import CropJob, WordSource, make_crop_jobs, paste_back
from .dataset import MANIFEST_NAME, emit_record
from .errors import DataError
from .imageio import read_depth, read_image, read_seg
from .placement import propose_regions
from .recognizer import extract_patch, filter_instances, GeneratedInstance
from .sampler import batch_inpaint

log = logging.getLogger(__name__)


@dataclass
class Background:
    image_id: str
    image: np.ndarray
    seg: np.ndarray
    depth: np.ndarray


@dataclass
class GeneratedImage:
    image_id: str
    background: np.ndarray
    image: np.ndarray
    jobs: list = field(default_factory=list)
    crops: list = field(default_factory=list)
    kept: list = field(default_factory=list)
    discarded: list = field(default_factory=list)


def load_backgrounds(backgrounds_dir, maps_dir, channels: int = 3) -> list[Background]:
    """Backgrounds ``<id>.png`` with maps ``<id>_seg.png`` and ``<id>_depth.png``, sorted by id."""
    bdir, mdir = Path(backgrounds_dir), Path(maps_dir)
    paths = sorted(bdir.glob("*.png"))
    if not paths:
        raise DataError(f"{bdir}: no background images found")
    out = []
    for p in paths:
        seg_p, depth_p = mdir / f"{p.stem}_seg.png", mdir / f"{p.stem}_depth.png"
        if not seg_p.exists() or not depth_p.exists():
            raise DataError(f"{p.stem}: missing segmentation or depth map in {mdir}")
        out.append(Background(p.stem, read_image(p, channels), read_seg(seg_p), read_depth(depth_p)))
    return out


def plan_jobs(bg: Background, words: WordSource, cfg: RunConfig, factor: int) -> list[CropJob]:
    regions = propose_regions(bg.seg, bg.depth, cfg.placement)
    return make_crop_jobs(bg.image_id, bg.image.shape, regions, words, cfg.crops, factor, cfg.seed)


def finish_image(bg: Background, results, recognizer, cfg: RunConfig) -> GeneratedImage:
    rc = cfg.recognizer
    instances, patches = [], []
    for job, crop in results:
        instances.append(GeneratedInstance(bg.image_id, job.region_global, job.text, job_index=job.job_index))
        patches.append(extract_patch(crop, job.region_local, (recognizer.cfg.input_height, recognizer.cfg.input_width)))
    kept, discarded = filter_instances(instances, recognizer, rc.threshold, patches if patches else None, rc.require_transcript_match)
    keep_idx = {inst.job_index for inst in kept}
    image = bg.image
    for job, crop in results:
        # discarded crops revert to the background unless asked otherwise
        if job.job_index in keep_idx or rc.keep_unlabeled_pixels:
            image = paste_back(image, job, crop)
    return GeneratedImage(
        bg.image_id, bg.image, image, [j for j, _ in results], [c for _, c in results], kept, discarded
    )


def generate_images(backgrounds, model, recognizer, words: WordSource, cfg: RunConfig):
    """Yield a :class:`GeneratedImage` per background, in input order."""
    backgrounds = list(backgrounds)
    plans = [plan_jobs(bg, words, cfg, model.factor) for bg in backgrounds]
    sc = cfg.sampler

    def run(i):
        bg = backgrounds[i]
        return batch_inpaint(plans[i], {bg.image_id: bg.image}, model, sc.steps, sc.deterministic, sc.clip_latent)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            all_results = list(pool.map(run, range(len(backgrounds))))
    else:
        all_results = (run(i) for i in range(len(backgrounds)))
    for bg, results in zip(backgrounds, all_results):
        yield finish_image(bg, results, recognizer, cfg)


def run_generate(
    backgrounds,
    model,
    recognizer,
    words: WordSource,
    cfg: RunConfig,
    out_dir,
    checkpoint_hash: str = "",
    recognizer_hash: str = "",
) -> Path:
    """Generate a dataset into ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / MANIFEST_NAME
    if manifest.exists():
        manifest.unlink()
    chash = config_hash(cfg)
    provenance = {"checkpoint_hash": checkpoint_hash, "recognizer_hash": recognizer_hash, "seed": cfg.seed, "config_hash": chash}
    run_meta = {
        "config": to_dict(cfg),
        "config_hash": chash,
        "checkpoint_hash": checkpoint_hash,
        "recognizer_hash": recognizer_hash,
        "freeze_policy": getattr(model, "freeze_policy", {}),
        "notes": [
            "condition encoder co-trained with the denoiser (no pretrained text encoder available)",
            "text is placed fronto-parallel; no perspective warping onto depth planes",
        ],
    }
    (out / "provenance.json").write_text(json.dumps(run_meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    for gi in generate_images(backgrounds, model, recognizer, words, cfg):
        instances = gi.kept + (gi.discarded if cfg.include_discarded else [])
        instances.sort(key=lambda i: i.job_index)
        emit_record(gi.image, instances, out, gi.image_id, provenance)
        log.info("%s: %d kept, %d discarded", gi.image_id, len(gi.kept), len(gi.discarded))
    return manifest
