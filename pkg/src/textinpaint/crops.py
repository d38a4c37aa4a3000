"""Local crop jobs around placement regions, and pasting results back.

Crop rule: take the integer bounding box of the region, grow it by the
margin on every side, snap the low corner down and the high corner up to
multiples of the autoencoder factor, then clamp to the image.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CropConfig
from .errors import ConfigError, ShapeError
from .geometry import translate


@dataclass
class CropJob:
    image_id: str
    job_index: int
    crop_box: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)
    region_local: np.ndarray
    text: str
    seed: int

    @property
    def job_id(self) -> str:
        return f"{self.image_id}#{self.job_index}"

    @property
    def height(self) -> int:
        return self.crop_box[3] - self.crop_box[1]

    @property
    def width(self) -> int:
        return self.crop_box[2] - self.crop_box[0]

    @property
    def region_global(self) -> np.ndarray:
        return translate(self.region_local, self.crop_box[0], self.crop_box[1])


def derive_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def snap_box(box, factor: int, width: int, height: int) -> tuple[int, int, int, int]:
    x0, y0, x1, y1 = box
    x0 = (x0 // factor) * factor
    y0 = (y0 // factor) * factor
    x1 = -((-x1) // factor) * factor
    y1 = -((-y1) // factor) * factor
    return max(0, x0), max(0, y0), min(width, x1), min(height, y1)


def crop_box_for(polygon, margin: int, factor: int, width: int, height: int) -> tuple[int, int, int, int]:
    p = np.asarray(polygon, dtype=np.float64)
    x0, y0 = int(math.floor(p[:, 0].min())), int(math.floor(p[:, 1].min()))
    x1, y1 = int(math.ceil(p[:, 0].max())), int(math.ceil(p[:, 1].max()))
    return snap_box((x0 - margin, y0 - margin, x1 + margin, y1 + margin), factor, width, height)


def margin_for(polygon, cfg: CropConfig) -> int:
    if cfg.margin is not None:
        return int(cfg.margin)
    p = np.asarray(polygon, dtype=np.float64)
    side = max(p[:, 0].max() - p[:, 0].min(), p[:, 1].max() - p[:, 1].min())
    return int(math.ceil(cfg.margin_frac * side))


def boxes_overlap(a, b) -> bool:
    return min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])


class WordSource:
    """Round-robin over a word list shuffled once with the run seed.

    Words are case-folded; words with characters outside ``charset`` or
    longer than ``max_len`` are dropped.
    """

    def __init__(self, words, seed: int = 0, charset: str | None = None, max_len: int | None = None):
        kept = []
        for w in words:
            w = w.strip().lower()
            if not w:
                continue
            if charset is not None and any(c not in charset for c in w):
                continue
            if max_len is not None and len(w) > max_len:
                continue
            kept.append(w)
        if not kept:
            raise ConfigError("word source is empty after filtering to the charset")
        order = np.random.default_rng(seed).permutation(len(kept))
        self.words = [kept[i] for i in order]
        self._pos = 0

    @classmethod
    def from_file(cls, path, seed: int = 0, charset: str | None = None, max_len: int | None = None) -> "WordSource":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read word list: {exc}") from exc
        return cls(lines, seed, charset, max_len)

    def next_word(self) -> str:
        w = self.words[self._pos % len(self.words)]
        self._pos += 1
        return w


def make_crop_jobs(
    image_id: str,
    image_shape: tuple[int, ...],
    regions,
    words: WordSource,
    cfg: CropConfig,
    factor: int,
    seed: int = 0,
) -> list[CropJob]:
    """Greedy, largest-area-first selection of non-overlapping crop boxes."""
    if words is None or not getattr(words, "words", None):
        raise ConfigError("word source is empty")
    height, width = image_shape[:2]
    ordered = sorted(regions, key=lambda r: (-r.area, r.segment_id, r.box[1], r.box[0]))
    jobs: list[CropJob] = []
    for region in ordered:
        if len(jobs) >= cfg.max_jobs:
            break
        box = crop_box_for(region.polygon, margin_for(region.polygon, cfg), factor, width, height)
        if any(boxes_overlap(box, j.crop_box) for j in jobs):
            continue
        idx = len(jobs)
        jobs.append(
            CropJob(
                image_id=image_id,
                job_index=idx,
                crop_box=box,
                region_local=translate(region.polygon, -box[0], -box[1]),
                text=words.next_word(),
                seed=derive_seed(seed, image_id, idx),
            )
        )
    return jobs


def extract_crop(image: np.ndarray, job: CropJob) -> np.ndarray:
    x0, y0, x1, y1 = job.crop_box
    return np.array(image[y0:y1, x0:x1], copy=True)


def paste_back(image: np.ndarray, job: CropJob, generated_crop: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = job.crop_box
    gen = np.asarray(generated_crop)
    if gen.shape[:2] != (y1 - y0, x1 - x0) or gen.shape[2:] != image.shape[2:]:
        raise ShapeError(f"{job.job_id}: generated crop {gen.shape} does not fit box {job.crop_box}")
    out = np.array(image, copy=True)
    out[y0:y1, x0:x1] = gen
    return out
