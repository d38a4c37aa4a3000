"""Procedural toy scenes: piecewise-planar backgrounds with maps, and text.

Backgrounds are recursive axis-aligned partitions. Each cell is a segment with
a smoothly shaded colour and a planar depth; one cell per scene is textured
with pixel noise and noisy depth so the placement filter has something to
reject. Words are drawn with a Hershey font and stretched to fill their box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .annotations import instance_window
from .config import PlacementConfig
from .geometry import box_to_quad
from .placement import propose_regions

TOY_WORDS = [
    "cat", "dog", "sun", "map", "box", "key", "fox", "ink",
    "owl", "red", "tree", "blue", "lamp", "road", "star", "moon",
]


@dataclass
class ToyScene:
    image: np.ndarray  # (H, W, 3) float32 in [-1, 1]
    seg: np.ndarray  # (H, W) int32
    depth: np.ndarray  # (H, W) float64, positive
    instances: list = field(default_factory=list)  # [(quad, word)]


def _partition(rng, x0, y0, x1, y1, min_side, depth=0):
    w, h = x1 - x0, y1 - y0
    can_v, can_h = w >= 2 * min_side, h >= 2 * min_side
    if depth >= 3 or not (can_v or can_h) or (depth >= 1 and rng.random() < 0.25):
        return [(x0, y0, x1, y1)]
    vertical = can_v and (not can_h or (w >= h if rng.random() < 0.7 else rng.random() < 0.5))
    if vertical:
        cut = int(rng.integers(x0 + min_side, x1 - min_side + 1))
        return _partition(rng, x0, y0, cut, y1, min_side, depth + 1) + _partition(rng, cut, y0, x1, y1, min_side, depth + 1)
    cut = int(rng.integers(y0 + min_side, y1 - min_side + 1))
    return _partition(rng, x0, y0, x1, cut, min_side, depth + 1) + _partition(rng, x0, cut, x1, y1, min_side, depth + 1)


def make_background(rng: np.random.Generator, size: int = 128, textured: bool = True) -> ToyScene:
    cells = _partition(rng, 0, 0, size, size, min_side=max(8, size // 5))
    image = np.zeros((size, size, 3), np.float32)
    seg = np.zeros((size, size), np.int32)
    depth = np.zeros((size, size), np.float64)
    noisy_cell = int(rng.integers(len(cells))) if textured and len(cells) > 1 else -1
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    for label, (x0, y0, x1, y1) in enumerate(cells, start=1):
        sl = (slice(y0, y1), slice(x0, x1))
        seg[sl] = label
        base = rng.uniform(-0.75, 0.75, size=3)
        gx, gy = rng.uniform(-0.15, 0.15, size=2)
        shade = gx * (xx[sl] - 0.5) + gy * (yy[sl] - 0.5)
        image[sl] = (base[None, None, :] + shade[..., None]).astype(np.float32)
        c = rng.uniform(5.0, 30.0)
        a, b = rng.uniform(-3.0, 3.0, size=2)
        depth[sl] = c + a * xx[sl] + b * yy[sl]
        if label - 1 == noisy_cell:
            image[sl] += rng.normal(0.0, 0.3, size=image[sl].shape).astype(np.float32)
            depth[sl] += np.abs(rng.normal(0.0, 6.0, size=depth[sl].shape))
    return ToyScene(np.clip(image, -1.0, 1.0), seg, depth)


def word_alpha(word: str, width: int, height: int, pad: int = 1) -> np.ndarray:
    """Coverage map in [0, 1] of ``word`` stretched to a ``height x width`` box."""
    canvas = np.zeros((60, 30 * max(len(word), 1) + 20), np.uint8)
    cv2.putText(canvas, word, (5, 45), cv2.FONT_HERSHEY_SIMPLEX, 1.3, 255, 4, cv2.LINE_AA)
    ys, xs = np.nonzero(canvas)
    out = np.zeros((height, width), np.float32)
    if len(xs) == 0:
        return out
    ink = canvas[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    iw, ih = max(width - 2 * pad, 1), max(height - 2 * pad, 1)
    out[pad : pad + ih, pad : pad + iw] = cv2.resize(ink, (iw, ih), interpolation=cv2.INTER_AREA).astype(np.float32) / 255.0
    return out


def text_color(patch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lum = float(np.mean(patch))
    level = rng.uniform(-1.0, -0.6) if lum > -0.1 else rng.uniform(0.6, 1.0)
    tint = rng.uniform(-0.15, 0.15, size=3)
    return np.clip(level + tint, -1.0, 1.0).astype(np.float32)


def draw_word(image: np.ndarray, box, word: str, rng: np.random.Generator) -> np.ndarray:
    x0, y0, x1, y1 = box
    out = np.array(image, copy=True)
    patch = out[y0:y1, x0:x1]
    a = word_alpha(word, x1 - x0, y1 - y0)[..., None]
    out[y0:y1, x0:x1] = patch * (1.0 - a) + text_color(patch, rng) * a
    return out


def make_text_scene(
    rng: np.random.Generator,
    size: int = 128,
    words=TOY_WORDS,
    placement: PlacementConfig | None = None,
    max_instances: int = 4,
) -> ToyScene:
    """Background plus words drawn into proposed placement boxes."""
    scene = make_background(rng, size)
    regions = propose_regions(scene.seg, scene.depth, placement or PlacementConfig())
    image = scene.image
    for region in regions[:max_instances]:
        word = words[int(rng.integers(len(words)))]
        image = draw_word(image, region.box, word, rng)
        scene.instances.append((region.polygon, word))
    scene.image = image
    return scene


def instance_windows(scene: ToyScene, size: int = 64):
    """Per-instance training windows: ``[(window_image, local_quad, word)]``."""
    out = []
    for quad, word in scene.instances:
        win = instance_window(scene.image, quad, size)
        if win is not None:
            out.append((win[0], win[1], word))
    return out


def training_corpus(seed: int, n_pairs: int, scene_size: int = 128, window: int = 64, words=TOY_WORDS):
    """``n_pairs`` (image, quad, word) triples cut from fresh toy text scenes."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_pairs:
        scene = make_text_scene(rng, scene_size, words)
        out.extend(instance_windows(scene, window))
    return out[:n_pairs]


def recognizer_corpus(seed: int, n: int, words=TOY_WORDS, height_range=(10, 16), width_range=(16, 40)):
    """Word boxes drawn on random flat or shaded backgrounds: ``[(box_image, word)]``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        word = words[int(rng.integers(len(words)))]
        h = int(rng.integers(height_range[0], height_range[1] + 1))
        w = int(rng.integers(max(width_range[0], h), width_range[1] + 1))
        bg = rng.uniform(-0.75, 0.75, size=3).astype(np.float32)
        img = np.broadcast_to(bg, (h, w, 3)).astype(np.float32)
        img = img + rng.normal(0, 0.03, size=img.shape).astype(np.float32)
        img = draw_word(np.clip(img, -1, 1), (0, 0, w, h), word, rng)
        out.append((img, word))
    return out


def write_backgrounds(out_dir, n: int, seed: int, size: int = 128) -> list[str]:
    """Write toy backgrounds with their maps; returns the image ids."""
    from .imageio import write_depth, write_image, write_seg

    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(n):
        scene = make_background(rng, size)
        stem = f"bg_{i:05d}"
        write_image(out / "backgrounds" / f"{stem}.png", scene.image)
        write_seg(out / "maps" / f"{stem}_seg.png", scene.seg)
        write_depth(out / "maps" / f"{stem}_depth.png", scene.depth)
        ids.append(stem)
    return ids


def box_quad(box) -> np.ndarray:
    return box_to_quad(*box)
