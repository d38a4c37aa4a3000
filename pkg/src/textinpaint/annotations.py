"""Training datasets on disk: a directory of images plus one JSONL annotation file.

Each line of ``annotations.jsonl`` describes one text instance::

    {"image": "img_001.png", "polygon": [[x, y], ...], "text": "word"}

Image paths are relative to the dataset directory. Several lines may refer to
the same image.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidAnnotationError, ManifestParseError
from .geometry import validate_polygon
from .imageio import read_image, write_image

ANNOTATIONS_NAME = "annotations.jsonl"


@dataclass
class Annotation:
    image: str
    polygon: np.ndarray
    text: str


def parse_annotation_lines(lines) -> list[Annotation]:
    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            if not isinstance(d.get("text"), str) or not isinstance(d.get("image"), str):
                raise ValueError("'image' and 'text' must be strings")
            out.append(Annotation(d["image"], np.asarray(d["polygon"], dtype=np.float64), d["text"]))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ManifestParseError(str(exc), n) from exc
    return out


def load_annotations(root, name: str = ANNOTATIONS_NAME) -> list[Annotation]:
    path = Path(root) / name
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot read annotations: {exc}") from exc
    try:
        return parse_annotation_lines(text.splitlines())
    except ManifestParseError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc


def window_around(box, size: int, width: int, height: int) -> tuple[int, int, int, int]:
    """A ``size x size`` window centred on ``box`` and clamped to the image."""
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
    wx = int(np.clip(cx - size // 2, 0, width - size))
    wy = int(np.clip(cy - size // 2, 0, height - size))
    return wx, wy, wx + size, wy + size


def instance_window(image: np.ndarray, polygon, size: int):
    """Cut a ``size``-square window holding ``polygon``; returns ``(window, local_polygon)``.

    Returns ``None`` when the image is smaller than the window or the
    polygon does not fit in one window.
    """
    h, w = image.shape[:2]
    q = np.asarray(polygon, dtype=np.float64)
    if h < size or w < size:
        return None
    box = (int(q[:, 0].min()), int(q[:, 1].min()), int(np.ceil(q[:, 0].max())), int(np.ceil(q[:, 1].max())))
    if box[2] - box[0] > size or box[3] - box[1] > size:
        return None
    wx0, wy0, wx1, wy1 = window_around(box, size, w, h)
    return image[wy0:wy1, wx0:wx1].copy(), q - np.array([wx0, wy0])


def training_windows(root, size: int, channels: int = 3) -> list[tuple[np.ndarray, np.ndarray, str]]:
    """Per-instance ``(window, local_polygon, text)`` triples from a dataset directory.

    Instances that do not fit one window are skipped; every polygon is
    validated against its full image first.
    """
    root = Path(root)
    cache: dict[str, np.ndarray] = {}
    out = []
    for ann in load_annotations(root):
        if ann.image not in cache:
            cache[ann.image] = read_image(root / ann.image, channels)
        img = cache[ann.image]
        try:
            validate_polygon(ann.polygon, img.shape[0], img.shape[1])
        except InvalidAnnotationError as exc:
            raise InvalidAnnotationError(f"{ann.image}: {exc}") from exc
        win = instance_window(img, ann.polygon, size)
        if win is not None:
            out.append((win[0], win[1], ann.text))
    if not out:
        raise DataError(f"{root}: no instance fits a {size}x{size} training window")
    return out


def word_crops(root, channels: int = 3) -> list[tuple[np.ndarray, str]]:
    """Bounding-box crops of every annotated instance, for recognizer training."""
    root = Path(root)
    cache: dict[str, np.ndarray] = {}
    out = []
    for ann in load_annotations(root):
        if ann.image not in cache:
            cache[ann.image] = read_image(root / ann.image, channels)
        img = cache[ann.image]
        q = validate_polygon(ann.polygon, img.shape[0], img.shape[1])
        x0, y0 = int(np.floor(q[:, 0].min())), int(np.floor(q[:, 1].min()))
        x1, y1 = int(np.ceil(q[:, 0].max())), int(np.ceil(q[:, 1].max()))
        out.append((img[y0:y1, x0:x1].copy(), ann.text))
    return out


def write_dataset(root, samples) -> None:
    """Write ``[(image_id, image, [(polygon, text), ...])]`` in the on-disk format."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for image_id, image, instances in samples:
        name = f"{image_id}.png"
        write_image(root / name, image)
        for poly, text in instances:
            rec = {"image": name, "polygon": np.asarray(poly, dtype=float).tolist(), "text": text}
            lines.append(json.dumps(rec, sort_keys=True))
    (root / ANNOTATIONS_NAME).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
