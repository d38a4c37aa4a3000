"""Detector probe: a tiny text-region segmenter and the P/R/Hmean scorer.

IoU is measured on polygons rasterized at image resolution. Matching is
greedy: candidate pairs at or above the IoU threshold are taken in order of
decreasing IoU (ties: lower ground-truth index, then lower prediction index)
while both sides are unmatched.
"""
from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import checkpoint
from .config import ProbeConfig
from .errors import CompatibilityError, ConfigError
from .geometry import min_area_quad, rasterize_polygon, validate_polygon
from .imageio import read_image
from .torchutil import images_to_tensor, seeded


def polygon_iou(a, b, height: int, width: int) -> float:
    ma = rasterize_polygon(a, height, width)
    mb = rasterize_polygon(b, height, width)
    union = np.count_nonzero(ma | mb)
    return 0.0 if union == 0 else np.count_nonzero(ma & mb) / union


def _canvas(polys) -> tuple[int, int]:
    pts = [np.asarray(p, dtype=np.float64) for p in polys]
    if not pts:
        return 1, 1
    allp = np.concatenate(pts)
    return max(1, int(math.ceil(allp[:, 1].max()))), max(1, int(math.ceil(allp[:, 0].max())))


def greedy_matches(preds, gts, iou_threshold: float, height: int, width: int) -> list[tuple[int, int, float]]:
    """Greedy one-to-one ``(gt_index, pred_index, iou)`` matches for one image."""
    gmask = [rasterize_polygon(g, height, width) for g in gts]
    pmask = [rasterize_polygon(p, height, width) for p in preds]
    cands = []
    for gi, gm in enumerate(gmask):
        for pi, pm in enumerate(pmask):
            union = np.count_nonzero(gm | pm)
            iou = np.count_nonzero(gm & pm) / union if union else 0.0
            if iou >= iou_threshold:
                cands.append((-iou, gi, pi))
    cands.sort()
    used_g, used_p, out = set(), set(), []
    for neg, gi, pi in cands:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        out.append((gi, pi, -neg))
    return out


def prf(matches: int, n_pred: int, n_gt: int) -> dict:
    precision = matches / n_pred if n_pred else 0.0
    if n_gt:
        recall = matches / n_gt
    else:
        recall = 1.0 if n_pred == 0 else 0.0
    hmean = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return {"precision": precision, "recall": recall, "hmean": hmean}


def match_and_score(predictions, ground_truth, iou_threshold: float = 0.5, sizes=None) -> dict:
    """Corpus-level precision, recall and Hmean.

    ``predictions`` and ``ground_truth`` are per-image lists of polygons;
    ``sizes`` optionally gives ``(height, width)`` per image, otherwise a canvas
    enclosing all polygons of that image is used.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ConfigError(f"iou_threshold {iou_threshold} outside (0, 1]")
    if len(predictions) != len(ground_truth):
        raise ConfigError("predictions and ground truth cover different numbers of images")
    total_m = total_p = total_g = 0
    for i, (preds, gts) in enumerate(zip(predictions, ground_truth)):
        preds = [validate_polygon(p) for p in preds]
        gts = [validate_polygon(g) for g in gts]
        h, w = sizes[i] if sizes is not None else _canvas(preds + gts)
        total_m += len(greedy_matches(preds, gts, iou_threshold, h, w))
        total_p += len(preds)
        total_g += len(gts)
    out = prf(total_m, total_p, total_g)
    out.update({"matches": total_m, "predictions": total_p, "ground_truth": total_g})
    return out


class TinyDetector(nn.Module):
    def __init__(self, cfg: ProbeConfig, channels: int = 3):
        super().__init__()
        self.cfg = cfg
        h = cfg.hidden
        self.stem = nn.Sequential(nn.Conv2d(channels, h, 3, padding=1), nn.SiLU(), nn.Conv2d(h, h, 3, padding=1), nn.SiLU())
        self.down = nn.Sequential(
            nn.Conv2d(h, 2 * h, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(2 * h, 2 * h, 3, padding=2, dilation=2), nn.SiLU(),
            nn.Conv2d(2 * h, 2 * h, 3, padding=4, dilation=4), nn.SiLU(),
            nn.Conv2d(2 * h, 2 * h, 3, padding=8, dilation=8), nn.SiLU(),
        )
        self.head = nn.Sequential(nn.Conv2d(3 * h, h, 3, padding=1), nn.SiLU(), nn.Conv2d(h, 1, 1))
        # rare-positive prior: an untrained probe predicts background everywhere
        nn.init.constant_(self.head[-1].bias, -3.0)

    def forward(self, x):
        s = self.stem(x)
        d = F.interpolate(self.down(s), size=s.shape[-2:], mode="nearest")
        return self.head(torch.cat([s, d], dim=1))[:, 0]


class Probe:
    def __init__(self, cfg: ProbeConfig, channels: int = 3, seed: int = 0):
        self.cfg = cfg
        self.channels = channels
        with seeded(seed):
            self.net = TinyDetector(cfg, channels)
        self.net.eval()

    @torch.no_grad()
    def probability(self, image: np.ndarray) -> np.ndarray:
        return torch.sigmoid(self.net(images_to_tensor(image))).numpy()[0]

    def predict(self, image: np.ndarray) -> list[np.ndarray]:
        prob = self.probability(image)
        return components_to_quads(prob >= self.cfg.prob_threshold, self.cfg.min_component_area)

    def save(self, path, history=()) -> str:
        meta = {"kind": "probe", "probe": dataclasses.asdict(self.cfg), "channels": self.channels, "loss_history": list(history)}
        return checkpoint.save(path, checkpoint.module_arrays(self.net, "probe"), meta)

    @classmethod
    def load(cls, path) -> "Probe":
        arrays, meta = checkpoint.load(path)
        if meta.get("kind") != "probe":
            raise CompatibilityError(f"{path}: not a probe checkpoint")
        probe = cls(ProbeConfig(**meta["probe"]), meta["channels"])
        checkpoint.load_module_arrays(probe.net, arrays, "probe")
        probe.net.eval()
        return probe


def components_to_quads(binary: np.ndarray, min_area: int) -> list[np.ndarray]:
    n, labels, stats, _ = cv2.connectedComponentsWithStats(binary.astype(np.uint8), connectivity=8)
    quads = []
    for k in range(1, n):
        if stats[k, cv2.CC_STAT_AREA] < min_area:
            continue
        ys, xs = np.nonzero(labels == k)
        corners = np.concatenate([np.stack([xs + dx, ys + dy], axis=1) for dx in (0, 1) for dy in (0, 1)])
        quads.append(min_area_quad(corners))
    return quads


def load_detection_set(records, root) -> tuple[list[np.ndarray], list[list[np.ndarray]]]:
    images, polys = [], []
    for rec in records:
        images.append(read_image(Path(root) / rec.image_path))
        polys.append([np.asarray(i.polygon) for i in rec.instances])
    return images, polys


def target_mask(polys, height: int, width: int) -> np.ndarray:
    m = np.zeros((height, width), dtype=np.float32)
    for p in polys:
        m[rasterize_polygon(p, height, width)] = 1.0
    return m


def train_probe(images, polygons, cfg: ProbeConfig, seed: int = 0) -> tuple[Probe, list[float]]:
    """Fit the probe to images with text polygons; returns ``(probe, loss_history)``."""
    if len(images) == 0:
        raise ConfigError("probe training set is empty")
    probe = Probe(cfg, images[0].shape[2], seed)
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ConfigError(f"probe training images must share one shape, got {sorted(shapes)}")
    h, w = images[0].shape[:2]
    x_all = images_to_tensor(np.stack(images))
    y_all = torch.from_numpy(np.stack([target_mask(p, h, w) for p in polygons]))
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(probe.net.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(cfg.steps, 1), eta_min=cfg.learning_rate * 0.05)
    history = []
    probe.net.train()
    with seeded(seed):
        for _ in range(cfg.steps):
            idx = torch.from_numpy(np.sort(rng.choice(len(images), size=min(cfg.batch_size, len(images)), replace=False)))
            x, y = x_all[idx], y_all[idx]
            if rng.random() < 0.5:
                x, y = x.flip(-1), y.flip(-1)
            logits = probe.net(x)
            loss = F.binary_cross_entropy_with_logits(logits, y, pos_weight=torch.tensor(2.0))
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            history.append(float(loss.item()))
    probe.net.eval()
    return probe, history


def evaluate_probe(probe: Probe, images, polygons, iou_threshold: float | None = None) -> dict:
    preds = [probe.predict(im) for im in images]
    sizes = [im.shape[:2] for im in images]
    thr = probe.cfg.iou_threshold if iou_threshold is None else iou_threshold
    return match_and_score(preds, polygons, thr, sizes)
