"""Recognizer-confidence gate for generated text instances.

Any object with ``recognize(patch) -> (text, confidence)`` can act as the
gate's recognizer. :class:`ToyRecognizer` is a small trainable one: a CNN that
predicts one character (or PAD, meaning end of word) per fixed slot.
Confidence is the geometric mean of the per-slot max probabilities over the
decoded characters plus the terminating slot.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Protocol

import cv2
import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import checkpoint
from .condition import PAD, Charset, tokenize
from .config import DEFAULT_CHARSET, RecognizerConfig
from .errors import CompatibilityError, ConfigError
from .geometry import validate_polygon
from .torchutil import images_to_tensor, seeded


@dataclass
class GeneratedInstance:
    image_id: str
    polygon: np.ndarray
    text: str
    recognized: str = ""
    confidence: float = 0.0
    kept: bool = False
    job_index: int = -1

    def to_json(self) -> dict:
        return {
            "polygon": np.asarray(self.polygon, dtype=float).tolist(),
            "text": self.text,
            "recognized": self.recognized,
            "confidence": float(self.confidence),
            "kept": bool(self.kept),
        }

    @classmethod
    def from_json(cls, image_id: str, d: dict) -> "GeneratedInstance":
        return cls(
            image_id=image_id,
            polygon=np.asarray(d["polygon"], dtype=np.float64),
            text=d["text"],
            recognized=d.get("recognized", ""),
            confidence=float(d.get("confidence", 0.0)),
            kept=bool(d.get("kept", True)),
        )


class Recognizer(Protocol):
    def recognize(self, patch: np.ndarray) -> tuple[str, float]: ...


def resize_pad_geometry(box_w: int, box_h: int, out_w: int, out_h: int):
    """Scale, resized size and (top, left) offsets for aspect-preserving fit-and-centre."""
    scale = min(out_w / box_w, out_h / box_h)
    nw = min(out_w, max(1, int(round(box_w * scale))))
    nh = min(out_h, max(1, int(round(box_h * scale))))
    return scale, (nw, nh), ((out_h - nh) // 2, (out_w - nw) // 2)


def extract_patch(image, polygon, size=(32, 96), fill: float = 0.0) -> np.ndarray:
    """Bounding-box crop of ``polygon`` resized into ``size = (height, width)``.

    The crop is scaled by ``min(W / w, H / h)``, centred, and the remainder
    filled with ``fill``.
    """
    img = np.asarray(image, dtype=np.float32)
    h, w = img.shape[:2]
    poly = validate_polygon(polygon, h, w)
    x0 = int(math.floor(poly[:, 0].min()))
    y0 = int(math.floor(poly[:, 1].min()))
    x1 = int(math.ceil(poly[:, 0].max()))
    y1 = int(math.ceil(poly[:, 1].max()))
    crop = img[y0:y1, x0:x1]
    out_h, out_w = size
    _, (nw, nh), (top, left) = resize_pad_geometry(x1 - x0, y1 - y0, out_w, out_h)
    resized = cv2.resize(crop, (nw, nh), interpolation=cv2.INTER_LINEAR)
    if resized.ndim == 2:
        resized = resized[..., None]
    out = np.full((out_h, out_w, img.shape[2]), fill, dtype=np.float32)
    out[top : top + nh, left : left + nw] = resized
    return out


class SlotRecognizerNet(nn.Module):
    def __init__(self, cfg: RecognizerConfig, vocab: int, channels: int = 3):
        super().__init__()
        h = cfg.hidden
        self.max_len, self.vocab = cfg.max_len, vocab
        self.features = nn.Sequential(
            nn.Conv2d(channels, h, 3, padding=1), nn.BatchNorm2d(h), nn.SiLU(), nn.MaxPool2d(2),
            nn.Conv2d(h, 2 * h, 3, padding=1), nn.BatchNorm2d(2 * h), nn.SiLU(), nn.MaxPool2d(2),
            nn.Conv2d(2 * h, 2 * h, 3, padding=1), nn.BatchNorm2d(2 * h), nn.SiLU(), nn.MaxPool2d(2),
        )
        flat = 2 * h * (cfg.input_height // 8) * (cfg.input_width // 8)
        self.head = nn.Sequential(nn.Flatten(), nn.Dropout(0.1), nn.Linear(flat, 256), nn.SiLU(), nn.Linear(256, cfg.max_len * vocab))

    def forward(self, x):
        return self.head(self.features(x)).reshape(-1, self.max_len, self.vocab)


def decode_slots(probs: np.ndarray, charset: Charset) -> tuple[str, float]:
    ids = probs.argmax(axis=-1)
    chars = []
    for i in ids:
        if i == PAD:
            break
        chars.append(charset.char(int(i)))
    used = min(len(chars) + 1, len(ids))
    conf = float(np.exp(np.mean(np.log(np.clip(probs.max(axis=-1)[:used], 1e-12, 1.0)))))
    return "".join(chars), min(max(conf, 0.0), 1.0)


class ToyRecognizer:
    def __init__(self, cfg: RecognizerConfig, charset: str = DEFAULT_CHARSET, channels: int = 3, seed: int = 0):
        self.cfg = cfg
        self.charset = Charset(charset)
        self.channels = channels
        with seeded(seed):
            self.net = SlotRecognizerNet(cfg, self.charset.size, channels)
        self.net.eval()

    @property
    def input_size(self) -> tuple[int, int]:
        return self.cfg.input_height, self.cfg.input_width

    @torch.no_grad()
    def probabilities(self, patches) -> np.ndarray:
        self.net.eval()
        x = images_to_tensor(np.asarray(patches, dtype=np.float32))
        return F.softmax(self.net(x), dim=-1).double().numpy()

    def recognize_batch(self, patches) -> list[tuple[str, float]]:
        if len(patches) == 0:
            return []
        return [decode_slots(p, self.charset) for p in self.probabilities(patches)]

    def recognize(self, patch) -> tuple[str, float]:
        return self.recognize_batch([patch])[0]

    def save(self, path) -> str:
        meta = {
            "kind": "recognizer",
            "recognizer": dataclasses.asdict(self.cfg),
            "charset": self.charset.chars,
            "charset_hash": self.charset.hash,
            "channels": self.channels,
            "input_size": list(self.input_size),
        }
        return checkpoint.save(path, checkpoint.module_arrays(self.net, "recognizer"), meta)

    @classmethod
    def load(cls, path, expect_charset_hash: str | None = None) -> "ToyRecognizer":
        arrays, meta = checkpoint.load(path)
        if meta.get("kind") != "recognizer":
            raise CompatibilityError(f"{path}: not a recognizer checkpoint")
        if expect_charset_hash is not None and meta["charset_hash"] != expect_charset_hash:
            raise CompatibilityError(f"{path}: charset hash {meta['charset_hash']} != expected {expect_charset_hash}")
        rec = cls(RecognizerConfig(**meta["recognizer"]), meta["charset"], meta["channels"])
        checkpoint.load_module_arrays(rec.net, arrays, "recognizer")
        rec.net.eval()
        return rec


def filter_instances(instances, recognizer=None, threshold: float = 0.9, patches=None, require_match: bool = False):
    """Split instances into ``(kept, discarded)`` by recognizer confidence.

    With ``patches`` given, each patch is recognised first and the result
    recorded on the corresponding instance; otherwise the confidences already
    on the instances are used. Inputs are not mutated; order is preserved.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold {threshold} outside [0, 1]")
    instances = list(instances)
    if patches is not None:
        if len(patches) != len(instances):
            raise ConfigError("need exactly one patch per instance")
        if hasattr(recognizer, "recognize_batch"):
            results = recognizer.recognize_batch(patches)
        else:
            results = [recognizer.recognize(p) for p in patches]
    else:
        results = [(inst.recognized, inst.confidence) for inst in instances]
    kept, discarded = [], []
    for inst, (text, conf) in zip(instances, results):
        ok = conf >= threshold
        if require_match:
            ok = ok and text.lower() == inst.text.lower()
        out = dataclasses.replace(inst, recognized=text, confidence=float(conf), kept=bool(ok))
        (kept if ok else discarded).append(out)
    return kept, discarded


@dataclass
class _Augment:
    rng: np.random.Generator
    fill: float = 0.0

    def __call__(self, img: np.ndarray) -> np.ndarray:
        rng = self.rng
        out = img.astype(np.float32)
        if rng.random() < 0.5:
            k = int(rng.choice([3, 5]))
            out = cv2.GaussianBlur(out, (k, k), 0)
        if rng.random() < 0.5:
            h, w = out.shape[:2]
            small = cv2.resize(out, (max(1, w // 2), max(1, h // 2)), interpolation=cv2.INTER_AREA)
            out = cv2.resize(small, (w, h), interpolation=cv2.INTER_LINEAR)
        if out.ndim == 2:
            out = out[..., None]
        out = out * rng.uniform(0.8, 1.1) + rng.uniform(-0.1, 0.1)
        out = out + rng.normal(0, rng.uniform(0.0, 0.08), size=out.shape)
        return np.clip(out, -1, 1).astype(np.float32)


def _negative(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A junk patch the size of ``img``: noise, a flat fill, a smeared or a scrambled word."""
    h, w = img.shape[:2]
    kind = int(rng.integers(4))
    if kind == 0:
        out = rng.uniform(-1, 1, size=img.shape).astype(np.float32)
        if rng.random() < 0.5:
            out = cv2.GaussianBlur(out, (0, 0), float(rng.uniform(0.5, 2.0))).reshape(img.shape)
    elif kind == 1:
        out = np.broadcast_to(rng.uniform(-1, 1, size=img.shape[2]), img.shape).astype(np.float32)
        out = out + rng.normal(0, 0.05, size=img.shape).astype(np.float32)
    elif kind == 2:
        sigma = float(rng.uniform(0.25, 0.5)) * h
        out = cv2.GaussianBlur(img.astype(np.float32), (0, 0), sigma).reshape(img.shape)
    else:
        cuts = np.linspace(0, w, int(rng.integers(4, 7)) + 1).astype(int)
        strips = [img[:, a:b] for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
        out = np.concatenate([strips[i] for i in rng.permutation(len(strips))], axis=1)
        out = out[::-1] if rng.random() < 0.5 else out
    return np.clip(out, -1, 1).astype(np.float32)


def _patch_for(img, size):
    h, w = img.shape[:2]
    return extract_patch(img, [[0, 0], [w, 0], [w, h], [0, h]], size)


def train_toy_recognizer(corpus, cfg: RecognizerConfig, charset: str = DEFAULT_CHARSET, seed: int = 0, augment: bool = True):
    """Fit a :class:`ToyRecognizer` on ``[(box_image, word)]``; returns ``(recognizer, loss_history)``."""
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("recognizer corpus is empty")
    channels = corpus[0][0].shape[2]
    rec = ToyRecognizer(cfg, charset, channels, seed)
    cs = rec.charset
    targets = torch.from_numpy(np.stack([tokenize(w, cs, cfg.max_len) for _, w in corpus]))
    rng = np.random.default_rng(seed)
    aug = _Augment(rng)
    clean = np.stack([_patch_for(img, rec.input_size) for img, _ in corpus])
    opt = torch.optim.Adam(rec.net.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(cfg.steps, 1), eta_min=cfg.learning_rate * 0.05)
    n_neg = int(round(cfg.batch_size * cfg.negative_fraction))
    history = []
    rec.net.train()
    with seeded(seed):
        for _ in range(cfg.steps):
            idx = rng.integers(0, len(corpus), size=cfg.batch_size - n_neg)
            if augment:
                batch = np.stack([_patch_for(aug(corpus[i][0]), rec.input_size) for i in idx])
            else:
                batch = clean[idx]
            if n_neg:
                junk = [_negative(corpus[i][0], rng) for i in rng.integers(0, len(corpus), size=n_neg)]
                batch = np.concatenate([batch, np.stack([_patch_for(j, rec.input_size) for j in junk])])
            logits = rec.net(images_to_tensor(batch))
            pos = logits[: len(idx)]
            loss = F.cross_entropy(pos.reshape(-1, cs.size), targets[torch.from_numpy(idx)].reshape(-1))
            if n_neg:
                # junk is pushed towards the uniform distribution, i.e. low confidence
                loss = loss - F.log_softmax(logits[len(idx) :], dim=-1).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            history.append(float(loss.item()))
    rec.net.eval()
    return rec, history


def word_accuracy(recognizer, corpus) -> float:
    corpus = list(corpus)
    if not corpus:
        return 0.0
    patches = [_patch_for(img, recognizer.input_size) for img, _ in corpus]
    preds = recognizer.recognize_batch(patches)
    return float(np.mean([p == w.lower() for (p, _), (_, w) in zip(preds, corpus)]))
