"""Desk-scale experiment runs shared by the scripts, the CLI and the acceptance tests."""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoencoder import train_autoencoder
from .config import RunConfig
from .crops import WordSource
from .dataset import read_manifest
from .imageio import write_image
from .model import DiffusionModel
from .pipeline import Background, run_generate
from .probe import Probe, evaluate_probe, load_detection_set, train_probe
from .recognizer import ToyRecognizer, train_toy_recognizer, word_accuracy
from .toyworld import TOY_WORDS, make_background, make_text_scene, recognizer_corpus, training_corpus
from .training import pairs_from_annotations, run_training

log = logging.getLogger(__name__)


def toy_backgrounds(n: int, seed: int, size: int = 128) -> list[Background]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = make_background(rng, size)
        out.append(Background(f"bg_{seed}_{i:05d}", s.image, s.seg, s.depth))
    return out


def toy_text_set(n: int, seed: int, size: int = 128, cfg: RunConfig | None = None):
    """Held-out images with drawn text: ``(images, polygons_per_image)``."""
    rng = np.random.default_rng(seed)
    images, polys = [], []
    placement = (cfg or RunConfig()).placement
    for _ in range(n):
        s = make_text_scene(rng, size, TOY_WORDS, placement)
        images.append(s.image)
        polys.append([q for q, _ in s.instances])
    return images, polys


@dataclass
class TrainedModels:
    model: DiffusionModel
    recognizer: ToyRecognizer
    timings: dict = field(default_factory=dict)
    ae_history: list = field(default_factory=list)
    recognizer_accuracy: float = 0.0


def train_desk_models(cfg: RunConfig, n_pairs: int = 256, recognizer_samples: int = 2000, seed: int = 0) -> TrainedModels:
    """Autoencoder, denoiser and toy recognizer on a fresh toy corpus."""
    timings = {}
    t0 = time.time()
    corpus = training_corpus(seed, n_pairs, window=cfg.training.image_size)
    images = np.stack([img for img, _, _ in corpus])
    ae, ae_hist = train_autoencoder(images, cfg.autoencoder, seed=cfg.training.seed)
    timings["autoencoder"] = time.time() - t0

    t0 = time.time()
    model = run_training(pairs_from_annotations(corpus), cfg, autoencoder=ae)
    timings["denoiser"] = time.time() - t0

    t0 = time.time()
    rec_corpus = recognizer_corpus(seed + 1, recognizer_samples)
    rec, _ = train_toy_recognizer(rec_corpus, cfg.recognizer, cfg.condition.charset, seed=seed)
    timings["recognizer"] = time.time() - t0
    acc = word_accuracy(rec, rec_corpus[:500])
    return TrainedModels(model, rec, timings, ae_hist, acc)


@dataclass
class ProbeResult:
    trained: dict
    untrained: dict
    manifest: Path
    kept_instances: int
    images: int
    timings: dict


def probe_experiment(
    models: TrainedModels,
    cfg: RunConfig,
    out_dir,
    n_generated: int = 200,
    n_heldout: int = 50,
    seed: int = 0,
) -> ProbeResult:
    """Generate a toy dataset, train the probe on it and score it on held-out drawn text."""
    out = Path(out_dir)
    timings = {}
    t0 = time.time()
    backgrounds = toy_backgrounds(n_generated, seed + 100)
    words = WordSource(TOY_WORDS, cfg.seed, cfg.condition.charset, cfg.condition.max_len)
    manifest = run_generate(backgrounds, models.model, models.recognizer, words, cfg, out / "generated")
    timings["generate"] = time.time() - t0

    records = read_manifest(manifest)
    images, polys = load_detection_set(records, manifest.parent)
    t0 = time.time()
    probe, _ = train_probe(images, polys, cfg.probe, seed=seed)
    timings["probe"] = time.time() - t0
    probe.save(out / "probe.ckpt")

    test_images, test_polys = toy_text_set(n_heldout, seed + 200, cfg=cfg)
    trained = evaluate_probe(probe, test_images, test_polys)
    untrained = evaluate_probe(Probe(cfg.probe, seed=seed), test_images, test_polys)
    kept = sum(len(p) for p in polys)
    return ProbeResult(trained, untrained, manifest, kept, len(records), timings)


def overfit_run(cfg: RunConfig | None = None, n_pairs: int = 8, steps: int = 2000, seed: int = 0):
    """Memorise a handful of pairs; returns ``(model, pairs, autoencoder_history)``."""
    cfg = copy.deepcopy(cfg or RunConfig())
    cfg.training.steps = steps
    corpus = training_corpus(seed, n_pairs, window=cfg.training.image_size)
    images = np.stack([img for img, _, _ in corpus])
    ae, ae_hist = train_autoencoder(images, cfg.autoencoder, seed=cfg.training.seed)
    pairs = pairs_from_annotations(corpus)
    model = run_training(pairs, cfg, autoencoder=ae)
    return model, pairs, ae_hist


def dump_examples(gen_images, out_dir) -> None:
    out = Path(out_dir)
    for gi in gen_images:
        write_image(out / f"{gi.image_id}.png", gi.image)
