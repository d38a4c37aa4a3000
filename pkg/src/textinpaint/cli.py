"""Command-line entry point: ``textinpaint <subcommand> [options]``.

Configuration comes from an optional YAML file (``--config``) with sections
named after :class:`~textinpaint.config.RunConfig` fields, then ``--set
section.key=value`` overrides, then the global flags. Logs go to stderr,
artifacts to ``--out-dir``. Failures end with one JSON line on stderr and a
non-zero exit code (2 config, 3 data, 4 numerical divergence).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import checkpoint
from .config import RunConfig, config_hash, load_config, to_dict
from .errors import ConfigError, DataError, TextInpaintError

log = logging.getLogger("textinpaint")


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        out[key.strip()] = yaml.safe_load(raw) if raw else ""
    return out


def build_config(args) -> RunConfig:
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides.setdefault("training.seed", args.seed)
    if args.deterministic is not None:
        overrides["deterministic"] = args.deterministic
        overrides.setdefault("sampler.deterministic", args.deterministic)
    if args.threads is not None:
        overrides["threads"] = args.threads
    if getattr(args, "keep_unlabeled_pixels", False):
        overrides["recognizer.keep_unlabeled_pixels"] = True
    if getattr(args, "include_discarded", False):
        overrides["include_discarded"] = True
    if args.config is not None and not Path(args.config).exists():
        raise ConfigError(f"{args.config}: config file not found")
    return load_config(args.config, overrides)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: {what} not found")
    return p


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def cmd_train_autoencoder(args, cfg: RunConfig) -> None:
    from .annotations import training_windows
    from .autoencoder import psnr, decode, encode, train_autoencoder
    from .model import save_autoencoder

    windows = training_windows(_require(args.data, "dataset"), cfg.training.image_size, cfg.autoencoder.channels)
    images = np.stack([w for w, _, _ in windows])
    ae, history = train_autoencoder(images, cfg.autoencoder, seed=cfg.training.seed)
    digest = save_autoencoder(_out_dir(args) / "autoencoder.ckpt", ae, history)
    score = float(np.mean([psnr(decode(ae, encode(ae, im)), im) for im in images[:32]]))
    log.info("autoencoder: %d windows, final loss %.4g, PSNR %.2f dB", len(images), history[-1], score)
    _emit({"checkpoint": str(Path(args.out_dir) / "autoencoder.ckpt"), "sha256": digest, "psnr": score, "final_loss": history[-1]})


def cmd_train_denoiser(args, cfg: RunConfig) -> None:
    from .annotations import training_windows
    from .model import load_autoencoder
    from .training import pairs_from_annotations, run_training

    ae = load_autoencoder(_require(args.autoencoder, "autoencoder checkpoint"))
    if ae.cfg != cfg.autoencoder:
        log.info("using the autoencoder configuration stored in %s", args.autoencoder)
        cfg.autoencoder = ae.cfg
    windows = training_windows(_require(args.data, "dataset"), cfg.training.image_size, ae.cfg.channels)
    pairs = pairs_from_annotations(windows)

    def progress(step, loss):
        if step % 100 == 0:
            log.info("step %d loss %.4f", step, loss)

    model = run_training(pairs, cfg, autoencoder=ae, progress=progress)
    digest = model.save(_out_dir(args) / "model.ckpt")
    hist = model.loss_history
    _emit({
        "checkpoint": str(Path(args.out_dir) / "model.ckpt"),
        "sha256": digest,
        "pairs": len(pairs),
        "initial_loss": hist[0],
        "final_loss": float(np.mean(hist[-100:])),
        "freeze_policy": model.freeze_policy,
    })


def cmd_train_recognizer(args, cfg: RunConfig) -> None:
    from .recognizer import train_toy_recognizer, word_accuracy

    if args.data is not None:
        from .annotations import word_crops

        corpus = word_crops(_require(args.data, "dataset"))
    else:
        from .toyworld import recognizer_corpus

        corpus = recognizer_corpus(cfg.seed, args.toy_samples)
    rec, history = train_toy_recognizer(corpus, cfg.recognizer, cfg.condition.charset, seed=cfg.seed)
    digest = rec.save(_out_dir(args) / "recognizer.ckpt")
    _emit({
        "checkpoint": str(Path(args.out_dir) / "recognizer.ckpt"),
        "sha256": digest,
        "samples": len(corpus),
        "final_loss": history[-1] if history else None,
        "train_accuracy": word_accuracy(rec, corpus[:500]),
    })


def cmd_propose_regions(args, cfg: RunConfig) -> None:
    from .pipeline import load_backgrounds
    from .placement import propose_regions

    bgs = load_backgrounds(_require(args.backgrounds, "backgrounds directory"), _require(args.maps_dir, "maps directory"))
    lines = []
    for bg in bgs:
        for r in propose_regions(bg.seg, bg.depth, cfg.placement):
            rec = {"image": bg.image_id, "polygon": r.polygon.tolist(), "segment": r.segment_id, "smoothness": r.smoothness, "area": r.area}
            lines.append(json.dumps(rec, sort_keys=True))
    path = _out_dir(args) / "regions.jsonl"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    _emit({"regions": len(lines), "images": len(bgs), "path": str(path)})


def cmd_generate(args, cfg: RunConfig) -> None:
    from .crops import WordSource
    from .model import DiffusionModel
    from .pipeline import load_backgrounds, run_generate
    from .recognizer import ToyRecognizer

    model = DiffusionModel.load(_require(args.checkpoint, "checkpoint"))
    rec = ToyRecognizer.load(_require(args.recognizer, "recognizer checkpoint"), expect_charset_hash=model.charset_hash)
    words = WordSource.from_file(args.words, cfg.seed, model.condition.cfg.charset, model.condition.cfg.max_len)
    bgs = load_backgrounds(_require(args.backgrounds, "backgrounds directory"), _require(args.maps_dir, "maps directory"))
    manifest = run_generate(
        bgs, model, rec, words, cfg, _out_dir(args),
        checkpoint_hash=checkpoint.file_hash(args.checkpoint),
        recognizer_hash=checkpoint.file_hash(args.recognizer),
    )
    from .dataset import compute_stats

    _emit({"manifest": str(manifest), **compute_stats(manifest)})


def cmd_stats(args, cfg: RunConfig) -> None:
    from .dataset import REFERENCE_CORPUS, compute_stats

    stats = compute_stats(_require(args.manifest, "manifest"))
    _emit({**stats, "reference": REFERENCE_CORPUS})


def cmd_export_icdar(args, cfg: RunConfig) -> None:
    from .dataset import export_icdar

    paths = export_icdar(_require(args.manifest, "manifest"), _out_dir(args))
    _emit({"files": len(paths), "out_dir": str(args.out_dir)})


def _detection_set(args):
    from .dataset import read_manifest
    from .probe import load_detection_set

    manifest = _require(args.manifest, "manifest")
    return load_detection_set(read_manifest(manifest), manifest.parent)


def cmd_probe_train(args, cfg: RunConfig) -> None:
    from .probe import train_probe

    images, polys = _detection_set(args)
    probe, history = train_probe(images, polys, cfg.probe, seed=cfg.seed)
    digest = probe.save(_out_dir(args) / "probe.ckpt", history)
    _emit({"checkpoint": str(Path(args.out_dir) / "probe.ckpt"), "sha256": digest, "images": len(images), "final_loss": history[-1]})


def cmd_probe_eval(args, cfg: RunConfig) -> None:
    from .probe import Probe, evaluate_probe

    if args.probe is None:
        probe = Probe(cfg.probe, seed=cfg.seed)
    else:
        probe = Probe.load(_require(args.probe, "probe checkpoint"))
    images, polys = _detection_set(args)
    _emit(evaluate_probe(probe, images, polys, cfg.probe.iou_threshold))


def cmd_verify(args, cfg: RunConfig) -> int:
    from .verify import run_checks

    results = run_checks(cfg.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_show_config(args, cfg: RunConfig) -> None:
    _emit({"config": to_dict(cfg), "config_hash": config_hash(cfg)})


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="YAML config file with namespaced sections")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key, e.g. training.steps=500")
    g.add_argument("--seed", type=int)
    g.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--threads", type=int)
    g.add_argument("--out-dir", default="out")
    g.add_argument("--log-level", default="INFO")

    parser = argparse.ArgumentParser(prog="textinpaint", description="Scene-text synthesis by masked latent diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("train-autoencoder", cmd_train_autoencoder, "fit the latent autoencoder on a JSONL dataset")
    p.add_argument("--data", required=True, help="directory with images and annotations.jsonl")
    p = add("train-recognizer", cmd_train_recognizer, "fit the word recognizer used for filtering")
    p.add_argument("--data", help="JSONL dataset; default is a synthetic toy corpus")
    p.add_argument("--toy-samples", type=int, default=2000)
    p = add("train-denoiser", cmd_train_denoiser, "fit the text encoder and denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--autoencoder", required=True, help="autoencoder checkpoint")
    p = add("propose-regions", cmd_propose_regions, "write placement regions for each background")
    p.add_argument("--backgrounds", required=True)
    p.add_argument("--maps-dir", required=True, help="directory with <id>_seg.png and <id>_depth.png")
    p = add("generate", cmd_generate, "synthesize a labelled dataset")
    p.add_argument("--backgrounds", required=True)
    p.add_argument("--maps-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--recognizer", required=True)
    p.add_argument("--words", required=True, help="plain-text word list, one per line")
    p.add_argument("--keep-unlabeled-pixels", action="store_true", help="keep generated pixels of discarded instances")
    p.add_argument("--include-discarded", action="store_true", help="also list discarded instances (kept=false)")
    p = add("stats", cmd_stats, "image and instance counts of a manifest")
    p.add_argument("--manifest", required=True)
    p = add("export-icdar", cmd_export_icdar, "per-image ICDAR-style text files")
    p.add_argument("--manifest", required=True)
    p = add("probe-train", cmd_probe_train, "train the detector probe on a manifest")
    p.add_argument("--manifest", required=True)
    p = add("probe-eval", cmd_probe_eval, "score a probe on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--probe", help="probe checkpoint; omitted means an untrained probe")
    add("verify", cmd_verify, "check core routines against their oracles")
    add("show-config", cmd_show_config, "print the resolved configuration")
    return parser


def error_line(exc: BaseException, code: int) -> str:
    return json.dumps({"error": type(exc).__name__, "exit_code": code, "message": str(exc)}, sort_keys=True)


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        from .torchutil import configure_threads

        configure_threads(cfg.threads, cfg.deterministic)
        rc = args.fn(args, cfg)
        return int(rc or 0)
    except TextInpaintError as exc:
        return _fail(exc, exc.exit_code)
    except FileNotFoundError as exc:
        return _fail(DataError(str(exc)), DataError.exit_code)


def _fail(exc: BaseException, code: int) -> int:
    log.error("%s", exc)
    sys.stderr.write(error_line(exc, code) + "\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
