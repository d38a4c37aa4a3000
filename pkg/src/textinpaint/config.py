"""Run configuration: one dataclass per section, strict loading from YAML/JSON.

A config file is a single mapping whose top-level keys are ``seed``,
``deterministic``, ``threads`` and one namespace per section below. Unknown
keys anywhere raise :class:`ConfigError`.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

DEFAULT_CHARSET = "abcdefghijklmnopqrstuvwxyz0123456789"


@dataclass
class DiffusionConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class AutoencoderConfig:
    channels: int = 3
    factor: int = 4
    latent_channels: int = 4
    hidden: int = 16
    latent_scale: float = 1.0
    # replace latent_scale after training by 1 / std of the raw latents
    calibrate_latent_scale: bool = True
    steps: int = 1500
    learning_rate: float = 2e-3
    batch_size: int = 8


@dataclass
class ConditionConfig:
    charset: str = DEFAULT_CHARSET
    max_len: int = 16
    dim: int = 64
    layers: int = 2
    heads: int = 4


@dataclass
class DenoiserConfig:
    channels: int = 64
    heads: int = 4
    groups: int = 8


@dataclass
class TrainConfig:
    """Denoiser optimisation settings (AdamW).

    ``steps`` takes precedence over ``epochs`` when set. The autoencoder is
    always frozen here; the condition encoder is co-trained unless
    ``freeze_condition_encoder`` is set.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-2
    batch_size: int = 8
    epochs: int = 20
    steps: int | None = 6000
    image_size: int = 64
    seed: int = 0
    profile: str = "desk"
    freeze_condition_encoder: bool = False
    grad_clip: float | None = 1.0


def paper_profile() -> TrainConfig:
    """Training hyperparameters as published (AdamW, 512 px inputs)."""
    return TrainConfig(
        learning_rate=1e-5,
        beta1=0.9,
        beta2=0.999,
        weight_decay=1e-2,
        batch_size=24,
        epochs=20,
        steps=None,
        image_size=512,
        profile="paper",
        freeze_condition_encoder=True,
    )


def desk_profile() -> TrainConfig:
    return TrainConfig()


PROFILES = {"paper": paper_profile, "desk": desk_profile}


@dataclass
class PlacementConfig:
    min_area_frac: float = 0.005
    max_residual: float = 0.05
    max_regions: int = 8
    per_segment: int = 2
    box_height: int = 14
    min_width: int = 16
    max_width: int = 40
    gap: int = 4


@dataclass
class CropConfig:
    max_jobs: int = 4
    margin_frac: float = 0.5
    margin: int | None = None


@dataclass
class SamplerConfig:
    steps: int = 50
    deterministic: bool = True
    clip_latent: bool = True


@dataclass
class RecognizerConfig:
    input_height: int = 32
    input_width: int = 96
    max_len: int = 8
    hidden: int = 32
    threshold: float = 0.9
    require_transcript_match: bool = False
    keep_unlabeled_pixels: bool = False
    steps: int = 1000
    learning_rate: float = 2e-3
    batch_size: int = 32
    negative_fraction: float = 0.25  # share of each batch that is junk trained towards uniform output


@dataclass
class ProbeConfig:
    hidden: int = 16
    steps: int = 1200
    learning_rate: float = 3e-3
    batch_size: int = 8
    iou_threshold: float = 0.5
    prob_threshold: float = 0.5
    min_component_area: int = 20


@dataclass
class RunConfig:
    seed: int = 0
    deterministic: bool = True
    threads: int = 1
    include_discarded: bool = False
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    condition: ConditionConfig = field(default_factory=ConditionConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    crops: CropConfig = field(default_factory=CropConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    recognizer: RecognizerConfig = field(default_factory=RecognizerConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)


def _coerce(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _coerce(type(default), value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict, strict: bool = True) -> RunConfig:
    data = dict(data or {})
    profile = (data.get("training") or {}).get("profile")
    cfg = _coerce(RunConfig, data, "") if strict else _lenient(data)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"training.profile: unknown profile {profile!r}")
        base = dataclasses.asdict(PROFILES[profile]())
        base.update(data["training"])
        cfg.training = TrainConfig(**base)
    validate(cfg)
    return cfg


def _lenient(data: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    return _coerce(RunConfig, {k: v for k, v in data.items() if k in known}, "")


def set_override(data: dict, dotted: str, value: Any) -> None:
    """Apply ``section.key=value`` style overrides onto a raw config mapping."""
    *path, last = dotted.split(".")
    node = data
    for part in path:
        node = node.setdefault(part, {})
    node[last] = value


def load_config(path: str | Path | None = None, overrides: dict | None = None, strict: bool = True) -> RunConfig:
    data: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            import yaml

            data = yaml.safe_load(text) or {}
        except Exception as exc:  # yaml errors and friends
            raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a single mapping")
    for key, value in (overrides or {}).items():
        set_override(data, key, value)
    return from_dict(data, strict=strict)


def validate(cfg: RunConfig) -> None:
    tr = cfg.training
    for name in ("learning_rate", "beta1", "beta2", "batch_size", "epochs", "image_size"):
        if not getattr(tr, name) > 0:
            raise ConfigError(f"training.{name} must be positive")
    if tr.weight_decay < 0:
        raise ConfigError("training.weight_decay must be non-negative")
    if tr.steps is not None and tr.steps < 1:
        raise ConfigError("training.steps must be >= 1")
    if not 0.0 <= cfg.recognizer.threshold <= 1.0:
        raise ConfigError("recognizer.threshold must lie in [0, 1]")
    if not 0.0 <= cfg.recognizer.negative_fraction < 1.0:
        raise ConfigError("recognizer.negative_fraction must lie in [0, 1)")
    if not 0.0 < cfg.probe.iou_threshold <= 1.0:
        raise ConfigError("probe.iou_threshold must lie in (0, 1]")
    f = cfg.autoencoder.factor
    if f < 1 or f & (f - 1):
        raise ConfigError("autoencoder.factor must be a power of two")
    if cfg.crops.max_jobs < 0 or cfg.threads < 1:
        raise ConfigError("crops.max_jobs must be >= 0 and threads >= 1")


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
