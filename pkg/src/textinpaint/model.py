"""The trained generator as one unit: autoencoder, text encoder, denoiser, schedule."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .autoencoder import LatentAutoencoder, build_autoencoder
from .condition import ConditionEncoder, build_condition_encoder
from .config import AutoencoderConfig, ConditionConfig, DenoiserConfig, RunConfig, TrainConfig
from .denoiser import Denoiser, build_denoiser
from .errors import CompatibilityError
from .schedule import NoiseSchedule, build_schedule

KIND = "text-inpaint-diffusion"


@dataclass
class DiffusionModel:
    autoencoder: LatentAutoencoder
    condition: ConditionEncoder
    denoiser: Denoiser
    schedule: NoiseSchedule
    training: TrainConfig = field(default_factory=TrainConfig)
    freeze_policy: dict = field(default_factory=dict)
    loss_history: list = field(default_factory=list)

    @property
    def charset_hash(self) -> str:
        return self.condition.charset.hash

    @property
    def factor(self) -> int:
        return self.autoencoder.cfg.factor

    def eval(self) -> "DiffusionModel":
        for m in (self.autoencoder, self.condition, self.denoiser):
            m.eval()
        return self

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(checkpoint.module_arrays(self.autoencoder, "autoencoder"))
        out.update(checkpoint.module_arrays(self.condition, "condition"))
        out.update(checkpoint.module_arrays(self.denoiser, "denoiser"))
        return out

    def meta(self) -> dict:
        return {
            "kind": KIND,
            "schedule": self.schedule.to_meta(),
            "charset": self.condition.cfg.charset,
            "charset_hash": self.charset_hash,
            "autoencoder": dataclasses.asdict(self.autoencoder.cfg),
            "condition": dataclasses.asdict(self.condition.cfg),
            "denoiser": dataclasses.asdict(self.denoiser.cfg),
            "training": dataclasses.asdict(self.training),
            "freeze_policy": self.freeze_policy,
            "loss_history": self.loss_history,
        }

    def save(self, path) -> str:
        return checkpoint.save(path, self.arrays(), self.meta())

    @classmethod
    def load(cls, path, expect_charset_hash: str | None = None) -> "DiffusionModel":
        arrays, meta = checkpoint.load(path)
        if meta.get("kind") != KIND:
            raise CompatibilityError(f"{path}: not a diffusion checkpoint (kind={meta.get('kind')!r})")
        if expect_charset_hash is not None and meta["charset_hash"] != expect_charset_hash:
            raise CompatibilityError(f"{path}: charset hash {meta['charset_hash']} != expected {expect_charset_hash}")
        model = build(
            AutoencoderConfig(**meta["autoencoder"]),
            ConditionConfig(**meta["condition"]),
            DenoiserConfig(**meta["denoiser"]),
            NoiseSchedule.from_meta(meta["schedule"]),
        )
        if model.charset_hash != meta["charset_hash"]:
            raise CompatibilityError(f"{path}: stored charset does not match its hash")
        checkpoint.load_module_arrays(model.autoencoder, arrays, "autoencoder")
        checkpoint.load_module_arrays(model.condition, arrays, "condition")
        checkpoint.load_module_arrays(model.denoiser, arrays, "denoiser")
        model.training = TrainConfig(**meta["training"])
        model.freeze_policy = meta.get("freeze_policy", {})
        model.loss_history = meta.get("loss_history", [])
        return model.eval()


def build(ae_cfg, cond_cfg, den_cfg, schedule, seed: int = 0, autoencoder=None) -> DiffusionModel:
    ae = autoencoder if autoencoder is not None else build_autoencoder(ae_cfg, seed)
    cond = build_condition_encoder(cond_cfg, seed + 1)
    den = build_denoiser(den_cfg, ae.cfg.latent_channels, cond_cfg.dim, seed + 2)
    return DiffusionModel(ae, cond, den, schedule)


def build_from_config(cfg: RunConfig, autoencoder=None) -> DiffusionModel:
    d = cfg.diffusion
    schedule = build_schedule(d.T, d.beta_start, d.beta_end)
    model = build(cfg.autoencoder, cfg.condition, cfg.denoiser, schedule, cfg.training.seed, autoencoder)
    model.training = cfg.training
    return model


def load_autoencoder(path) -> LatentAutoencoder:
    arrays, meta = checkpoint.load(path)
    if meta.get("kind") not in ("autoencoder", KIND):
        raise CompatibilityError(f"{path}: no autoencoder in checkpoint (kind={meta.get('kind')!r})")
    ae = build_autoencoder(AutoencoderConfig(**meta["autoencoder"]))
    checkpoint.load_module_arrays(ae, arrays, "autoencoder")
    return ae.eval()


def save_autoencoder(path, ae: LatentAutoencoder, history=()) -> str:
    meta = {"kind": "autoencoder", "autoencoder": dataclasses.asdict(ae.cfg), "loss_history": list(history)}
    return checkpoint.save(path, checkpoint.module_arrays(ae, "autoencoder"), meta)
