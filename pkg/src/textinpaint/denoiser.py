"""Noise-prediction network for masked latent inpainting.

The network sees ``concat(z_t, z_b, m_lat)`` along channels (``2 * C_lat + 1``
channels), a sinusoidal timestep embedding and the text embedding sequence,
which enters through one cross-attention block per resolution level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import DenoiserConfig
from .errors import ShapeError
from .torchutil import group_count, seeded


@dataclass
class DenoiserInput:
    z_t: np.ndarray  # (h, w, C_lat)
    z_b: np.ndarray  # (h, w, C_lat)
    m_lat: np.ndarray  # (h, w) in {0, 1}
    t: int
    cond: np.ndarray  # (L, D)

    def check(self) -> None:
        if self.z_t.shape != self.z_b.shape:
            raise ShapeError(f"z_t {self.z_t.shape} and z_b {self.z_b.shape} differ")
        if self.m_lat.shape != self.z_t.shape[:2]:
            raise ShapeError(f"mask {self.m_lat.shape} does not match latent {self.z_t.shape[:2]}")

    def stacked(self) -> np.ndarray:
        self.check()
        return np.concatenate([self.z_t, self.z_b, self.m_lat[..., None]], axis=-1)


def timestep_embed(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding: first half ``sin(t * w_i)``, second half ``cos(t * w_i)``."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    args = np.asarray(t, dtype=np.float64)[..., None] * freqs
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(emb.shape[:-1] + (1,))], axis=-1)
    return emb


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Latent-resolution mask: a cell is 1 when any pixel it covers is 1."""
    m = np.asarray(mask)
    h, w = m.shape
    if h % factor or w % factor:
        raise ShapeError(f"mask dims {h}x{w} not divisible by {factor}")
    return m.reshape(h // factor, factor, w // factor, factor).max(axis=(1, 3)).astype(np.float32)


def _torch_timestep_embed(t: torch.Tensor, dim: int, dtype) -> torch.Tensor:
    return torch.from_numpy(timestep_embed(t.cpu().numpy(), dim)).to(dtype)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, tdim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(group_count(cin, groups), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.temb = nn.Linear(tdim, cout)
        self.norm2 = nn.GroupNorm(group_count(cout, groups), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class CrossAttention(nn.Module):
    """Spatial features attend over the text embedding sequence."""

    def __init__(self, channels: int, cond_dim: int, heads: int, groups: int):
        super().__init__()
        self.heads = heads if channels % heads == 0 else 1
        self.norm = nn.GroupNorm(group_count(channels, groups), channels)
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(cond_dim, channels)
        self.v = nn.Linear(cond_dim, channels)
        self.out = nn.Linear(channels, channels)

    def forward(self, x, cond):
        b, c, h, w = x.shape
        nh, hd = self.heads, c // self.heads
        seq = self.norm(x).flatten(2).transpose(1, 2)  # (b, hw, c)
        q = self.q(seq).reshape(b, h * w, nh, hd).transpose(1, 2)
        k = self.k(cond).reshape(b, -1, nh, hd).transpose(1, 2)
        v = self.v(cond).reshape(b, -1, nh, hd).transpose(1, 2)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(hd), dim=-1)
        o = (att @ v).transpose(1, 2).reshape(b, h * w, c)
        return x + self.out(o).transpose(1, 2).reshape(b, c, h, w)


class Denoiser(nn.Module):
    """Two-level encoder-decoder with skips and cross-attention at each level."""

    def __init__(self, cfg: DenoiserConfig, latent_channels: int, cond_dim: int):
        super().__init__()
        self.cfg = cfg
        self.latent_channels = latent_channels
        c, g = cfg.channels, cfg.groups
        self.tdim = c
        self.time_mlp = nn.Sequential(nn.Linear(c, 2 * c), nn.SiLU(), nn.Linear(2 * c, c))
        self.inp = nn.Conv2d(2 * latent_channels + 1, c, 3, padding=1)
        self.down1 = ResBlock(c, c, c, g)
        self.attn1 = CrossAttention(c, cond_dim, cfg.heads, g)
        self.downsample = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.down2 = ResBlock(2 * c, 2 * c, c, g)
        self.attn2 = CrossAttention(2 * c, cond_dim, cfg.heads, g)
        self.mid = ResBlock(2 * c, 2 * c, c, g)
        self.upconv = nn.Conv2d(2 * c, c, 3, padding=1)
        self.up1 = ResBlock(2 * c, c, c, g)
        self.attn3 = CrossAttention(c, cond_dim, cfg.heads, g)
        self.out_norm = nn.GroupNorm(group_count(c, g), c)
        self.out = nn.Conv2d(c, latent_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != 2 * self.latent_channels + 1:
            raise ShapeError(f"denoiser input has {x.shape[1]} channels, expects {2 * self.latent_channels + 1}")
        h, w = x.shape[-2:]
        ph, pw = h % 2, w % 2
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
        temb = self.time_mlp(_torch_timestep_embed(t, self.tdim, x.dtype))
        h0 = self.inp(x)
        h1 = self.attn1(self.down1(h0, temb), cond)
        h2 = self.attn2(self.down2(self.downsample(h1), temb), cond)
        h2 = self.mid(h2, temb)
        u = self.upconv(F.interpolate(h2, scale_factor=2, mode="nearest"))
        u = self.attn3(self.up1(torch.cat([u, h1], dim=1), temb), cond)
        out = self.out(F.silu(self.out_norm(u)))
        return out[..., :h, :w]


def build_denoiser(cfg: DenoiserConfig, latent_channels: int, cond_dim: int, seed: int = 0) -> Denoiser:
    with seeded(seed):
        model = Denoiser(cfg, latent_channels, cond_dim)
    return model.eval()


@torch.no_grad()
def predict_noise(model: Denoiser, inp: DenoiserInput) -> np.ndarray:
    x = torch.from_numpy(np.ascontiguousarray(inp.stacked().transpose(2, 0, 1)[None])).float()
    t = torch.tensor([inp.t])
    cond = torch.from_numpy(np.asarray(inp.cond, dtype=np.float32)[None])
    return model(x, t, cond)[0].numpy().transpose(1, 2, 0)
