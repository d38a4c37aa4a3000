"""Character-level text condition encoder.

Token ids: 0 is PAD, 1 is UNK, characters of the charset follow from 2 in
charset order. Text is case-folded before lookup.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import ConditionConfig
from .errors import VocabularyError
from .torchutil import seeded

PAD = 0
UNK = 1


@dataclass(frozen=True)
class Charset:
    chars: str

    def __post_init__(self):
        if len(set(self.chars)) != len(self.chars):
            raise ValueError("charset has duplicate characters")

    @property
    def size(self) -> int:
        return len(self.chars) + 2

    def id(self, ch: str) -> int:
        i = self.chars.find(ch)
        return UNK if i < 0 else i + 2

    def char(self, i: int) -> str:
        if i == PAD:
            return ""
        if i == UNK:
            return "?"
        return self.chars[i - 2]

    def covers(self, text: str) -> bool:
        return all(c in self.chars for c in text.lower())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.chars.encode("utf-8")).hexdigest()[:16]


def tokenize(text: str, charset: Charset, max_len: int) -> np.ndarray:
    ids = [charset.id(c) for c in text.lower()[:max_len]]
    return np.array(ids + [PAD] * (max_len - len(ids)), dtype=np.int64)


def detokenize(tokens, charset: Charset) -> str:
    return "".join(charset.char(int(i)) for i in tokens)


class SelfAttentionBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, x):
        b, n, d = x.shape
        q, k, v = self.qkv(self.norm1(x)).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d // self.heads), dim=-1)
        x = x + self.proj((att @ v).transpose(1, 2).reshape(b, n, d))
        return x + self.mlp(self.norm2(x))


class ConditionEncoder(nn.Module):
    def __init__(self, cfg: ConditionConfig):
        super().__init__()
        self.cfg = cfg
        self.charset = Charset(cfg.charset)
        self.embed = nn.Embedding(self.charset.size, cfg.dim)
        self.pos = nn.Parameter(torch.randn(cfg.max_len, cfg.dim) * 0.1)
        self.blocks = nn.ModuleList(SelfAttentionBlock(cfg.dim, cfg.heads) for _ in range(cfg.layers))
        self.norm = nn.LayerNorm(cfg.dim)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.shape[-1] != self.cfg.max_len:
            raise VocabularyError(f"token sequence length {tokens.shape[-1]} != {self.cfg.max_len}")
        if int(tokens.min()) < 0 or int(tokens.max()) >= self.charset.size:
            raise VocabularyError(f"token id outside [0, {self.charset.size})")
        x = self.embed(tokens) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)

    def tokenize(self, text: str) -> np.ndarray:
        return tokenize(text, self.charset, self.cfg.max_len)

    def tokens_for(self, texts) -> torch.Tensor:
        return torch.from_numpy(np.stack([self.tokenize(t) for t in texts]))


def build_condition_encoder(cfg: ConditionConfig, seed: int = 0) -> ConditionEncoder:
    with seeded(seed):
        model = ConditionEncoder(cfg)
    return model.eval()


@torch.no_grad()
def encode_condition(model: ConditionEncoder, tokens) -> np.ndarray:
    """Embed one token array of length L into an ``(L, D)`` float array."""
    t = torch.as_tensor(np.asarray(tokens, dtype=np.int64))
    if t.ndim != 1:
        raise VocabularyError(f"expected a 1-D token array, got shape {tuple(t.shape)}")
    return model(t[None])[0].numpy()
