from __future__ import annotations

import contextlib

import numpy as np
import torch


@contextlib.contextmanager
def seeded(seed: int):
    """Run a block under a fixed torch seed without disturbing the global RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        yield


def configure_threads(threads: int = 1, deterministic: bool = True) -> None:
    torch.set_num_threads(max(1, int(threads)))
    torch.use_deterministic_algorithms(bool(deterministic), warn_only=True)


def images_to_tensor(images, dtype=torch.float32) -> torch.Tensor:
    """(N, H, W, C) or (H, W, C) numpy -> (N, C, H, W) tensor."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def tensor_to_images(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().transpose(0, 2, 3, 1)


def group_count(channels: int, groups: int) -> int:
    g = min(groups, channels)
    while channels % g:
        g -= 1
    return g
