"""Seed derivation shared by the samplers, augmentation and the training loop."""

import random
import zlib
from typing import Union

import numpy as np
import torch

SeedKey = Union[int, str]


def derive_seed(global_seed: int, *keys: SeedKey) -> int:
    """Derive a per-item seed from a global seed and item keys.

    String keys are hashed with CRC32 so the result is identical across
    processes and interpreter runs (unlike the builtin hash()).

    Args:
        global_seed: Experiment-wide seed
        *keys: Item identifiers such as case id, slice index, epoch

    Returns:
        A non-negative 63-bit integer seed
    """
    entropy = [int(global_seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFF)
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def seed_everything(seed: int, deterministic: bool = True) -> None:
    """Seed python, numpy and torch RNGs for a run."""
    random.seed(seed)
    np.random.seed(seed & 0xFFFFFFFF)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False
