"""Augmented-view construction for positive pairs.

Two augmentations are supported: Gaussian jittering and time-masking
(zeroing whole time steps across all channels). Views are built from
already-normalized samples so the positive pair shares one scale; the
functions never mutate their input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TimeSeriesSample
from .errors import ConfigError

KINDS = ("jitter", "time_mask")


@dataclass
class AugmentConfig:
    kind: str = "jitter"
    epsilon: float = 0.1
    mask_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}; use {KINDS}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ConfigError(
                f"mask_fraction must be in [0, 1), got {self.mask_fraction}"
            )


def jitter(x: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """x + epsilon * g with g ~ iid standard normal."""
    noise = rng.standard_normal(x.shape).astype(np.float32)
    return (x + epsilon * noise).astype(np.float32)


def time_mask(
    x: np.ndarray, mask_fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Zero exactly round(fraction * T) time steps across all channels."""
    T = x.shape[0]
    k = round(mask_fraction * T)
    out = x.copy()
    if k > 0:
        idx = rng.choice(T, size=k, replace=False)
        out[idx, :] = 0.0
    return out


def make_view(
    sample: TimeSeriesSample, cfg: AugmentConfig, rng: np.random.Generator
) -> TimeSeriesSample:
    if cfg.kind == "jitter":
        values = jitter(sample.values, cfg.epsilon, rng)
    elif cfg.kind == "time_mask":
        values = time_mask(sample.values, cfg.mask_fraction, rng)
    else:  # unreachable after config validation
        raise ConfigError(f"unknown augmentation kind {cfg.kind!r}")
    return TimeSeriesSample(values=values, label=sample.label)


def make_views_batch(
    values: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    """Augment a [B,T,D] batch sample-by-sample with one rng stream."""
    return np.stack(
        [
            make_view(TimeSeriesSample(values=v, label=0), cfg, rng).values
            for v in values
        ]
    )
