"""Non-overlapping patching and exact-count patch masking.

A sample [T,D] becomes N = floor(T/L) patches of L consecutive time steps
over all D channels; trailing T mod L rows are discarded. Masks hide exactly
round(theta * N) patches (not iid Bernoulli) so every sample in a batch has
the same visible count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError


@dataclass
class PatchConfig:
    L: int = 64
    theta: float = 0.75

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError(f"patch length must be >= 1, got {self.L}")
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError(f"masking ratio must be in [0, 1), got {self.theta}")

    def n_patches(self, T: int) -> int:
        if self.L > T:
            raise ConfigError(f"patch length {self.L} exceeds sequence length {T}")
        return T // self.L

    def n_visible(self, T: int) -> int:
        n = self.n_patches(T)
        v = n - round(self.theta * n)
        if v < 1:
            raise ConfigError(
                f"masking ratio {self.theta} leaves no visible patch (N={n})"
            )
        return v


@dataclass
class PatchedSample:
    patches: np.ndarray  # [N, L, D]
    mask: np.ndarray  # [N] uint8, 1 = visible
    visible_idx: np.ndarray = field(init=False)  # strictly increasing

    def __post_init__(self):
        self.visible_idx = np.nonzero(self.mask)[0]


def patchify(x: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """Split [T,D] into [N,L,D]; patch n covers rows [n*L, (n+1)*L)."""
    T, D = x.shape
    n = cfg.n_patches(T)
    return x[: n * cfg.L].reshape(n, cfg.L, D)


def sample_mask(n: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Binary mask with exactly round(theta * n) zeros at random positions."""
    if n < 1:
        raise ConfigError(f"need at least one patch, got N={n}")
    k_masked = round(theta * n)
    if n - k_masked < 1:
        raise ConfigError(f"masking ratio {theta} leaves no visible patch (N={n})")
    mask = np.ones(n, dtype=np.uint8)
    if k_masked > 0:
        hidden = rng.choice(n, size=k_masked, replace=False)
        mask[hidden] = 0
    return mask


def apply_mask(patches: np.ndarray, mask: np.ndarray) -> PatchedSample:
    if patches.shape[0] != mask.shape[0]:
        raise ContractError(
            f"mask length {mask.shape[0]} does not match patch count "
            f"{patches.shape[0]}"
        )
    return PatchedSample(patches=patches, mask=mask.astype(np.uint8))


def visible_patches(ps: PatchedSample) -> np.ndarray:
    """Gather visible patches in index order, flattened to [V, L*D]."""
    sel = ps.patches[ps.visible_idx]
    return sel.reshape(sel.shape[0], -1)


def batch_patchify_mask(
    values: np.ndarray,
    cfg: PatchConfig,
    rng: np.random.Generator,
    keep_zeroed: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Patchify and mask a [B,T,D] batch with per-sample masks.

    Returns (tokens [B,V,L*D], token_idx [B,V], masks [B,N]). With
    keep_zeroed the masked patches stay in the token sequence as zeros
    (V == N), the literal elementwise-masking form.
    """
    B, T, D = values.shape
    n = cfg.n_patches(T)
    patches = values[:, : n * cfg.L, :].reshape(B, n, cfg.L * D)
    masks = np.stack([sample_mask(n, cfg.theta, rng) for _ in range(B)])
    if keep_zeroed:
        tokens = patches * masks[:, :, None].astype(patches.dtype)
        idx = np.broadcast_to(np.arange(n, dtype=np.int64), (B, n)).copy()
        return tokens.astype(np.float32), idx, masks
    v = n - round(cfg.theta * n)
    idx = np.nonzero(masks)[1].reshape(B, v).astype(np.int64)
    tokens = np.take_along_axis(patches, idx[:, :, None], axis=1)
    return tokens.astype(np.float32), idx, masks
