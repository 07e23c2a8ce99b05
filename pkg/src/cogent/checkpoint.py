"""Binary checkpoint format.

Layout: 8-byte magic ``COGENT01``, little-endian uint64 manifest length, the
UTF-8 JSON manifest (parameter names/shapes/offsets, config and its digest,
loss weights, epoch, rng state), the little-endian float32 parameter payload
in manifest order, then optimizer moments (first moments, then second) in
the same layout when present.

Save -> load -> save is byte-identical; loaders refuse a checkpoint whose
architecture digest differs from the one they expect.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

MAGIC = b"COGENT01"

# keys that must agree for parameters to be transferable between runs
# (theta is excluded: masking ratio changes between pretraining and
# fine-tuning without affecting the transferred encoder)
ARCH_KEYS = (
    "data.T",
    "data.D",
    "data.num_classes",
    "patch.L",
    "model.d_model",
    "model.n_blocks",
    "model.n_heads",
    "model.mlp_ratio",
    "model.classifier_hidden_ratio",
)


def arch_digest(config: dict) -> str:
    subset = {k: config[k] for k in ARCH_KEYS if k in config}
    blob = json.dumps(subset, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]  # insertion order defines the payload layout
    lambda_c: float = 1.0
    lambda_r: float = 1.0
    epoch: int = 0
    adam_step: int = 0
    rng_state: dict = field(default_factory=dict)
    moments: dict[str, tuple[np.ndarray, np.ndarray]] | None = None
    norm_mean: list[float] = field(default_factory=list)
    norm_std: list[float] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return arch_digest(self.config)


def _manifest_dict(ckpt: Checkpoint) -> dict:
    entries = []
    offset = 0
    for name, arr in ckpt.params.items():
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": offset}
        )
        offset += arr.size * 4
    return {
        "version": 1,
        "config": ckpt.config,
        "config_digest": ckpt.digest,
        "lambda_c": ckpt.lambda_c,
        "lambda_r": ckpt.lambda_r,
        "epoch": ckpt.epoch,
        "adam_step": ckpt.adam_step,
        "rng_state": ckpt.rng_state,
        "norm_mean": ckpt.norm_mean,
        "norm_std": ckpt.norm_std,
        "params": entries,
        "has_moments": ckpt.moments is not None,
    }


def _payload(arrays) -> bytes:
    chunks = []
    for arr in arrays:
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    manifest = json.dumps(
        _manifest_dict(ckpt), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        fh.write(_payload(ckpt.params.values()))
        if ckpt.moments is not None:
            fh.write(_payload(m for m, _ in ckpt.moments.values()))
            fh.write(_payload(v for _, v in ckpt.moments.values()))


def load_checkpoint(path, expect_digest: str | None = None) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
    (mlen,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16 : 16 + mlen].decode("utf-8"))
    if expect_digest is not None and manifest["config_digest"] != expect_digest:
        raise ConfigError(
            f"{path}: checkpoint architecture digest "
            f"{manifest['config_digest'][:12]}... does not match the current "
            f"configuration ({expect_digest[:12]}...)"
        )
    body = raw[16 + mlen :]
    params: dict[str, np.ndarray] = {}
    total = 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype="<f4", count=size, offset=start)
        params[entry["name"]] = arr.reshape(shape).copy()
        total += size * 4
    moments = None
    if manifest["has_moments"]:
        m_start = total
        moments = {}
        sizes = [(e["name"], tuple(e["shape"])) for e in manifest["params"]]
        offset = m_start
        firsts = {}
        for name, shape in sizes:
            size = int(np.prod(shape)) if shape else 1
            firsts[name] = (
                np.frombuffer(body, dtype="<f4", count=size, offset=offset)
                .reshape(shape)
                .copy()
            )
            offset += size * 4
        for name, shape in sizes:
            size = int(np.prod(shape)) if shape else 1
            second = (
                np.frombuffer(body, dtype="<f4", count=size, offset=offset)
                .reshape(shape)
                .copy()
            )
            moments[name] = (firsts[name], second)
            offset += size * 4
    return Checkpoint(
        config=manifest["config"],
        params=params,
        lambda_c=manifest["lambda_c"],
        lambda_r=manifest["lambda_r"],
        epoch=manifest["epoch"],
        adam_step=manifest["adam_step"],
        rng_state=manifest["rng_state"],
        moments=moments,
        norm_mean=manifest["norm_mean"],
        norm_std=manifest["norm_std"],
    )
