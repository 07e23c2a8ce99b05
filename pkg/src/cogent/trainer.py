"""Pretraining and fine-tuning loops, evaluation, embedding export, ablation.

Every source of randomness is a numpy Generator derived from (seed, stage
tag, epoch, batch) integers, so a (seed, config, corpus) triple maps to a
bit-exact run. Sanity-split losses reuse fixed masks/views across epochs so
the model-selection signal is comparable between epochs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, make_views_batch
from .checkpoint import Checkpoint, arch_digest, save_checkpoint
from .data import (
    Corpus,
    DatasetMeta,
    SplitPlan,
    apply_normalization,
    make_batches,
    normalize,
    require_all_classes,
    sample_finetune_subset,
    split_pretrain,
)
from .errors import ConfigError, ContractError
from .losses import (
    LossConfig,
    LossReport,
    balance_lambdas,
    contrastive_loss,
    cross_entropy,
    joint_loss,
    patch_reconstruction_term,
)
from .metrics import MetricReport, compute_metrics, silhouette_score
from .model import (
    ModelConfig,
    ModelParams,
    classify,
    decode,
    encode,
    init_params,
    project_head,
    sinusoid_table,
)
from .optim import AdamConfig, AdamState, adam_step
from .patchmask import PatchConfig, batch_patchify_mask
from .tensor import Tensor, tsum

# rng stream tags (never reuse across purposes)
_AUG, _MASK_ORIG, _MASK_AUG = 11, 12, 13
_SAN_AUG, _SAN_MASK_ORIG, _SAN_MASK_AUG = 21, 22, 23

METRIC_CSV_HEADER = (
    "mode",
    "pretrained",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auroc",
    "auprc",
)


@dataclass
class TrainConfig:
    epochs_pretrain: int = 100
    epochs_finetune: int = 20
    batch_size: int = 16
    lr_pretrain: float = 1e-3
    lr_finetune: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        positive = {
            "epochs_pretrain": self.epochs_pretrain,
            "epochs_finetune": self.epochs_finetune,
            "batch_size": self.batch_size,
            "lr_pretrain": self.lr_pretrain,
            "lr_finetune": self.lr_finetune,
            "eval_every": self.eval_every,
        }
        for key, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{key} must be positive, got {value}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class RunSettings:
    meta: DatasetMeta
    patch: PatchConfig
    model: ModelConfig
    loss: LossConfig
    augment: AugmentConfig
    train: TrainConfig
    split: SplitPlan
    keep_zeroed: bool = False
    config_dict: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.keep_zeroed and self.loss.reconstruct_target == "masked":
            raise ConfigError(
                "mask.keep_zeroed only supports the visible reconstruction target"
            )


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(list(keys))


def _full_tokens(values: np.ndarray, patch_cfg: PatchConfig):
    """All-patches token view of a batch (theta = 0 pathway)."""
    b, t, d = values.shape
    n = patch_cfg.n_patches(t)
    tokens = values[:, : n * patch_cfg.L, :].reshape(b, n, patch_cfg.L * d)
    idx = np.broadcast_to(np.arange(n, dtype=np.int64), (b, n)).copy()
    return tokens.astype(np.float32), idx


def _masked_recon_term(
    p_hat: Tensor, target: np.ndarray, weights: np.ndarray, count_per_sample: int
) -> Tensor:
    """Squared-error term over the rows selected by `weights` (0/1 per patch)."""
    b = target.shape[0]
    d = (p_hat - Tensor(target)) * Tensor(
        weights[:, :, None].astype(p_hat.data.dtype)
    )
    return tsum(d * d) * (1.0 / (b * count_per_sample))


def _view_forward(values, params, settings: RunSettings, rng_mask):
    tokens, idx, masks = batch_patchify_mask(
        values, settings.patch, rng_mask, settings.keep_zeroed
    )
    z = encode(tokens, idx, params)
    return tokens, idx, masks, z


def _view_reconstruction(
    values, tokens, idx, masks, z, params, settings: RunSettings
) -> Tensor:
    cfg = settings.loss
    t = values.shape[1]
    n = settings.patch.n_patches(t)
    v = settings.patch.n_visible(t)
    if cfg.reconstruct_target == "visible":
        p_hat = decode(z, idx, params)
        if settings.keep_zeroed:
            return _masked_recon_term(p_hat, tokens, masks, v)
        return patch_reconstruction_term(p_hat, Tensor(tokens))
    # standard masked-autoencoder target: fill holes with the mask token and
    # score only the hidden patches
    b, _, d = values.shape
    full = values[:, : n * settings.patch.L, :].reshape(
        b, n, settings.patch.L * d
    ).astype(np.float32)
    p_hat = decode(z, idx, params, masks=masks)
    return _masked_recon_term(p_hat, full, 1 - masks, n - v)


def _loss_parts(values, params, settings: RunSettings, rngs):
    """Forward both views as the mode requires; return loss Tensors."""
    cfg = settings.loss
    rng_aug, rng_mask_o, rng_mask_a = rngs
    tokens_o, idx_o, masks_o, z_o = _view_forward(
        values, params, settings, rng_mask_o
    )
    z_a = tokens_a = idx_a = masks_a = views = None
    if cfg.needs_aug_view:
        views = make_views_batch(values, settings.augment, rng_aug)
        tokens_a, idx_a, masks_a, z_a = _view_forward(
            views, params, settings, rng_mask_a
        )
    l_c = None
    if cfg.needs_contrastive:
        l_c = contrastive_loss(
            project_head(z_o, params),
            project_head(z_a, params),
            cfg.tau,
            symmetric=cfg.symmetric_ntxent,
        )
    l_r_orig = l_r_aug = l_r = None
    if cfg.needs_reconstruction:
        l_r_orig = _view_reconstruction(
            values, tokens_o, idx_o, masks_o, z_o, params, settings
        )
        if cfg.needs_aug_reconstruction:
            l_r_aug = _view_reconstruction(
                views, tokens_a, idx_a, masks_a, z_a, params, settings
            )
            l_r = (l_r_orig + l_r_aug) * 0.5
        else:
            l_r = l_r_orig
    return l_c, l_r_orig, l_r_aug, l_r


def _resolve_lambdas(settings: RunSettings, l_c, l_r) -> tuple[float, float]:
    cfg = settings.loss
    if cfg.mode != "cogent" or cfg.lambda_policy == "fixed":
        return cfg.lambda_c, cfg.lambda_r
    return balance_lambdas(l_c.item(), l_r.item())


def _snapshot(
    params: ModelParams,
    settings: RunSettings,
    lambdas: tuple[float, float],
    epoch: int,
    adam_state: AdamState | None,
    norm_mean: np.ndarray,
    norm_std: np.ndarray,
) -> Checkpoint:
    moments = None
    if adam_state is not None:
        moments = {
            name: (adam_state.m[name].copy(), adam_state.v[name].copy())
            for name, _ in params.items()
        }
    return Checkpoint(
        config=dict(settings.config_dict),
        params={name: t.data.copy() for name, t in params.items()},
        lambda_c=lambdas[0],
        lambda_r=lambdas[1],
        epoch=epoch,
        adam_step=adam_state.step if adam_state is not None else 0,
        rng_state={"seed": settings.train.seed, "epoch": epoch},
        moments=moments,
        norm_mean=[float(x) for x in norm_mean],
        norm_std=[float(x) for x in norm_std],
    )


def _sanity_loss(
    sanity, params, settings: RunSettings, lambdas
) -> float | None:
    if len(sanity) < 2:
        return None
    seed = settings.train.seed
    bs = min(settings.train.batch_size, len(sanity))
    total = 0.0
    count = 0
    for bi, (values, _) in enumerate(
        make_batches(sanity, bs, seed=seed, epoch=0, drop_last=True, shuffle=False)
    ):
        rngs = (
            _rng(seed, _SAN_AUG, bi),
            _rng(seed, _SAN_MASK_ORIG, bi),
            _rng(seed, _SAN_MASK_AUG, bi),
        )
        l_c, l_r_orig, l_r_aug, l_r = _loss_parts(values, params, settings, rngs)
        loss, _ = joint_loss(
            settings.loss, lambdas[0], lambdas[1], l_c, l_r_orig, l_r_aug, l_r
        )
        total += loss.item()
        count += 1
    return total / count if count else None


def pretrain(
    corpus: Corpus, settings: RunSettings, out_dir=None
) -> tuple[Checkpoint, list[dict]]:
    """Self-supervised stage; returns the best-sanity checkpoint and the log."""
    tc = settings.train
    if tc.batch_size < 2:
        raise ConfigError("pretraining requires batch_size >= 2")
    pre, sanity = split_pretrain(corpus.train, settings.split)
    pre, norm_mean, norm_std = normalize(pre)
    sanity = apply_normalization(sanity, norm_mean, norm_std)
    proj_tokens = (
        settings.patch.n_patches(corpus.meta.T) if settings.keep_zeroed else None
    )
    params = init_params(
        settings.model, settings.patch, corpus.meta, proj_tokens=proj_tokens
    )
    adam_state = AdamState.for_params(params)
    adam_cfg = AdamConfig(
        lr=tc.lr_pretrain,
        beta1=tc.beta1,
        beta2=tc.beta2,
        eps=tc.adam_eps,
        weight_decay=tc.weight_decay,
    )
    lambdas: tuple[float, float] | None = None
    if settings.loss.mode != "cogent" or settings.loss.lambda_policy == "fixed":
        lambdas = (settings.loss.lambda_c, settings.loss.lambda_r)

    log: list[dict] = []
    best_ckpt: Checkpoint | None = None
    best_sanity = math.inf
    for epoch in range(tc.epochs_pretrain):
        epoch_reports: list[LossReport] = []
        for bi, (values, _) in enumerate(
            make_batches(pre, tc.batch_size, seed=tc.seed, epoch=epoch)
        ):
            rngs = (
                _rng(tc.seed, _AUG, epoch, bi),
                _rng(tc.seed, _MASK_ORIG, epoch, bi),
                _rng(tc.seed, _MASK_AUG, epoch, bi),
            )
            l_c, l_r_orig, l_r_aug, l_r = _loss_parts(
                values, params, settings, rngs
            )
            if lambdas is None:
                lambdas = _resolve_lambdas(settings, l_c, l_r)
            total, report = joint_loss(
                settings.loss, lambdas[0], lambdas[1], l_c, l_r_orig, l_r_aug, l_r
            )
            if not math.isfinite(report.total):
                raise ContractError(
                    f"non-finite pretraining loss at epoch {epoch} batch {bi}"
                )
            params.zero_grads()
            total.backward()
            adam_step(params, adam_state, adam_cfg)
            epoch_reports.append(report)
        if not epoch_reports:
            raise ConfigError(
                "no pretraining batches: batch_size exceeds the pretrain split"
            )
        entry = _mean_report(epoch_reports)
        entry["epoch"] = epoch
        sanity_total = _sanity_loss(sanity, params, settings, lambdas)
        entry["sanity_total"] = sanity_total
        log.append(entry)
        selection = sanity_total if sanity_total is not None else entry["total"]
        if selection < best_sanity:
            best_sanity = selection
            best_ckpt = _snapshot(
                params, settings, lambdas, epoch, adam_state, norm_mean, norm_std
            )
    assert best_ckpt is not None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(best_ckpt, out_dir / "best.ckpt")
        last = _snapshot(
            params,
            settings,
            lambdas,
            tc.epochs_pretrain - 1,
            adam_state,
            norm_mean,
            norm_std,
        )
        save_checkpoint(last, out_dir / "last.ckpt")
        _write_loss_log(out_dir / "loss_log.csv", log)
    return best_ckpt, log


def _mean_report(reports: list[LossReport]) -> dict:
    def mean_of(key):
        vals = [getattr(r, key) for r in reports]
        if any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    return {
        "l_r_orig": mean_of("l_r_orig"),
        "l_r_aug": mean_of("l_r_aug"),
        "l_r": mean_of("l_r"),
        "l_c": mean_of("l_c"),
        "lambda_c": reports[0].lambda_c,
        "lambda_r": reports[0].lambda_r,
        "total": mean_of("total"),
    }


def _write_loss_log(path, log: list[dict]) -> None:
    fields = [
        "epoch",
        "l_r_orig",
        "l_r_aug",
        "l_r",
        "l_c",
        "lambda_c",
        "lambda_r",
        "total",
        "sanity_total",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for entry in log:
            writer.writerow({k: ("" if entry.get(k) is None else entry[k]) for k in fields})


_FINETUNE_PREFIXES = ("patch_proj.", "enc.", "clf.")


def _finetune_trainable(params: ModelParams) -> set[str]:
    names = {
        name
        for name, _ in params.items()
        if name.startswith(_FINETUNE_PREFIXES) or name == "cls_token"
    }
    return names


def params_from_checkpoint(ckpt: Checkpoint) -> tuple[ModelParams, PatchConfig]:
    """Rebuild a ModelParams bundle exactly as stored (shapes inferred)."""
    cfg = ckpt.config
    dm = int(cfg["model.d_model"])
    L = int(cfg["patch.L"])
    t_len = int(cfg["data.T"])
    d_chan = int(cfg["data.D"])
    n_patches = t_len // L
    tensors = {
        name: Tensor(arr.copy(), requires_grad=True)
        for name, arr in ckpt.params.items()
    }
    params = ModelParams(
        tensors=tensors,
        pos=sinusoid_table(n_patches + 1, dm),
        d_model=dm,
        n_heads=int(cfg["model.n_heads"]),
        n_blocks=int(cfg["model.n_blocks"]),
        in_dim=L * d_chan,
        n_patches=n_patches,
        n_visible=tensors["proj.fc1.w"].shape[0] // dm,
        num_classes=tensors["clf.fc2.b"].shape[0],
        clf_hidden=tensors["clf.fc1.w"].shape[1],
        proj_dim=tensors["proj.fc2.b"].shape[0],
    )
    return params, PatchConfig(L=L, theta=0.0)


def finetune(
    ckpt: Checkpoint | None,
    corpus: Corpus,
    settings: RunSettings,
    out_dir=None,
) -> tuple[Checkpoint, MetricReport]:
    """Supervised stage on the stratified label subset; no masking, no views.

    With a checkpoint, the encoder stack (patch projection, cls token,
    encoder blocks) is transferred and the decoder/projection head are left
    untouched and frozen; without one this is the train-from-scratch
    baseline. Selection keeps the best validation F1.
    """
    tc = settings.train
    meta = corpus.meta
    require_all_classes(corpus.train, meta)
    subset = sample_finetune_subset(corpus.train, settings.split)
    subset, norm_mean, norm_std = normalize(subset)
    val = apply_normalization(corpus.val, norm_mean, norm_std)
    ft_patch = replace(settings.patch, theta=0.0)
    ft_settings = replace(settings, patch=ft_patch)
    params = init_params(settings.model, ft_patch, meta)
    if ckpt is not None:
        expect = arch_digest(settings.config_dict)
        if ckpt.digest != expect:
            raise ConfigError(
                "checkpoint architecture digest does not match the current "
                f"configuration ({ckpt.digest[:12]}... vs {expect[:12]}...)"
            )
        if int(ckpt.config["data.num_classes"]) != meta.num_classes:
            raise ConfigError(
                f"checkpoint was pretrained for "
                f"{ckpt.config['data.num_classes']} classes, corpus has "
                f"{meta.num_classes}"
            )
        transferred = 0
        for name, arr in ckpt.params.items():
            if name.startswith(("patch_proj.", "enc.")) or name == "cls_token":
                params.tensors[name].data = arr.astype(np.float32).copy()
                transferred += 1
        if transferred == 0:
            raise ConfigError("checkpoint carries no transferable encoder tensors")
    adam_state = AdamState.for_params(params)
    adam_cfg = AdamConfig(
        lr=tc.lr_finetune,
        beta1=tc.beta1,
        beta2=tc.beta2,
        eps=tc.adam_eps,
        weight_decay=tc.weight_decay,
    )
    trainable = _finetune_trainable(params)
    lambdas = (0.0, 0.0)  # self-supervised weights are not part of this stage
    best: tuple[float, Checkpoint, MetricReport] | None = None
    for epoch in range(tc.epochs_finetune):
        for values, labels in make_batches(
            subset, tc.batch_size, seed=tc.seed, epoch=epoch, drop_last=False
        ):
            tokens, idx = _full_tokens(values, ft_patch)
            logits = classify(encode(tokens, idx, params), params)
            loss = cross_entropy(logits, labels)
            if not math.isfinite(loss.item()):
                raise ContractError(f"non-finite fine-tune loss at epoch {epoch}")
            params.zero_grads()
            loss.backward()
            adam_step(params, adam_state, adam_cfg, trainable=trainable)
        if (epoch + 1) % tc.eval_every == 0 or epoch == tc.epochs_finetune - 1:
            report = _evaluate_params(params, ft_patch, val, tc.batch_size)
            if best is None or report.f1 > best[0]:
                snap = _snapshot(
                    params,
                    ft_settings,
                    lambdas,
                    epoch,
                    adam_state,
                    norm_mean,
                    norm_std,
                )
                best = (report.f1, snap, report)
    assert best is not None
    _, best_ckpt, best_report = best
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(best_ckpt, out_dir / "finetuned.ckpt")
        write_metrics_csv(
            out_dir / "metrics_val.csv",
            [(settings.loss.mode, ckpt is not None, best_report)],
        )
    return best_ckpt, best_report


def _forward_logits(params, patch_cfg, samples, batch_size, return_hidden=False):
    logits_rows, hidden_rows, label_rows = [], [], []
    for values, labels in make_batches(
        samples, batch_size, drop_last=False, shuffle=False
    ):
        tokens, idx = _full_tokens(values, patch_cfg)
        z = encode(tokens, idx, params)
        if return_hidden:
            logits, hidden = classify(z, params, return_hidden=True)
            hidden_rows.append(hidden.data)
        else:
            logits = classify(z, params)
        logits_rows.append(logits.data)
        label_rows.append(labels)
    logits = np.concatenate(logits_rows)
    labels = np.concatenate(label_rows)
    hidden = np.concatenate(hidden_rows) if return_hidden else None
    return logits, labels, hidden


def _scores_from_logits(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted.astype(np.float64))
    return e / e.sum(axis=1, keepdims=True)


def _evaluate_params(params, patch_cfg, samples, batch_size) -> MetricReport:
    if not samples:
        raise ContractError("cannot evaluate an empty split")
    logits, labels, _ = _forward_logits(params, patch_cfg, samples, batch_size)
    scores = _scores_from_logits(logits)
    preds = np.argmax(logits, axis=1)
    return compute_metrics(labels, preds, scores, params.num_classes)


def evaluate(ckpt: Checkpoint, samples, batch_size: int = 64) -> MetricReport:
    """Metrics of a fine-tuned checkpoint on a raw (unnormalized) split."""
    if not samples:
        raise ContractError("cannot evaluate an empty split")
    params, patch_cfg = params_from_checkpoint(ckpt)
    normed = apply_normalization(
        samples,
        np.array(ckpt.norm_mean, dtype=np.float32),
        np.array(ckpt.norm_std, dtype=np.float32),
    )
    return _evaluate_params(params, patch_cfg, normed, batch_size)


def export_embeddings(
    ckpt: Checkpoint,
    samples,
    out_csv=None,
    out_silhouette=None,
    batch_size: int = 64,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Classifier hidden-layer activations per sample, plus their silhouette."""
    if not samples:
        raise ContractError("cannot export embeddings for an empty split")
    params, patch_cfg = params_from_checkpoint(ckpt)
    normed = apply_normalization(
        samples,
        np.array(ckpt.norm_mean, dtype=np.float32),
        np.array(ckpt.norm_std, dtype=np.float32),
    )
    _, labels, hidden = _forward_logits(
        params, patch_cfg, normed, batch_size, return_hidden=True
    )
    score = silhouette_score(hidden, labels)
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label"] + [f"dim{i}" for i in range(hidden.shape[1])])
            for lbl, row in zip(labels, hidden):
                writer.writerow([int(lbl)] + [repr(float(v)) for v in row])
    if out_silhouette is not None:
        with open(out_silhouette, "w") as fh:
            fh.write(f"{score!r}\n")
    return hidden, labels, score


ABLATION_VARIANTS = (
    ("recon_orig", "generative_only", "orig"),
    ("recon_orig+recon_aug", "generative_only", "both"),
    ("recon_orig+recon_aug+contrastive", "cogent", "both"),
)


def run_ablation(
    corpus: Corpus, settings: RunSettings, out_csv=None
) -> list[tuple[str, MetricReport]]:
    """Pretrain+finetune+test for the three loss configurations."""
    rows: list[tuple[str, MetricReport]] = []
    for label, mode, views in ABLATION_VARIANTS:
        loss_cfg = replace(
            settings.loss, mode=mode, recon_views=views, lambda_c=1.0, lambda_r=1.0
        )
        variant = replace(settings, loss=loss_cfg)
        ckpt, _ = pretrain(corpus, variant)
        tuned, _ = finetune(ckpt, corpus, variant)
        report = evaluate(tuned, corpus.test, batch_size=settings.train.batch_size)
        rows.append((label, report))
    if out_csv is not None:
        write_metrics_csv(out_csv, [(label, True, rep) for label, rep in rows])
    return rows


def write_metrics_csv(path, rows: list[tuple[str, bool, MetricReport]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_CSV_HEADER)
        for mode, pretrained, report in rows:
            r = report.as_row()
            writer.writerow(
                [mode, str(bool(pretrained)).lower()]
                + [repr(r[k]) for k in METRIC_CSV_HEADER[2:]]
            )
