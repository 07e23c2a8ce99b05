"""Built-in verification suite behind the `selfcheck` subcommand.

Each check re-derives an expected value through an independent route (scalar
loops, closed forms, hand arithmetic, finite differences) and compares the
library against it. The slow checks (full-model gradient check, a short
convergence run) can be skipped with fast=True.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, jitter, time_mask
from .data import DatasetMeta, SplitPlan, gen_synthetic
from .losses import (
    LossConfig,
    balance_lambdas,
    contrastive_loss,
    reconstruction_loss,
)
from .metrics import auprc_binary, auroc_binary, macro_prf, silhouette_score
from .model import ModelConfig, encode, init_params
from .optim import AdamConfig, AdamState, adam_step
from .patchmask import PatchConfig, sample_mask
from .tensor import Tensor, finite_diff_check, gelu, layer_norm, matmul, softmax, tsum
from .trainer import RunSettings, TrainConfig, pretrain


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _check(name: str, fn) -> CheckResult:
    try:
        fn()
        return CheckResult(name, True)
    except AssertionError as e:
        return CheckResult(name, False, str(e))
    except Exception as e:  # surface unexpected failures as check failures
        return CheckResult(name, False, f"{type(e).__name__}: {e}")


def _matmul_oracle():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4)).astype(np.float32)
    b = rng.normal(size=(4, 2)).astype(np.float32)
    got = matmul(Tensor(a), Tensor(b)).data
    expect = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expect[i, j] += float(a[i, k]) * float(b[k, j])
    assert np.allclose(got, expect, rtol=1e-5), "matmul disagrees with scalar loops"


def _softmax_oracle():
    out = softmax(Tensor(np.array([1.0, 2.0], np.float32)), axis=0).data
    e = math.e
    assert abs(out[0] - 1 / (1 + e)) < 1e-6 and abs(out[1] - e / (1 + e)) < 1e-6
    big = softmax(Tensor(np.array([1000.0, 1000.0], np.float32)), axis=0).data
    assert np.allclose(big, 0.5, atol=1e-6), "softmax shift invariance failed"


def _layer_norm_oracle():
    g = Tensor(np.ones(2, np.float32))
    b = Tensor(np.zeros(2, np.float32))
    out = layer_norm(Tensor(np.array([1.0, 3.0], np.float32)), g, b, eps=0.0).data
    assert np.allclose(out, [-1.0, 1.0], atol=1e-6), f"layer_norm [1,3] -> {out}"


def _gelu_oracle():
    got = gelu(Tensor(np.array(1.0, np.float32))).item()
    expect = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
    assert abs(got - expect) < 1e-6, f"gelu(1) = {got}, expected {expect}"


def _quadratic_gradcheck():
    x = Tensor(np.array([1.0, 2.0, 3.0], np.float32))
    err = finite_diff_check(lambda t: tsum(t * t), x, h=1e-3)
    assert err < 1e-4, f"quadratic gradient error {err}"


def _ntxent_oracles():
    # identity pair, closed form, and brute force
    h = Tensor(np.array([[0.6, -0.8]], np.float32))
    assert contrastive_loss(h, Tensor(h.data.copy()), tau=0.2).item() == 0.0
    for b in (2, 3, 4):
        row = np.full((b, 8), 0.3, np.float32)
        got = contrastive_loss(Tensor(row), Tensor(row.copy()), tau=0.2).item()
        assert abs(got - math.log(2 * b - 1)) < 1e-5, f"closed form failed at B={b}"
    rng = np.random.default_rng(1)
    for _ in range(20):
        b = int(rng.integers(1, 5))
        d = int(rng.integers(2, 9))
        tau = float(rng.uniform(0.1, 1.0))
        h = rng.normal(size=(b, d)).astype(np.float32)
        h2 = rng.normal(size=(b, d)).astype(np.float32)
        unit = [r / np.linalg.norm(r) for r in np.concatenate([h, h2]).astype(np.float64)]
        expect = 0.0
        for i in range(b):
            pos = math.exp(float(np.dot(unit[i], unit[b + i])) / tau)
            denom = sum(
                math.exp(float(np.dot(unit[i], unit[k])) / tau)
                for k in range(2 * b)
                if k != i
            )
            expect += -math.log(pos / denom)
        expect /= b
        got = contrastive_loss(Tensor(h), Tensor(h2), tau=tau).item()
        assert abs(got - expect) < 1e-5 * max(1.0, abs(expect)), (
            f"brute force mismatch: {got} vs {expect}"
        )


def _recon_oracle():
    p = Tensor(np.array([[[1.0, 2.0]]], np.float32))
    p_hat = Tensor(np.zeros((1, 1, 2), np.float32))
    aug = Tensor(np.array([[[3.0, 4.0]]], np.float32))
    l_orig, l_aug, l_r = reconstruction_loss(p_hat, p, aug, aug)
    assert l_orig.item() == 5.0 and l_aug.item() == 0.0 and l_r.item() == 2.5


def _lambda_oracle():
    lc, lr = balance_lambdas(1.1, 64.0)
    assert lc == 1.0 and abs(lr - 0.0171875) < 1e-12


def _adam_oracle():
    meta = DatasetMeta(T=8, D=1, num_classes=2, name="tiny")
    params = init_params(
        ModelConfig(d_model=4, n_blocks=1, n_heads=2, mlp_ratio=2, proj_dim=2),
        PatchConfig(L=4, theta=0.5),
        meta,
    )
    state = AdamState.for_params(params)
    params.tensors["patch_proj.b"].data[:] = 0.0
    params.tensors["patch_proj.b"].grad = np.ones(4, np.float32)
    adam_step(params, state, AdamConfig(lr=0.1, weight_decay=0.0))
    got = params["patch_proj.b"].data
    assert np.allclose(got, -0.1, rtol=1e-6), f"first Adam step gave {got}"


def _mask_arithmetic():
    cfg = PatchConfig(L=64, theta=0.75)
    assert cfg.n_patches(1280) == 20 and cfg.n_visible(1280) == 5
    rng = np.random.default_rng(2)
    for _ in range(1000):
        assert int(sample_mask(20, 0.75, rng).sum()) == 5
    meta = DatasetMeta(T=1280, D=1, num_classes=3, name="bench1280")
    params = init_params(ModelConfig(), cfg, meta)
    tokens = np.zeros((1, 5, 64), np.float32)
    idx = np.arange(5, dtype=np.int64)[None, :]
    z = encode(tokens, idx, params)
    assert z.shape == (1, 6, 512), f"encoder token count {z.shape}"


def _metric_oracles():
    labels = np.array([1, 0, 0])
    preds = np.array([1, 1, 0])
    _, _, f1 = macro_prf(labels, preds, 2)
    assert abs(np.mean(f1) - 2.0 / 3.0) < 1e-12, "hand confusion-matrix F1 failed"
    assert auroc_binary(np.array([0, 1, 1]) == 1, np.full(3, 0.5)) == 0.5
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(3, 51))
        is_pos = rng.integers(0, 2, size=n).astype(bool)
        scores = np.round(rng.uniform(0, 1, size=n), 1)
        # brute-force threshold sweep
        n_pos, n_neg = int(is_pos.sum()), int((~is_pos).sum())
        if n_pos and n_neg:
            pts = [(0.0, 0.0)]
            for t in np.unique(scores)[::-1]:
                sel = scores >= t
                pts.append(
                    (
                        float(np.sum(sel & ~is_pos)) / n_neg,
                        float(np.sum(sel & is_pos)) / n_pos,
                    )
                )
            sweep = sum(
                (x1 - x0) * 0.5 * (y0 + y1)
                for (x0, y0), (x1, y1) in zip(pts, pts[1:])
            )
            assert abs(auroc_binary(is_pos, scores) - sweep) < 1e-9
        if n_pos:
            area, prev = 0.0, 0.0
            for t in np.unique(scores)[::-1]:
                sel = scores >= t
                tp = float(np.sum(sel & is_pos))
                area += (tp / n_pos - prev) * (tp / float(sel.sum()))
                prev = tp / n_pos
            assert abs(auprc_binary(is_pos, scores) - area) < 1e-9


def _silhouette_oracle():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    labels = np.array([0, 0, 1, 1])
    b = (10.0 + math.sqrt(101.0)) / 2.0
    expect = (b - 1.0) / b
    got = silhouette_score(x, labels)
    assert abs(got - expect) < 1e-9, f"silhouette {got} vs hand value {expect}"
    assert silhouette_score(np.ones((4, 2)), np.array([0, 0, 1, 1])) == 0.0


def _augment_oracles():
    rng = np.random.default_rng(4)
    out = jitter(np.zeros((1000, 10), np.float32), 0.1, rng)
    observed = np.abs(out).mean()
    expect = 0.1 * math.sqrt(2.0 / math.pi)
    assert abs(observed - expect) / expect < 0.05, "half-normal mean failed"
    masked = time_mask(np.ones((1280, 1), np.float32), 0.5, rng)
    assert int(np.sum(np.all(masked == 0.0, axis=1))) == 640


def _init_oracle():
    meta = DatasetMeta(T=1280, D=1, num_classes=3, name="bench1280")
    a = init_params(ModelConfig(init_seed=5), PatchConfig(L=64, theta=0.75), meta)
    b = init_params(ModelConfig(init_seed=5), PatchConfig(L=64, theta=0.75), meta)
    assert a.total_params() == b.total_params()
    for (ka, ta), (_, tb) in zip(a.items(), b.items()):
        assert np.array_equal(ta.data, tb.data), f"init not deterministic at {ka}"


def _permutation_oracle():
    meta = DatasetMeta(T=16, D=1, num_classes=2, name="micro")
    params = init_params(
        ModelConfig(d_model=8, n_blocks=2, n_heads=2, mlp_ratio=4, proj_dim=8),
        PatchConfig(L=4, theta=0.25),
        meta,
    )
    rng = np.random.default_rng(5)
    tokens = rng.normal(size=(1, 3, 4)).astype(np.float32)
    idx = np.array([[0, 1, 3]])
    z = encode(tokens, idx, params).data
    perm = [2, 0, 1]
    z_perm = encode(tokens[:, perm], idx[:, perm], params).data
    assert np.array_equal(z_perm[:, 1:], z[:, 1:][:, perm]), "permutation oracle failed"


def _full_gradcheck():
    # micro-config joint loss vs central differences, float64 storage
    from .gradcheck import joint_loss_gradient_errors

    errors = joint_loss_gradient_errors()
    worst = max(errors.values())
    assert worst < 1e-3, f"worst parameter gradient error {worst}"


def _convergence_run():
    meta = DatasetMeta(T=96, D=1, num_classes=3, name="synth")
    with tempfile.TemporaryDirectory() as tmp:
        corpus = gen_synthetic(tmp, meta, per_class=50, seed=0, sigma=0.1)
    settings = RunSettings(
        meta=meta,
        patch=PatchConfig(L=16, theta=0.75),
        model=ModelConfig(
            d_model=64, n_blocks=2, n_heads=4, mlp_ratio=4, proj_dim=32, init_seed=0
        ),
        loss=LossConfig(mode="cogent"),
        augment=AugmentConfig(kind="jitter", epsilon=0.1),
        train=TrainConfig(epochs_pretrain=15, epochs_finetune=5, batch_size=16, seed=0),
        split=SplitPlan(seed=0),
        config_dict={
            "data.T": 96,
            "data.D": 1,
            "data.num_classes": 3,
            "patch.L": 16,
            "model.d_model": 64,
            "model.n_blocks": 2,
            "model.n_heads": 4,
            "model.mlp_ratio": 4,
            "model.classifier_hidden_ratio": 0.1,
        },
    )
    _, log = pretrain(corpus, settings)
    assert log[-1]["total"] < 0.5 * log[0]["total"], (
        f"pretraining did not converge: {log[0]['total']} -> {log[-1]['total']}"
    )
    # nearest-centroid oracle bounds task difficulty
    centroids = [
        np.mean([s.values.reshape(-1) for s in corpus.train if s.label == c], axis=0)
        for c in range(3)
    ]
    hits = sum(
        int(np.argmin([np.linalg.norm(s.values.reshape(-1) - c) for c in centroids]) == s.label)
        for s in corpus.test
    )
    assert hits / len(corpus.test) >= 0.95, "synthetic corpus is not separable"


def run_selfcheck(fast: bool = False) -> list[CheckResult]:
    checks = [
        ("matmul scalar-loop oracle", _matmul_oracle),
        ("softmax closed forms", _softmax_oracle),
        ("layer_norm two-point row", _layer_norm_oracle),
        ("gelu gaussian cdf at 1", _gelu_oracle),
        ("finite-difference quadratic", _quadratic_gradcheck),
        ("nt-xent closed forms and brute force", _ntxent_oracles),
        ("reconstruction hand arithmetic", _recon_oracle),
        ("loss-weight balancing ratio", _lambda_oracle),
        ("adam first-step closed form", _adam_oracle),
        ("patch/mask arithmetic (1280/64/0.75)", _mask_arithmetic),
        ("metric oracles (f1/auroc/auprc)", _metric_oracles),
        ("silhouette hand example", _silhouette_oracle),
        ("augmentation statistics", _augment_oracles),
        ("parameter init determinism", _init_oracle),
        ("positional permutation equivariance", _permutation_oracle),
    ]
    if not fast:
        checks += [
            ("full joint-loss gradient check", _full_gradcheck),
            ("synthetic convergence run", _convergence_run),
        ]
    return [_check(name, fn) for name, fn in checks]
