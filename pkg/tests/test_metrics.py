import math
from fractions import Fraction

import numpy as np
import pytest

from cogent.errors import ContractError
from cogent.metrics import (
    auprc_binary,
    auroc_binary,
    compute_metrics,
    macro_prf,
    silhouette_score,
)


def auroc_threshold_sweep(is_pos: np.ndarray, scores: np.ndarray) -> float:
    """Brute-force ROC trapezoid over all distinct thresholds."""
    n_pos = int(is_pos.sum())
    n_neg = len(is_pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    thresholds = np.unique(scores)[::-1]
    pts = [(0.0, 0.0)]
    for t in thresholds:
        sel = scores >= t
        tpr = float(np.sum(sel & is_pos)) / n_pos
        fpr = float(np.sum(sel & ~is_pos)) / n_neg
        pts.append((fpr, tpr))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * 0.5 * (y0 + y1)
    return area


def auprc_threshold_sweep(is_pos: np.ndarray, scores: np.ndarray) -> float:
    n_pos = int(is_pos.sum())
    if n_pos == 0:
        return 0.0
    thresholds = np.unique(scores)[::-1]
    area, prev_r = 0.0, 0.0
    for t in thresholds:
        sel = scores >= t
        tp = float(np.sum(sel & is_pos))
        prec = tp / float(sel.sum())
        rec = tp / n_pos
        area += (rec - prev_r) * prec
        prev_r = rec
    return area


def silhouette_loops(x: np.ndarray, labels: np.ndarray) -> float:
    scores = []
    for i in range(len(x)):
        own = [j for j in range(len(x)) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = float(np.mean([np.linalg.norm(x[i] - x[j]) for j in own]))
        bs = []
        for c in set(labels.tolist()) - {labels[i]}:
            other = [j for j in range(len(x)) if labels[j] == c]
            bs.append(float(np.mean([np.linalg.norm(x[i] - x[j]) for j in other])))
        if not bs:
            scores.append(0.0)
            continue
        b = min(bs)
        m = max(a, b)
        scores.append((b - a) / m if m > 0 else 0.0)
    return float(np.mean(scores))


class TestMacroPRF:
    def test_hand_confusion_example(self):
        labels = np.array([1, 0, 0])
        preds = np.array([1, 1, 0])
        precision, recall, f1 = macro_prf(labels, preds, 2)
        assert f1 == [pytest.approx(2 / 3), pytest.approx(2 / 3)]
        assert np.mean(f1) == pytest.approx(2 / 3)

    def test_perfect_predictions(self):
        labels = np.array([0, 1, 2, 0])
        report = compute_metrics(labels, labels, np.eye(3)[labels], 3)
        assert report.accuracy == 1.0
        assert report.precision == 1.0
        assert report.recall == 1.0
        assert report.f1 == 1.0
        assert report.auroc == 1.0
        assert report.auprc == 1.0

    def test_macro_f1_is_mean_of_per_class_not_harmonic_of_macros(self):
        labels = np.array([1, 0, 0])
        preds = np.array([1, 1, 0])
        report = compute_metrics(labels, preds, np.eye(2)[preds].astype(float), 2)
        # per-class F1 are harmonic means; the macro is their plain mean
        assert report.f1 == pytest.approx(2 / 3)
        assert report.precision == pytest.approx(0.75)
        assert report.recall == pytest.approx(0.75)
        harmonic = 2 * 0.75 * 0.75 / 1.5
        assert report.f1 != pytest.approx(harmonic)

    def test_exact_rational_agreement_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 51))
            c = int(rng.integers(2, 5))
            labels = rng.integers(0, c, size=n)
            preds = rng.integers(0, c, size=n)
            _, _, f1 = macro_prf(labels, preds, c)
            # rational-arithmetic oracle
            for cls in range(c):
                tp = int(np.sum((preds == cls) & (labels == cls)))
                fp = int(np.sum((preds == cls) & (labels != cls)))
                fn = int(np.sum((preds != cls) & (labels == cls)))
                if 2 * tp + fp + fn == 0:
                    expect = 0.0
                else:
                    expect = float(Fraction(2 * tp, 2 * tp + fp + fn))
                assert f1[cls] == expect

    def test_empty_split_rejected(self):
        with pytest.raises(ContractError):
            compute_metrics(np.array([]), np.array([]), np.zeros((0, 2)), 2)


class TestAuroc:
    def test_uniform_scores_give_half(self):
        labels = np.array([0, 0, 1, 1, 1])
        scores = np.full(5, 0.7)
        assert auroc_binary(labels == 1, scores) == 0.5

    def test_perfect_separation(self):
        is_pos = np.array([False, False, True, True])
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        assert auroc_binary(is_pos, scores) == 1.0

    def test_matches_threshold_sweep_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(3, 51))
            is_pos = rng.integers(0, 2, size=n).astype(bool)
            # quantized scores force ties
            scores = np.round(rng.uniform(0, 1, size=n), 1)
            a = auroc_binary(is_pos, scores)
            b = auroc_threshold_sweep(is_pos, scores)
            assert abs(a - b) < 1e-9

    def test_degenerate_class_returns_half(self):
        assert auroc_binary(np.array([True, True]), np.array([0.1, 0.2])) == 0.5


class TestAuprc:
    def test_matches_threshold_sweep(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(3, 51))
            is_pos = rng.integers(0, 2, size=n).astype(bool)
            scores = np.round(rng.uniform(0, 1, size=n), 1)
            a = auprc_binary(is_pos, scores)
            b = auprc_threshold_sweep(is_pos, scores)
            assert abs(a - b) < 1e-9

    def test_uniform_scores_give_prevalence(self):
        is_pos = np.array([True, False, False, True])
        scores = np.full(4, 0.3)
        assert auprc_binary(is_pos, scores) == pytest.approx(0.5)


class TestSilhouette:
    def test_two_tight_separated_clusters(self):
        rng = np.random.default_rng(3)
        a = rng.normal(0, 0.05, size=(20, 2))
        b = rng.normal(0, 0.05, size=(20, 2)) + 50.0
        x = np.concatenate([a, b])
        labels = np.array([0] * 20 + [1] * 20)
        assert silhouette_score(x, labels) > 0.9

    def test_all_points_identical(self):
        x = np.ones((6, 3))
        labels = np.array([0, 0, 0, 1, 1, 1])
        assert silhouette_score(x, labels) == 0.0

    def test_four_point_hand_example(self):
        # clusters {(0,0),(0,1)} and {(10,0),(10,1)}: a = 1,
        # b = (10 + sqrt(101)) / 2, s = (b - a)/b for every point
        x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        labels = np.array([0, 0, 1, 1])
        b = (10.0 + math.sqrt(101.0)) / 2.0
        expect = (b - 1.0) / b
        assert silhouette_score(x, labels) == pytest.approx(expect, abs=1e-9)
        assert abs(silhouette_score(x, labels) - 0.900249) < 1e-4

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 4))
        labels = rng.integers(0, 3, size=30)
        assert silhouette_score(x, labels) == pytest.approx(
            silhouette_loops(x, labels), abs=1e-12
        )

    def test_singleton_cluster_scores_zero(self):
        x = np.array([[0.0], [1.0], [2.0]])
        labels = np.array([0, 0, 1])  # cluster 1 has a single member
        loops = silhouette_loops(x, labels)
        assert silhouette_score(x, labels) == pytest.approx(loops)

    def test_single_cluster_is_zero(self):
        x = np.random.default_rng(5).normal(size=(10, 2))
        assert silhouette_score(x, np.zeros(10, dtype=int)) == 0.0
