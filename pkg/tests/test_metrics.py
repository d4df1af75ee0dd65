import math

import numpy as np
import pytest

from softalign.errors import ValidationError, ZeroVarianceError
from softalign.metrics import (
    accuracy,
    compute_alignment,
    entropy,
    kl_divergence,
    pearson,
    validate_distribution,
    write_per_sample_csv,
)


def random_distribution(rng, c, with_zeros=False):
    p = rng.random(c)
    if with_zeros and c > 1:
        p[: rng.integers(1, c)] = 0.0
        rng.shuffle(p)
        if p.sum() == 0:
            p[0] = 1.0
    return p / p.sum()


class TestKlDivergence:
    def test_identity(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_single_term_analytic(self):
        assert abs(kl_divergence([1.0, 0.0], [0.5, 0.5]) - math.log(2)) < 1e-12

    def test_frozen_oracle_value(self):
        # high-precision direct evaluation: 0.6*ln(1.2) + 0.4*ln(0.8)
        assert abs(kl_divergence([0.6, 0.4], [0.5, 0.5]) - 0.020135513550688863) < 1e-12

    def test_self_kl_small_with_zeros(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            p = random_distribution(rng, int(rng.integers(2, 9)), with_zeros=True)
            assert kl_divergence(p, p) <= 1e-9

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            c = int(rng.integers(2, 9))
            p = random_distribution(rng, c, with_zeros=True)
            q = random_distribution(rng, c)
            assert kl_divergence(p, q) >= -1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            kl_divergence([0.5, 0.5], [0.3, 0.3, 0.4])


class TestEntropy:
    def test_one_hot(self):
        assert entropy([0.0, 1.0, 0.0]) == 0.0

    def test_uniform_normalized_is_one(self):
        for c in (2, 3, 5, 10, 17):
            p = np.full(c, 1.0 / c)
            assert abs(entropy(p, normalized=True) - 1.0) < 1e-12

    def test_frozen_oracle_values(self):
        assert abs(entropy([0.6, 0.4]) - 0.6730116670092565) < 1e-12
        assert abs(entropy([0.6, 0.4], normalized=True) - 0.9709505944546686) < 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p = random_distribution(rng, 6, with_zeros=True)
            q = rng.permutation(p)
            assert abs(entropy(p, normalized=True) - entropy(q, normalized=True)) < 1e-12

    def test_normalized_range(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = random_distribution(rng, int(rng.integers(2, 12)))
            h = entropy(p, normalized=True)
            assert 0.0 <= h <= 1.0 + 1e-12


class TestAccuracy:
    def test_perfect(self):
        preds = [[1.0, 0.0], [0.0, 1.0]]
        counts = [[4, 1], [0, 3]]
        assert accuracy(preds, counts) == 1.0

    def test_zero(self):
        preds = [[0.0, 1.0], [1.0, 0.0]]
        counts = [[4, 1], [0, 3]]
        assert accuracy(preds, counts) == 0.0

    def test_counting(self):
        preds = [[0.9, 0.1]] * 3 + [[0.1, 0.9]] * 2
        counts = [[5, 0]] * 3 + [[5, 0]] * 2
        assert accuracy(preds, counts) == 0.6

    def test_empty(self):
        with pytest.raises(ValidationError):
            accuracy([], [])


class TestPearson:
    def test_perfect_linear(self):
        assert pearson([1.0, 2.0, 5.0], [1.0, 2.0, 5.0]) == 1.0
        assert pearson([1.0, 2.0, 5.0], [-1.0, -2.0, -5.0]) == -1.0

    def test_frozen_oracle_value(self):
        assert abs(pearson([1, 2, 3], [1, 2, 4]) - 0.9819805060619659) < 1e-12

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_affine_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            x = rng.normal(size=20)
            y = rng.normal(size=20)
            a = float(rng.uniform(0.1, 5.0))
            b = float(rng.normal())
            assert abs(pearson(a * x + b, y) - pearson(x, y)) < 1e-12

    def test_length_checks(self):
        with pytest.raises(ValidationError):
            pearson([1.0], [2.0])
        with pytest.raises(ValidationError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])


class TestValidateDistribution:
    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            validate_distribution([-0.1, 1.1])

    def test_rejects_bad_sum(self):
        with pytest.raises(ValidationError):
            validate_distribution([0.5, 0.6])

    def test_accepts_with_tolerance(self):
        validate_distribution([0.5, 0.5 + 5e-13])


class TestComputeAlignment:
    def test_matched_predictions_fixed_point(self):
        rng = np.random.default_rng(5)
        counts = rng.integers(0, 8, size=(40, 4))
        counts[:, 0] += 1
        annot = counts / counts.sum(axis=1, keepdims=True)
        summary = compute_alignment(annot, counts)
        assert summary.mean_kl <= 1e-9
        assert summary.accuracy == 1.0
        assert abs(summary.entropy_correlation - 1.0) < 1e-6

    def test_mean_kl_matches_per_sample(self):
        rng = np.random.default_rng(6)
        counts = rng.integers(0, 9, size=(60, 3)) + 1
        preds = rng.random((60, 3))
        preds /= preds.sum(axis=1, keepdims=True)
        summary = compute_alignment(preds, counts)
        assert abs(summary.mean_kl - summary.per_sample_kl.mean()) < 1e-12

    def test_correlation_nan_on_degenerate(self):
        summary = compute_alignment(np.array([[0.5, 0.5]]), np.array([[2, 2]]))
        assert math.isnan(summary.entropy_correlation)
        assert summary.mean_kl >= 0.0

    def test_normalized_vs_raw_entropy_correlation(self):
        # scaling both entropy vectors by 1/ln(C) leaves pearson unchanged
        rng = np.random.default_rng(7)
        counts = rng.integers(0, 10, size=(80, 5)) + 1
        preds = rng.random((80, 5))
        preds /= preds.sum(axis=1, keepdims=True)
        summary = compute_alignment(preds, counts)
        raw = pearson(
            summary.per_sample_annot_entropy * math.log(5),
            summary.per_sample_pred_entropy * math.log(5),
        )
        assert abs(summary.entropy_correlation - raw) < 1e-9


class TestPerSampleCsv:
    def test_columns_and_rows(self, tmp_path):
        rng = np.random.default_rng(8)
        counts = rng.integers(0, 6, size=(10, 3)) + 1
        preds = rng.random((10, 3))
        preds /= preds.sum(axis=1, keepdims=True)
        path = tmp_path / "per_sample.csv"
        write_per_sample_csv(path, [f"s{i}" for i in range(10)], preds, counts)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "id,annot_entropy,pred_entropy,kl,correct"
        assert len(lines) == 11
        assert all(line.split(",")[-1] in ("0", "1") for line in lines[1:])
