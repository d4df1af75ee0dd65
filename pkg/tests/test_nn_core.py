import math

import numpy as np
import pytest

from softalign.errors import FormatError, ValidationError
from softalign.metrics import entropy
from softalign.nn_core import (
    MlpParams,
    forward,
    gelu,
    init_params,
    load_params,
    loss_and_grad,
    predict_proba,
    save_params,
    softmax,
)


def finite_difference_grads(params, x, targets, step=1e-5):
    """Central finite differences of the mean cross-entropy loss."""

    def loss_at(p):
        value, _ = loss_and_grad(p, x, targets, dropout_rate=0.0, training=False)
        return value

    grads = params.zeros_like()
    for (_, arr), (_, g) in zip(params.fields(), grads.fields()):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_at(params)
            flat[i] = orig - step
            down = loss_at(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for (_, a), (_, n) in zip(analytic.fields(), numeric.fields()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestInitParams:
    def test_bounds(self):
        p = init_params(0, d=7, h=5, c=3)
        assert np.abs(p.W1).max() <= math.sqrt(6.0 / (7 + 5))
        assert np.abs(p.W2).max() <= math.sqrt(6.0 / (5 + 3))

    def test_determinism(self):
        a = init_params(123, 4, 6, 3)
        b = init_params(123, 4, 6, 3)
        np.testing.assert_array_equal(a.W1, b.W1)
        np.testing.assert_array_equal(a.W2, b.W2)

    def test_zero_biases(self):
        p = init_params(9, 3, 4, 2)
        assert not p.b1.any() and not p.b2.any()


class TestGelu:
    def test_zero(self):
        assert float(gelu(np.array([0.0]))[0]) == 0.0

    def test_asymptotic(self):
        assert abs(float(gelu(np.array([10.0]))[0]) - 10.0) < 1e-6

    def test_frozen_value(self):
        assert abs(float(gelu(np.array([1.0]))[0]) - 0.8411919906082768) < 1e-12


class TestForward:
    def test_zero_params_zero_logits(self):
        p = MlpParams(np.zeros((4, 3)), np.zeros(4), np.zeros((2, 4)), np.zeros(2))
        logits, _ = forward(p, np.ones(3))
        np.testing.assert_array_equal(logits, [0.0, 0.0])

    def test_eval_mode_deterministic(self):
        p = init_params(0, 5, 8, 3)
        x = np.random.default_rng(1).normal(size=(6, 5))
        a, _ = forward(p, x, dropout_rate=0.3, training=False)
        b, _ = forward(p, x, dropout_rate=0.3, training=False)
        np.testing.assert_array_equal(a, b)

    def test_hand_threaded_example(self):
        p = MlpParams(
            W1=np.array([[1.0]]), b1=np.array([0.0]), W2=np.array([[1.0], [0.0]]), b2=np.zeros(2)
        )
        logits, _ = forward(p, np.array([1.0]))
        assert abs(logits[0] - 0.8411919906082768) < 1e-12
        assert logits[1] == 0.0

    def test_dimension_mismatch(self):
        p = init_params(0, 4, 3, 2)
        with pytest.raises(ValidationError):
            forward(p, np.ones(5))

    def test_dropout_zero_equals_eval(self):
        p = init_params(3, 6, 9, 4)
        x = np.random.default_rng(2).normal(size=(5, 6))
        rng = np.random.default_rng(0)
        train_logits, _ = forward(p, x, dropout_rate=0.0, training=True, rng=rng)
        eval_logits, _ = forward(p, x, dropout_rate=0.0, training=False)
        np.testing.assert_array_equal(train_logits, eval_logits)
        # rate-0 training consumed no randomness
        assert rng.random() == np.random.default_rng(0).random()

    def test_dropout_requires_rng(self):
        p = init_params(0, 2, 2, 2)
        with pytest.raises(ValidationError):
            forward(p, np.ones(2), dropout_rate=0.5, training=True)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), np.full(4, 0.25))

    def test_shift_invariance(self):
        # exactly representable shift: bit-identical output
        z = np.array([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(softmax(z), softmax(z + 8.0))
        # general shifts agree to rounding error
        z = np.array([0.3, -1.2, 2.0])
        np.testing.assert_allclose(softmax(z), softmax(z + 123.0), rtol=1e-13)

    def test_analytic_case(self):
        np.testing.assert_allclose(softmax(np.array([0.0, math.log(2)])), [1 / 3, 2 / 3], atol=1e-15)

    def test_strictly_positive_and_normalized(self):
        rng = np.random.default_rng(3)
        z = rng.normal(scale=50, size=(30, 6))
        p = softmax(z)
        assert (p > 0).all()
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


class TestLossAndGrad:
    def test_matched_target_zero_gradient(self):
        p = init_params(5, 3, 4, 3)
        x = np.random.default_rng(4).normal(size=(2, 3))
        logits, _ = forward(p, x)
        targets = softmax(logits)
        _, grads = loss_and_grad(p, x, targets, training=False)
        for _, g in grads.fields():
            assert np.abs(g).max() < 1e-12

    def test_one_hot_reduction(self):
        p = init_params(6, 4, 5, 3)
        x = np.random.default_rng(5).normal(size=4)
        target = np.array([0.0, 1.0, 0.0])
        loss, _ = loss_and_grad(p, x, target, training=False)
        logits, _ = forward(p, x)
        probs = softmax(logits)
        assert abs(loss - (-math.log(probs[1]))) < 1e-12

    def test_finite_differences_small_net(self):
        rng = np.random.default_rng(6)
        p = init_params(7, 3, 4, 3)
        x = rng.normal(size=(5, 3))
        t = rng.random((5, 3))
        t /= t.sum(axis=1, keepdims=True)
        _, analytic = loss_and_grad(p, x, t, training=False)
        numeric = finite_difference_grads(p, x, t)
        assert max_rel_error(analytic, numeric) < 1e-4

    def test_loss_at_least_target_entropy(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            p = init_params(int(rng.integers(1 << 16)), 3, 4, 4)
            x = rng.normal(size=(3, 3))
            t = rng.random((3, 4))
            t /= t.sum(axis=1, keepdims=True)
            loss, _ = loss_and_grad(p, x, t, training=False)
            mean_entropy = np.mean([entropy(row) for row in t])
            assert loss >= mean_entropy - 1e-9

    def test_soft_loss_on_one_hot_equals_hard_loss(self):
        p = init_params(9, 4, 6, 3)
        x = np.random.default_rng(9).normal(size=(4, 4))
        one_hot = np.zeros((4, 3))
        one_hot[np.arange(4), [0, 2, 1, 0]] = 1.0
        soft_loss, soft_grads = loss_and_grad(p, x, one_hot, training=False)
        hard_loss, hard_grads = loss_and_grad(p, x, one_hot.copy(), training=False)
        assert soft_loss == hard_loss
        for (_, a), (_, b) in zip(soft_grads.fields(), hard_grads.fields()):
            np.testing.assert_array_equal(a, b)

    def test_gradient_through_dropout(self):
        # dropout mask applied in forward must be the one backward uses
        p = init_params(11, 3, 5, 2)
        x = np.random.default_rng(10).normal(size=(4, 3))
        t = np.tile([0.5, 0.5], (4, 1))
        loss_a, grads_a = loss_and_grad(
            p, x, t, dropout_rate=0.4, training=True, rng=np.random.default_rng(7)
        )
        loss_b, grads_b = loss_and_grad(
            p, x, t, dropout_rate=0.4, training=True, rng=np.random.default_rng(7)
        )
        assert loss_a == loss_b
        for (_, a), (_, b) in zip(grads_a.fields(), grads_b.fields()):
            np.testing.assert_array_equal(a, b)


class TestCheckpoints:
    def test_roundtrip_float32_exact(self, tmp_path):
        p = init_params(1, 5, 7, 3)
        path = tmp_path / "ckpt.bin"
        save_params(p, path)
        back = load_params(path)
        np.testing.assert_array_equal(back.W1, p.W1.astype(np.float32).astype(np.float64))
        np.testing.assert_array_equal(back.b2, p.b2)
        assert back.dims == p.dims
        # saving the reload reproduces identical bytes
        save_params(back, tmp_path / "ckpt2.bin")
        assert (tmp_path / "ckpt.bin").read_bytes() == (tmp_path / "ckpt2.bin").read_bytes()

    def test_sidecar_mismatch_detected(self, tmp_path):
        p = init_params(2, 3, 4, 2)
        path = tmp_path / "ckpt.bin"
        save_params(p, path)
        sidecar = tmp_path / "ckpt.bin.json"
        sidecar.write_text(sidecar.read_text().replace('"hidden_width": 4', '"hidden_width": 5'))
        with pytest.raises(FormatError, match="sidecar"):
            load_params(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            load_params(path)


class TestPredictProba:
    def test_rows_are_distributions(self):
        p = init_params(4, 6, 8, 5)
        x = np.random.default_rng(11).normal(size=(9, 6))
        probs = predict_proba(p, x)
        assert probs.shape == (9, 5)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
