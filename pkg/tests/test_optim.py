import numpy as np
import pytest

from softalign.errors import ValidationError
from softalign.nn_core import init_params
from softalign.optim import (
    EarlyStopState,
    PlateauState,
    adam_step,
    early_stop_update,
    init_adam,
    plateau_update,
)


def grads_like(params, fill=None, rng=None):
    g = params.zeros_like()
    for _, arr in g.fields():
        if fill is not None:
            arr.fill(fill)
        else:
            arr[...] = rng.normal(size=arr.shape)
    return g


class TestAdam:
    def test_zero_grad_fixed_point(self):
        p = init_params(0, 3, 4, 2)
        state = init_adam(p, lr=1e-3, weight_decay=0.0)
        _, new_p = adam_step(state, p, grads_like(p, fill=0.0))
        for (_, a), (_, b) in zip(p.fields(), new_p.fields()):
            np.testing.assert_array_equal(a, b)

    def test_first_step_is_signed_lr(self):
        rng = np.random.default_rng(1)
        p = init_params(1, 4, 5, 3)
        g = grads_like(p, rng=rng)
        for _, arr in g.fields():
            arr[np.abs(arr) < 1e-3] = 1e-3  # keep every coordinate above the bound
        state = init_adam(p, lr=1e-3, weight_decay=0.0)
        _, new_p = adam_step(state, p, g)
        for (_, before), (_, after), (_, grad) in zip(p.fields(), new_p.fields(), g.fields()):
            update = after - before
            expected = -1e-3 * np.sign(grad)
            np.testing.assert_allclose(update, expected, rtol=1e-3)

    def test_pure_state_machine(self):
        rng = np.random.default_rng(2)
        p = init_params(2, 3, 3, 2)
        g = grads_like(p, rng=rng)
        state = init_adam(p, lr=1e-2, weight_decay=1e-4)
        s1, p1 = adam_step(state, p, g)
        s2, p2 = adam_step(state, p, g)
        assert s1.t == s2.t == 1
        for (_, a), (_, b) in zip(p1.fields(), p2.fields()):
            np.testing.assert_array_equal(a, b)
        for (_, a), (_, b) in zip(s1.m.fields(), s2.m.fields()):
            np.testing.assert_array_equal(a, b)
        # inputs untouched
        np.testing.assert_array_equal(p.b1, np.zeros_like(p.b1))
        assert state.t == 0 and not state.m.W1.any()

    def test_weight_decay_pulls_toward_zero(self):
        p = init_params(3, 3, 4, 2)
        state = init_adam(p, lr=1e-3, weight_decay=1e-2)
        _, new_p = adam_step(state, p, grads_like(p, fill=0.0))
        # zero grads plus coupled decay move weights opposite their sign
        moved = new_p.W1[p.W1 != 0] - p.W1[p.W1 != 0]
        assert (np.sign(moved) == -np.sign(p.W1[p.W1 != 0])).all()

    def test_shape_mismatch(self):
        p = init_params(0, 3, 4, 2)
        bad = init_params(0, 3, 5, 2).zeros_like()
        state = init_adam(p, lr=1e-3)
        with pytest.raises(ValidationError):
            adam_step(state, p, bad)

    def test_invalid_hyperparameters(self):
        p = init_params(0, 2, 2, 2)
        with pytest.raises(ValidationError):
            init_adam(p, lr=0.0)
        with pytest.raises(ValidationError):
            init_adam(p, lr=1e-3, weight_decay=-1.0)


class TestPlateau:
    def test_improving_losses_keep_lr(self):
        state = PlateauState(patience=2)
        lr = 0.1
        for loss in np.linspace(1.0, 0.5, 20):
            state, lr = plateau_update(state, float(loss), lr)
        assert lr == 0.1

    def test_halves_exactly_once_on_documented_trace(self):
        state = PlateauState(best_val=1.0, patience=2)
        lr = 0.2
        halvings = 0
        for loss in (1.0, 1.0, 1.0):
            state, new_lr = plateau_update(state, loss, lr)
            if new_lr != lr:
                halvings += 1
            lr = new_lr
        assert halvings == 1
        assert lr == 0.1

    def test_lr_monotone_non_increasing(self):
        rng = np.random.default_rng(3)
        state = PlateauState(patience=2)
        lr = 1e-2
        for _ in range(200):
            prev = lr
            state, lr = plateau_update(state, float(rng.random()), lr)
            assert lr <= prev

    def test_lr_floor(self):
        state = PlateauState(patience=1)
        lr = 1e-7
        for _ in range(50):
            state, lr = plateau_update(state, 1.0, lr)
        assert lr == 1e-8

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            PlateauState(patience=0)
        with pytest.raises(ValidationError):
            PlateauState(factor=1.5)


class TestEarlyStop:
    def test_first_epoch_never_stops(self):
        state = EarlyStopState()
        _, stop = early_stop_update(state, 123.4)
        assert stop is False

    def test_steady_improvement_never_stops(self):
        state = EarlyStopState()
        loss = 1.0
        for _ in range(100):
            state, stop = early_stop_update(state, loss)
            assert stop is False
            loss -= 2e-4  # always beats the 1e-4 threshold

    def test_six_identical_losses_stop_at_sixth(self):
        state = EarlyStopState()
        flags = []
        for _ in range(6):
            state, stop = early_stop_update(state, 0.7)
            flags.append(stop)
        assert flags == [False, False, False, False, False, True]

    def test_sub_threshold_improvement_counts_as_stagnation(self):
        state = EarlyStopState()
        state, _ = early_stop_update(state, 1.0)
        stops = []
        for _ in range(5):
            # better than best but never by the 1e-4 threshold
            state, stop = early_stop_update(state, 1.0 - 5e-5)
            stops.append(stop)
        assert stops == [False, False, False, False, True]

    def test_halving_count_bound(self):
        # over E epochs the scheduler can halve at most floor(E/patience) times
        rng = np.random.default_rng(4)
        for patience in (1, 2, 3):
            state = PlateauState(patience=patience)
            lr = 1.0
            halvings = 0
            epochs = 60
            for _ in range(epochs):
                prev = lr
                state, lr = plateau_update(state, float(rng.random()), lr)
                halvings += lr != prev
            assert halvings <= epochs // patience
