"""Adam with coupled L2 decay, plateau LR scheduling, early stopping.

All three are pure state machines: each update consumes a state and
returns a fresh one, so copies of a state always evolve identically.
The scheduler and the stopper share the same notion of improvement,
``val_loss < best_val - threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .backend import kernels
from .errors import ValidationError
from .nn_core import MlpParams

MIN_LR = 1e-8  # floor after repeated halvings, avoids denormal rates


@dataclass(frozen=True, eq=False)
class AdamState:
    """Moment accumulators plus step counter and hyperparameters."""

    m: MlpParams
    v: MlpParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3
    weight_decay: float = 0.0


def init_adam(params: MlpParams, lr: float, weight_decay: float = 0.0) -> AdamState:
    if lr <= 0:
        raise ValidationError("learning rate must be positive")
    if weight_decay < 0:
        raise ValidationError("weight_decay must be non-negative")
    return AdamState(m=params.zeros_like(), v=params.zeros_like(), lr=lr, weight_decay=weight_decay)


def adam_step(state: AdamState, params: MlpParams, grads: MlpParams):
    """One Adam update; returns (new_state, new_params), inputs untouched."""
    for (name, p), (_, g) in zip(params.fields(), grads.fields()):
        if p.shape != g.shape:
            raise ValidationError(f"gradient shape mismatch on {name}")
    new_params = params.copy()
    new_m = state.m.copy()
    new_v = state.v.copy()
    t = state.t + 1
    for (_, p), (_, g), (_, m), (_, v) in zip(
        new_params.fields(), grads.fields(), new_m.fields(), new_v.fields()
    ):
        kernels.adam_update(
            p, g, m, v, t, state.lr, state.beta1, state.beta2, state.eps, state.weight_decay
        )
    return replace(state, m=new_m, v=new_v, t=t), new_params


@dataclass(frozen=True)
class PlateauState:
    """Halve the learning rate after `patience` epochs without improvement."""

    best_val: float = np.inf
    epochs_since_improvement: int = 0
    factor: float = 0.5
    patience: int = 2
    threshold: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValidationError("factor must lie in (0, 1)")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")


def plateau_update(state: PlateauState, val_loss: float, lr: float):
    """Returns (new_state, new_lr); the rate never increases.

    On a halving the stagnation counter resets but the best value is kept.
    """
    if val_loss < state.best_val - state.threshold:
        return replace(state, best_val=val_loss, epochs_since_improvement=0), lr
    stale = state.epochs_since_improvement + 1
    if stale >= state.patience:
        return replace(state, epochs_since_improvement=0), max(lr * state.factor, MIN_LR)
    return replace(state, epochs_since_improvement=stale), lr


@dataclass(frozen=True)
class EarlyStopState:
    """Stop after `patience` epochs without improvement beyond min_delta."""

    best_val: float = np.inf
    epochs_since_improvement: int = 0
    patience: int = 5
    min_delta: float = 1e-4

    def __post_init__(self):
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.min_delta < 0:
            raise ValidationError("min_delta must be non-negative")


def early_stop_update(state: EarlyStopState, val_loss: float):
    """Returns (new_state, stop flag)."""
    if val_loss < state.best_val - state.min_delta:
        return replace(state, best_val=val_loss, epochs_since_improvement=0), False
    stale = state.epochs_since_improvement + 1
    return replace(state, epochs_since_improvement=stale), stale >= state.patience
