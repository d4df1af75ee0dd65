"""One end-to-end training job for a given label mode and config.

Targets are built per label mode (full annotation distribution vs one-hot
majority vote); everything else, including initialization, batch order
and dropout draws, depends only on the seed, so soft and hard runs with
equal seeds differ in targets alone. Identical config and seed reproduce
the result bit-for-bit.

Randomness is split into fixed streams derived from the config seed:
the parameter init uses the seed directly, batch shuffling uses stream 1,
dropout uses stream 2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backend import kernels
from .data_model import Dataset, SplitIndices
from .errors import ValidationError
from .metrics import AlignmentSummary, compute_alignment
from .nn_core import MlpParams, forward, init_params, loss_and_grad
from .optim import EarlyStopState, PlateauState, adam_step, early_stop_update, init_adam, plateau_update
from .targets import target_matrix

LABEL_MODES = ("soft", "hard")
SCHEDULERS = ("none", "plateau")


@dataclass(frozen=True)
class TrainConfig:
    """Full hyperparameter point for one training job."""

    label_mode: str = "soft"
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 20
    weight_decay: float = 0.0
    scheduler: str = "none"
    hidden_width: int = 256
    dropout_rate: float = 0.1
    seed: int = 0
    split_ratios: tuple = (0.7, 0.15, 0.15)
    early_stop: bool = True

    def __post_init__(self):
        if self.label_mode not in LABEL_MODES:
            raise ValidationError(f"label_mode must be one of {LABEL_MODES}")
        if self.scheduler not in SCHEDULERS:
            raise ValidationError(f"scheduler must be one of {SCHEDULERS}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.hidden_width < 1:
            raise ValidationError("hidden_width must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    val_loss: float
    val_accuracy: float
    val_mean_kl: float


@dataclass(eq=False)
class TrainResult:
    """Per-epoch history plus the best parameters and final test metrics."""

    epochs: list
    best_params: MlpParams
    best_epoch: int
    best_val_loss: float
    stopped_epoch: int
    test_summary: AlignmentSummary | None
    config: TrainConfig | None = field(repr=False, default=None)


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def _split_loss_metrics(params, x, targets, counts):
    """Eval-mode (loss, accuracy, mean KL vs annotation distribution)."""
    logits, _ = forward(params, x, training=False)
    loss, probs, _ = kernels.softmax_xent(logits, targets)
    summary = compute_alignment(probs, counts)
    return loss, summary.accuracy, summary.mean_kl


def train(
    dataset: Dataset,
    splits: SplitIndices,
    config: TrainConfig,
    epoch_csv=None,
) -> TrainResult:
    """Train one head; returns history, best params and test metrics.

    Batches are drawn in a seed-deterministic shuffle each epoch (last
    incomplete batch kept); validation loss uses the training label mode
    and drives the plateau scheduler, early stopping and the best-params
    snapshot. Test metrics are computed once, on the best parameters.
    When ``epoch_csv`` is given, per-epoch loss/accuracy/KL rows for all
    three splits are streamed to it.
    """
    if splits.n_total != len(dataset):
        raise ValidationError("splits do not cover this dataset")
    if splits.train.size == 0:
        raise ValidationError("training split is empty")
    if splits.val.size == 0:
        raise ValidationError("validation split is empty")

    x_all = dataset.embeddings
    counts_all = dataset.counts
    targets_all = target_matrix(counts_all, config.label_mode)
    d = dataset.embedding_dim
    c = dataset.num_classes

    params = init_params(config.seed, d, config.hidden_width, c)
    adam = init_adam(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    plateau = PlateauState()
    stopper = EarlyStopState()
    shuffle_rng = _stream(config.seed, 1)
    dropout_rng = _stream(config.seed, 2)

    x_val, t_val, n_val = x_all[splits.val], targets_all[splits.val], counts_all[splits.val]

    writer = None
    csv_fh = None
    if epoch_csv is not None:
        csv_fh = Path(epoch_csv).open("w", newline="", encoding="utf-8")
        writer = csv.writer(csv_fh)
        writer.writerow(["epoch", "split", "loss", "accuracy", "mean_kl"])

    records = []
    best_val_loss = np.inf
    best_epoch = 0
    best_params = params.copy()
    try:
        for epoch in range(1, config.max_epochs + 1):
            perm = shuffle_rng.permutation(splits.train)
            running = 0.0
            for start in range(0, perm.size, config.batch_size):
                batch = perm[start : start + config.batch_size]
                loss, grads = loss_and_grad(
                    params,
                    x_all[batch],
                    targets_all[batch],
                    dropout_rate=config.dropout_rate,
                    training=True,
                    rng=dropout_rng,
                )
                adam, params = adam_step(adam, params, grads)
                running += loss * batch.size
            train_loss = running / perm.size

            val_loss, val_acc, val_kl = _split_loss_metrics(params, x_val, t_val, n_val)
            records.append(
                EpochRecord(
                    epoch=epoch,
                    train_loss=train_loss,
                    val_loss=val_loss,
                    val_accuracy=val_acc,
                    val_mean_kl=val_kl,
                )
            )
            if writer is not None:
                for split_name, idx in (("train", splits.train), ("val", splits.val), ("test", splits.test)):
                    if idx.size == 0:
                        continue
                    loss_s, acc_s, kl_s = _split_loss_metrics(
                        params, x_all[idx], targets_all[idx], counts_all[idx]
                    )
                    writer.writerow(
                        [epoch, split_name, f"{loss_s:.12g}", f"{acc_s:.12g}", f"{kl_s:.12g}"]
                    )

            if val_loss < best_val_loss:
                best_val_loss = val_loss
                best_epoch = epoch
                best_params = params.copy()

            if config.scheduler == "plateau":
                plateau, new_lr = plateau_update(plateau, val_loss, adam.lr)
                if new_lr != adam.lr:
                    adam = replace(adam, lr=new_lr)
            if config.early_stop:
                stopper, stop = early_stop_update(stopper, val_loss)
                if stop:
                    break
    finally:
        if csv_fh is not None:
            csv_fh.close()

    test_summary = None
    if splits.test.size > 0:
        test_summary = evaluate(best_params, dataset, splits.test)
    return TrainResult(
        epochs=records,
        best_params=best_params,
        best_epoch=best_epoch,
        best_val_loss=float(best_val_loss),
        stopped_epoch=len(records),
        test_summary=test_summary,
        config=config,
    )


def evaluate(params: MlpParams, dataset: Dataset, indices) -> AlignmentSummary:
    """Alignment metrics of eval-mode predictions on the given samples.

    Predictions are compared to the annotation distributions: per-sample
    KL, both normalized entropies, accuracy against the majority label and
    the entropy correlation (NaN when degenerate).
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValidationError("cannot evaluate an empty index set")
    logits, _ = forward(params, dataset.embeddings[indices], training=False)
    probs = kernels.softmax(logits)
    return compute_alignment(probs, dataset.counts[indices])
