"""Evaluation mathematics: KL divergence, entropy, accuracy, correlation.

A label distribution is a plain float64 vector with non-negative entries
summing to 1 (within 1e-12); ``validate_distribution`` enforces this where
distributions enter the public API. KL uses the natural log and clamps q
at 1e-12 so float underflow of softmax outputs cannot blow up; terms with
p_i = 0 contribute exactly 0.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import kernels
from .errors import ValidationError, ZeroVarianceError

logger = logging.getLogger(__name__)


def validate_distribution(p, atol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("distribution must be a non-empty vector")
    if np.any(p < 0):
        raise ValidationError("distribution entries must be non-negative")
    if abs(float(p.sum()) - 1.0) > atol:
        raise ValidationError(f"distribution sums to {p.sum()}, expected 1")
    return p


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats."""
    p = validate_distribution(p)
    q = validate_distribution(q)
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.size} vs {q.size}")
    return float(kernels.kl_rows(p[None, :], q[None, :])[0])


def entropy(p, normalized: bool = False) -> float:
    """Shannon entropy in nats; optionally divided by ln(len(p))."""
    p = validate_distribution(p)
    h = float(kernels.entropy_rows(p[None, :])[0])
    if normalized:
        if p.size == 1:
            return 0.0
        h /= math.log(p.size)
    return h


def accuracy(pred_dists, counts_list) -> float:
    """Fraction of samples whose prediction argmax hits the majority class.

    Both argmaxes break ties toward the lowest class index.
    """
    preds = np.asarray(pred_dists, dtype=np.float64)
    counts = np.asarray(counts_list)
    if len(preds) != len(counts):
        raise ValidationError("pred_dists and counts_list lengths differ")
    if len(preds) == 0:
        raise ValidationError("accuracy of an empty sample set is undefined")
    return float(np.mean(np.argmax(preds, axis=1) == np.argmax(counts, axis=1)))


def pearson(x, y) -> float:
    """Sample Pearson correlation, clamped to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson needs two equal-length vectors")
    if x.size < 2:
        raise ValidationError("pearson needs at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc * xc).sum()))
    sy = float(np.sqrt((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("pearson undefined for a zero-variance input")
    r = float((xc * yc).sum() / (sx * sy))
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True, eq=False)
class AlignmentSummary:
    """Per-sample and aggregate agreement between predictions and annotations.

    Entropies are normalized by ln(num_classes); the correlation is
    unchanged by that scaling for a fixed class count. A NaN
    ``entropy_correlation`` marks a degenerate evaluation set (constant
    entropies or a single sample).
    """

    mean_kl: float
    accuracy: float
    entropy_correlation: float
    per_sample_kl: np.ndarray
    per_sample_pred_entropy: np.ndarray
    per_sample_annot_entropy: np.ndarray


def compute_alignment(pred_probs, counts) -> AlignmentSummary:
    """AlignmentSummary from (N, C) predictions and (N, C) annotation counts."""
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if pred_probs.shape != counts.shape:
        raise ValidationError("pred_probs and counts shapes differ")
    if pred_probs.shape[0] == 0:
        raise ValidationError("cannot evaluate an empty sample set")
    annot = counts / counts.sum(axis=1, keepdims=True)
    n_classes = pred_probs.shape[1]
    log_c = math.log(n_classes) if n_classes > 1 else 1.0

    per_kl = kernels.kl_rows(annot, pred_probs)
    pred_h = kernels.entropy_rows(pred_probs) / log_c
    annot_h = kernels.entropy_rows(annot) / log_c
    acc = accuracy(pred_probs, counts)
    try:
        corr = pearson(annot_h, pred_h)
    except ValidationError as exc:
        logger.warning("entropy correlation undefined (%s); reporting NaN", exc)
        corr = math.nan
    return AlignmentSummary(
        mean_kl=float(per_kl.mean()),
        accuracy=acc,
        entropy_correlation=corr,
        per_sample_kl=per_kl,
        per_sample_pred_entropy=pred_h,
        per_sample_annot_entropy=annot_h,
    )


def write_per_sample_csv(path, ids, pred_probs, counts) -> None:
    """Per-sample metric dump: id, annot_entropy, pred_entropy, kl, correct."""
    summary = compute_alignment(pred_probs, counts)
    pred_cls = np.argmax(np.asarray(pred_probs), axis=1)
    true_cls = np.argmax(np.asarray(counts), axis=1)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "annot_entropy", "pred_entropy", "kl", "correct"])
        for i, sample_id in enumerate(ids):
            writer.writerow(
                [
                    sample_id,
                    f"{summary.per_sample_annot_entropy[i]:.12g}",
                    f"{summary.per_sample_pred_entropy[i]:.12g}",
                    f"{summary.per_sample_kl[i]:.12g}",
                    int(pred_cls[i] == true_cls[i]),
                ]
            )
