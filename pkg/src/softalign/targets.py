"""Training targets from annotation counts, plus entropy-stratified curation.

Soft targets keep the full annotation distribution; hard targets collapse
it to a one-hot vector at the majority-vote class. Ties in the majority
vote break toward the lowest class index, the same rule used for
prediction argmax, so the two sides of every comparison agree on
tie handling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import kernels
from .data_model import Dataset
from .errors import ValidationError


@dataclass(frozen=True)
class CurationSpec:
    """Entropy-stratified subsampling parameters."""

    num_bins: int = 10
    cap_per_bin: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.num_bins < 1:
            raise ValidationError("num_bins must be >= 1")
        if self.cap_per_bin < 1:
            raise ValidationError("cap_per_bin must be >= 1")


def _check_counts(counts) -> np.ndarray:
    counts = np.asarray(counts)
    if counts.ndim != 1 or counts.size == 0:
        raise ValidationError("counts must be a non-empty vector")
    if np.any(counts < 0):
        raise ValidationError("counts must be non-negative")
    if counts.sum() == 0:
        raise ValidationError("counts are all zero")
    return counts.astype(np.int64)


def soft_target(counts) -> np.ndarray:
    """Normalized annotation counts: the full label distribution as target."""
    counts = _check_counts(counts)
    return counts / counts.sum()


def majority_class(counts) -> int:
    """Index of the maximal count; ties break to the lowest class index."""
    counts = _check_counts(counts)
    return int(np.argmax(counts))


def hard_target(counts) -> np.ndarray:
    """One-hot vector at the majority-vote class."""
    counts = _check_counts(counts)
    out = np.zeros(counts.size, dtype=np.float64)
    out[int(np.argmax(counts))] = 1.0
    return out


def target_matrix(counts_matrix: np.ndarray, label_mode: str) -> np.ndarray:
    """(N, C) matrix of soft or hard targets from an (N, C) counts matrix."""
    counts_matrix = np.asarray(counts_matrix, dtype=np.float64)
    if label_mode == "soft":
        return counts_matrix / counts_matrix.sum(axis=1, keepdims=True)
    if label_mode == "hard":
        out = np.zeros_like(counts_matrix)
        out[np.arange(counts_matrix.shape[0]), np.argmax(counts_matrix, axis=1)] = 1.0
        return out
    raise ValidationError(f"unknown label_mode {label_mode!r}")


def normalized_entropies(dataset: Dataset) -> np.ndarray:
    """Per-sample annotation entropy divided by ln(num_classes), in [0, 1]."""
    probs = target_matrix(dataset.counts, "soft")
    raw = kernels.entropy_rows(probs)
    if dataset.num_classes == 1:
        return np.zeros_like(raw)
    return raw / math.log(dataset.num_classes)


def entropy_bin(h: float, num_bins: int) -> int:
    """Bin index for a normalized entropy in [0, 1].

    Bins are equal width with boundary values falling into the lower bin;
    0 lands in the first bin and 1 in the last.
    """
    idx = int(math.ceil(h * num_bins)) - 1
    return min(max(idx, 0), num_bins - 1)


def bin_populations(dataset: Dataset, num_bins: int) -> np.ndarray:
    """Sample count per entropy bin."""
    pops = np.zeros(num_bins, dtype=np.int64)
    for h in normalized_entropies(dataset):
        pops[entropy_bin(float(h), num_bins)] += 1
    return pops


def curate_stratified(dataset: Dataset, spec: CurationSpec) -> Dataset:
    """Uniformly subsample up to cap_per_bin samples per entropy bin.

    Deterministic per seed; the output preserves the input's relative
    sample order.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot curate an empty dataset")
    entropies = normalized_entropies(dataset)
    bins = [[] for _ in range(spec.num_bins)]
    for i, h in enumerate(entropies):
        bins[entropy_bin(float(h), spec.num_bins)].append(i)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed))
    keep = []
    for members in bins:
        if not members:
            continue
        take = min(spec.cap_per_bin, len(members))
        chosen = rng.choice(np.asarray(members), size=take, replace=False)
        keep.extend(int(i) for i in chosen)
    keep.sort()
    return dataset.subset(keep, name=f"{dataset.name}_curated")


def write_curation_report(path, before: Dataset, after: Dataset, num_bins: int) -> None:
    """CSV of per-bin populations before and after curation."""
    pops_before = bin_populations(before, num_bins)
    pops_after = bin_populations(after, num_bins)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "entropy_lo", "entropy_hi", "before", "after"])
        for b in range(num_bins):
            writer.writerow(
                [b, b / num_bins, (b + 1) / num_bins, int(pops_before[b]), int(pops_after[b])]
            )
