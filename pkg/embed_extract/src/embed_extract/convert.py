"""Public annotation releases -> the toolkit's annotation JSONL.

Each converter parses the upstream release's documented schema and emits
per-sample class counts (plus a texts sidecar where the source is text).
Schema drift raises ConversionError naming the offending field; rows whose
annotations sum to zero are rejected with the sample id.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .writer import (
    ConversionError,
    write_annotation_file,
    write_dataset_meta,
    write_texts_file,
)

CHAOSNLI_CLASSES = ("entailment", "neutral", "contradiction")
CHAOSNLI_LABEL_KEYS = ("e", "n", "c")

POPQUORN_CLASSES = ("1", "2", "3", "4", "5")  # ordinal politeness scale values

CIFAR10_CLASSES = (
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
)


def _require(obj: dict, field: str, context: str):
    if field not in obj:
        raise ConversionError(f"{context}: missing field {field!r}")
    return obj[field]


def convert_chaosnli(input_path, out_dir) -> Path:
    """ChaosNLI JSONL (uid, label_counter {e,n,c}, example) -> counts + texts."""
    input_path = Path(input_path)
    ids, counts_rows, texts = [], [], []
    with input_path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConversionError(f"{input_path}:{lineno}: invalid JSON ({exc})") from exc
            context = f"{input_path}:{lineno}"
            uid = str(_require(obj, "uid", context))
            counter = _require(obj, "label_counter", context)
            if not isinstance(counter, dict):
                raise ConversionError(f"{context}: field 'label_counter' must be an object")
            unknown = set(counter) - set(CHAOSNLI_LABEL_KEYS)
            if unknown:
                raise ConversionError(f"{context}: unknown label_counter keys {sorted(unknown)}")
            counts = [int(counter.get(k, 0)) for k in CHAOSNLI_LABEL_KEYS]
            example = _require(obj, "example", context)
            premise = _require(example, "premise", f"{context}: example")
            hypothesis = _require(example, "hypothesis", f"{context}: example")
            ids.append(uid)
            counts_rows.append(counts)
            texts.append(f"{premise}\n{hypothesis}")
    return _emit(out_dir, "chaos_nli", CHAOSNLI_CLASSES, ids, counts_rows, texts)


def convert_popquorn(
    input_path,
    out_dir,
    instance_column: str = "instance_id",
    rating_column: str = "politeness",
    text_column: str = "text",
) -> Path:
    """POPQUORN politeness ratings CSV (one row per annotator judgment).

    Ordinal scores 1..5 map to five classes by their scale value; annotator
    counts per sample vary and are kept as-is.
    """
    input_path = Path(input_path)
    tallies: dict = {}
    texts: dict = {}
    order: list = []
    with input_path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for col in (instance_column, rating_column, text_column):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise ConversionError(f"{input_path}: missing column {col!r}")
        for rowno, row in enumerate(reader, start=2):
            instance = row[instance_column]
            raw = row[rating_column]
            try:
                rating = int(float(raw))
            except ValueError as exc:
                raise ConversionError(
                    f"{input_path}:{rowno}: field {rating_column!r} not numeric: {raw!r}"
                ) from exc
            if not 1 <= rating <= 5:
                raise ConversionError(
                    f"{input_path}:{rowno}: field {rating_column!r} out of the 1..5 scale: {raw!r}"
                )
            if instance not in tallies:
                tallies[instance] = [0] * 5
                texts[instance] = row[text_column]
                order.append(instance)
            tallies[instance][rating - 1] += 1
    ids = [f"popquorn-{i}" for i in order]
    counts_rows = [tallies[i] for i in order]
    text_list = [texts[i] for i in order]
    return _emit(out_dir, "popquorn", POPQUORN_CLASSES, ids, counts_rows, text_list)


def convert_cifar10h(input_path, out_dir) -> Path:
    """CIFAR-10H counts matrix (.npy, one row of 10 tallies per test image)."""
    input_path = Path(input_path)
    counts = np.load(input_path)
    if counts.ndim != 2 or counts.shape[1] != len(CIFAR10_CLASSES):
        raise ConversionError(
            f"{input_path}: expected an (N, 10) counts matrix, got shape {counts.shape}"
        )
    if np.any(counts < 0):
        raise ConversionError(f"{input_path}: negative annotation counts")
    ids = [f"cifar10-test-{i:05d}" for i in range(counts.shape[0])]
    return _emit(out_dir, "cifar10h", CIFAR10_CLASSES, ids, counts.astype(np.int64), texts=None)


def _emit(out_dir, name, class_names, ids, counts_rows, texts) -> Path:
    if len(ids) == 0:
        raise ConversionError(f"{name}: no samples found in the input file")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    annotations = out_dir / "annotations.jsonl"
    write_annotation_file(annotations, ids, counts_rows, num_classes=len(class_names))
    write_dataset_meta(out_dir / "dataset_meta.json", name, class_names)
    if texts is not None:
        write_texts_file(out_dir / "texts.jsonl", ids, texts)
    return annotations


CONVERTERS = {
    "chaosnli": convert_chaosnli,
    "popquorn": convert_popquorn,
    "cifar10h": convert_cifar10h,
}


def convert_annotations(source: str, input_path, out_dir, **kwargs) -> Path:
    """Dispatch to the converter for a known source dataset identifier."""
    if source not in CONVERTERS:
        raise ConversionError(f"unknown source {source!r}; expected one of {sorted(CONVERTERS)}")
    return CONVERTERS[source](input_path, out_dir, **kwargs)
