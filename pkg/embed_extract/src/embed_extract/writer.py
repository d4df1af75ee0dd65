"""Writers for the dataset file formats consumed by the training toolkit.

Formats (little-endian, defined by the toolkit's data layer):

* Embedding file: magic ``EALN``, u32 version 1, u64 num_samples,
  u32 embedding_dim, then per record ``u16 id length | UTF-8 id |
  embedding_dim * float32``.
* Annotation file: one ``{"id": ..., "counts": [...]}`` JSON object per line.
* Manifest: JSON object with name, num_classes, class_names,
  embedding_dim, embeddings_path, annotations_path.

Writers are deterministic: the same inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

EMBEDDING_MAGIC = b"EALN"
EMBEDDING_FORMAT_VERSION = 1


class ConversionError(ValueError):
    """Upstream data violates its documented schema or an output invariant."""


def write_embedding_file(path, ids, embeddings) -> None:
    emb = np.asarray(embeddings, dtype=np.float32)
    if emb.ndim != 2 or emb.shape[0] != len(ids):
        raise ConversionError("embeddings must be a (num_ids, dim) matrix")
    with Path(path).open("wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IQI", EMBEDDING_FORMAT_VERSION, emb.shape[0], emb.shape[1]))
        for sample_id, row in zip(ids, emb):
            raw = str(sample_id).encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def write_annotation_file(path, ids, counts_rows, num_classes: int) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample_id, counts in zip(ids, counts_rows):
            counts = [int(c) for c in counts]
            if len(counts) != num_classes:
                raise ConversionError(
                    f"sample {sample_id!r}: {len(counts)} counts for {num_classes} classes"
                )
            if any(c < 0 for c in counts):
                raise ConversionError(f"sample {sample_id!r}: negative annotation count")
            if sum(counts) == 0:
                raise ConversionError(f"sample {sample_id!r}: annotations sum to zero")
            fh.write(json.dumps({"id": str(sample_id), "counts": counts}) + "\n")


def write_manifest(
    path, name: str, class_names, embedding_dim: int, embeddings_path: str, annotations_path: str
) -> None:
    manifest = {
        "name": name,
        "num_classes": len(class_names),
        "class_names": list(class_names),
        "embedding_dim": int(embedding_dim),
        "embeddings_path": embeddings_path,
        "annotations_path": annotations_path,
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def write_texts_file(path, ids, texts) -> None:
    """Sidecar of raw texts for the embedding stage: {"id", "text"} per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample_id, text in zip(ids, texts):
            fh.write(json.dumps({"id": str(sample_id), "text": text}) + "\n")


def read_texts_file(path):
    ids, texts = [], []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            ids.append(str(obj["id"]))
            texts.append(obj["text"])
    return ids, texts


def write_dataset_meta(path, name: str, class_names) -> None:
    """Class metadata handoff between the convert and extract stages."""
    Path(path).write_text(
        json.dumps({"name": name, "class_names": list(class_names)}, indent=2) + "\n",
        encoding="utf-8",
    )


def read_dataset_meta(path) -> dict:
    meta = json.loads(Path(path).read_text(encoding="utf-8"))
    if "name" not in meta or "class_names" not in meta:
        raise ConversionError(f"{path}: expected keys 'name' and 'class_names'")
    return meta
