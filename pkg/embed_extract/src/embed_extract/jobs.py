"""Extraction jobs: compute embeddings and assemble a loadable dataset.

A job consumes a converted source directory (annotations.jsonl,
dataset_meta.json and, for text sources, texts.jsonl; for vision sources
an image directory keyed by sample id) and writes embeddings.bin plus a
manifest.json pointing at both files, in the exact formats the training
toolkit loads.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

from .api_client import EmbeddingClient
from .backbones import Dinov2Backbone, backbone_dim, debug_embed_files, debug_embed_texts
from .writer import (
    ConversionError,
    read_dataset_meta,
    read_texts_file,
    write_embedding_file,
    write_manifest,
)


@dataclass(frozen=True)
class ExtractionJob:
    """One embedding-extraction run.

    ``source_dir`` holds the converted annotations; ``image_dir`` supplies
    vision inputs (files named ``<sample id>.<ext>``); ``credentials_env``
    names the environment variable carrying the API key for remote
    backbones.
    """

    source_dir: str
    backbone: str
    output_dir: str
    batch_size: int = 64
    image_dir: str | None = None
    endpoint: str | None = None
    credentials_env: str = "OPENAI_API_KEY"
    cache_dir: str | None = None


def _annotation_ids(path) -> list:
    ids = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                ids.append(str(json.loads(line)["id"]))
    return ids


def _image_paths(image_dir, ids) -> list:
    image_dir = Path(image_dir)
    by_stem = {}
    for p in sorted(image_dir.iterdir()):
        if p.is_file():
            by_stem.setdefault(p.stem, p)
    missing = [i for i in ids if i not in by_stem]
    if missing:
        raise ConversionError(f"no image file for sample ids {missing[:5]} in {image_dir}")
    return [by_stem[i] for i in ids]


def extract_embeddings(job: ExtractionJob) -> Path:
    """Run the job; returns the path of the written manifest."""
    source = Path(job.source_dir)
    annotations = source / "annotations.jsonl"
    if not annotations.exists():
        raise ConversionError(f"{source}: annotations.jsonl not found (run convert first)")
    meta = read_dataset_meta(source / "dataset_meta.json")
    ids = _annotation_ids(annotations)
    dim = backbone_dim(job.backbone)

    if job.backbone.startswith("api:"):
        texts_path = source / "texts.jsonl"
        if not texts_path.exists():
            raise ConversionError(f"{source}: texts.jsonl required for a text backbone")
        text_ids, texts = read_texts_file(texts_path)
        if text_ids != ids:
            raise ConversionError("texts.jsonl ids disagree with annotations.jsonl")
        model = job.backbone.split(":", 1)[1]
        kwargs = {} if job.endpoint is None else {"endpoint": job.endpoint}
        with EmbeddingClient(
            model,
            api_key_env=job.credentials_env,
            batch_size=job.batch_size,
            cache_dir=job.cache_dir,
            **kwargs,
        ) as client:
            embeddings = client.embed_texts(texts)
    elif job.backbone.startswith("debug-"):
        if job.image_dir is not None:
            embeddings = debug_embed_files(_image_paths(job.image_dir, ids), dim)
        else:
            texts_path = source / "texts.jsonl"
            if not texts_path.exists():
                raise ConversionError(
                    f"{source}: debug backbone needs texts.jsonl or an --image-dir"
                )
            text_ids, texts = read_texts_file(texts_path)
            if text_ids != ids:
                raise ConversionError("texts.jsonl ids disagree with annotations.jsonl")
            embeddings = debug_embed_texts(texts, dim)
    else:
        if job.image_dir is None:
            raise ConversionError(f"vision backbone {job.backbone!r} needs an image directory")
        model = Dinov2Backbone(job.backbone)
        embeddings = model.embed_images(_image_paths(job.image_dir, ids), job.batch_size)

    if embeddings.shape != (len(ids), dim):
        raise ConversionError(
            f"embedding matrix {embeddings.shape} does not match "
            f"{len(ids)} samples x published width {dim}"
        )

    out = Path(job.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embedding_file(out / "embeddings.bin", ids, embeddings)
    if (out / "annotations.jsonl").resolve() != annotations.resolve():
        shutil.copyfile(annotations, out / "annotations.jsonl")
    manifest = out / "manifest.json"
    write_manifest(
        manifest,
        name=meta["name"],
        class_names=meta["class_names"],
        embedding_dim=dim,
        embeddings_path="embeddings.bin",
        annotations_path="annotations.jsonl",
    )
    return manifest
