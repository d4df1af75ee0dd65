"""Frozen embedding backbones.

Every backbone is referenced by an identifier string and declares its
output dimension up front, so emitted files can be validated against the
published width:

* ``debug-<dim>``: content-hash embeddings, fully deterministic and
  dependency-free; for pipeline tests and smoke runs.
* ``dinov2-small`` (and siblings): vision backbones loaded through
  torch.hub in eval mode; requires the ``vision`` extra and network or a
  populated torch hub cache.
* ``api:<model>``: remote text-embedding models served over an
  OpenAI-compatible endpoint (see api_client).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .writer import ConversionError

# published output widths
DINOV2_DIMS = {
    "dinov2-small": 384,
    "dinov2-base": 768,
    "dinov2-large": 1024,
}
API_MODEL_DIMS = {
    "text-embedding-3-large": 3072,
    "text-embedding-3-small": 1536,
}
_DINOV2_HUB_NAMES = {
    "dinov2-small": "dinov2_vits14",
    "dinov2-base": "dinov2_vitb14",
    "dinov2-large": "dinov2_vitl14",
}


def backbone_dim(backbone: str) -> int:
    """Declared output width of a backbone identifier."""
    if backbone.startswith("debug-"):
        try:
            return int(backbone.split("-", 1)[1])
        except ValueError as exc:
            raise ConversionError(f"bad debug backbone {backbone!r}") from exc
    if backbone in DINOV2_DIMS:
        return DINOV2_DIMS[backbone]
    if backbone.startswith("api:"):
        model = backbone.split(":", 1)[1]
        if model not in API_MODEL_DIMS:
            raise ConversionError(
                f"unknown API embedding model {model!r}; expected one of {sorted(API_MODEL_DIMS)}"
            )
        return API_MODEL_DIMS[model]
    raise ConversionError(f"unknown backbone {backbone!r}")


def debug_embed_bytes(payloads, dim: int) -> np.ndarray:
    """Deterministic unit-norm vectors seeded by each payload's SHA-256."""
    out = np.empty((len(payloads), dim), dtype=np.float64)
    for i, payload in enumerate(payloads):
        digest = hashlib.sha256(payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vec = rng.normal(size=dim)
        out[i] = vec / np.linalg.norm(vec)
    return out.astype(np.float32).astype(np.float64)


def debug_embed_texts(texts, dim: int) -> np.ndarray:
    return debug_embed_bytes([t.encode("utf-8") for t in texts], dim)


def debug_embed_files(paths, dim: int) -> np.ndarray:
    return debug_embed_bytes([Path(p).read_bytes() for p in paths], dim)


class Dinov2Backbone:
    """Frozen DINOv2 image encoder; deterministic in eval mode."""

    def __init__(self, backbone: str, device: str = "cpu"):
        if backbone not in _DINOV2_HUB_NAMES:
            raise ConversionError(f"unknown vision backbone {backbone!r}")
        import torch  # deferred: the vision extra is optional

        self.dim = DINOV2_DIMS[backbone]
        self._torch = torch
        self.model = torch.hub.load("facebookresearch/dinov2", _DINOV2_HUB_NAMES[backbone])
        self.model.eval().to(device)
        self.device = device

    def embed_images(self, paths, batch_size: int = 32) -> np.ndarray:
        from PIL import Image
        from torchvision import transforms

        prep = transforms.Compose(
            [
                transforms.Resize(256),
                transforms.CenterCrop(224),
                transforms.ToTensor(),
                transforms.Normalize(mean=(0.485, 0.456, 0.406), std=(0.229, 0.224, 0.225)),
            ]
        )
        chunks = []
        with self._torch.no_grad():
            for start in range(0, len(paths), batch_size):
                batch = [
                    prep(Image.open(p).convert("RGB")) for p in paths[start : start + batch_size]
                ]
                stacked = self._torch.stack(batch).to(self.device)
                chunks.append(self.model(stacked).cpu().numpy())
        out = np.concatenate(chunks, axis=0).astype(np.float32).astype(np.float64)
        if out.shape[1] != self.dim:
            raise ConversionError(
                f"backbone returned width {out.shape[1]}, published width is {self.dim}"
            )
        return out
