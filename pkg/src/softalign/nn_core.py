"""Two-layer MLP classification head: forward, loss, exact gradients.

The head computes ``logits = W2 @ dropout(gelu(W1 @ x + b1)) + b2`` with
the tanh-form GELU and inverted dropout (activations scaled by 1/(1-rate)
during training, so evaluation needs no rescale). All math runs in
float64; dropout with rate 0 in training mode is bit-equal to evaluation
mode and consumes no randomness.

Checkpoints are float32 little-endian binaries (magic ``EALW``, version,
dims, then W1, b1, W2, b2 flattened row-major) with a JSON sidecar at
``<path>.json`` recording the shapes.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import kernels
from .errors import FormatError, ValidationError

CHECKPOINT_MAGIC = b"EALW"
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(eq=False)
class MlpParams:
    """Weights and biases of the 2-layer head."""

    W1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (C, H)
    b2: np.ndarray  # (C,)

    @property
    def dims(self) -> tuple:
        """(D, H, C)."""
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def fields(self):
        return (("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2))

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            np.zeros_like(self.W1),
            np.zeros_like(self.b1),
            np.zeros_like(self.W2),
            np.zeros_like(self.b2),
        )


@dataclass(eq=False)
class ForwardCache:
    """Intermediate activations kept for the backward pass."""

    x: np.ndarray  # (B, D)
    pre: np.ndarray  # (B, H) pre-activation
    post: np.ndarray  # (B, H) after GELU and dropout
    drop_scale: np.ndarray | None  # (B, H) mask/(1-rate), None outside training
    logits: np.ndarray  # (B, C)


def init_params(seed: int, d: int, h: int, c: int) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if min(d, h, c) < 1:
        raise ValidationError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    lim1 = math.sqrt(6.0 / (d + h))
    w1 = rng.uniform(-lim1, lim1, size=(h, d))
    lim2 = math.sqrt(6.0 / (h + c))
    w2 = rng.uniform(-lim2, lim2, size=(c, h))
    return MlpParams(W1=w1, b1=np.zeros(h), W2=w2, b2=np.zeros(c))


def gelu(x):
    """Tanh-form GELU, elementwise."""
    return kernels.gelu(x)


def softmax(logits):
    """Max-subtracted softmax over the last axis of a vector or matrix."""
    return kernels.softmax(logits)


def _as_batch(x, d: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        squeeze = True
    elif x.ndim == 2:
        squeeze = False
    else:
        raise ValidationError("input must be a vector or a matrix")
    if x.shape[1] != d:
        raise ValidationError(f"input width {x.shape[1]} != embedding_dim {d}")
    return x, squeeze


def forward(
    params: MlpParams,
    x,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
):
    """Run the head on a vector or an (B, D) batch.

    Returns ``(logits, cache)``; the cache feeds the backward pass.
    Dropout is active only when ``training`` and rate > 0, in which case
    an rng must be supplied.
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise ValidationError("dropout_rate must lie in [0, 1)")
    d = params.dims[0]
    xb, squeeze = _as_batch(x, d)
    pre = xb @ params.W1.T + params.b1
    act = kernels.gelu(pre)
    drop_scale = None
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ValidationError("dropout requires an rng in training mode")
        mask = rng.random(act.shape) >= dropout_rate
        drop_scale = mask / (1.0 - dropout_rate)
        post = act * drop_scale
    else:
        post = act
    logits = post @ params.W2.T + params.b2
    cache = ForwardCache(x=xb, pre=pre, post=post, drop_scale=drop_scale, logits=logits)
    return (logits[0] if squeeze else logits), cache


def loss_and_grad(
    params: MlpParams,
    x,
    targets,
    dropout_rate: float = 0.0,
    training: bool = True,
    rng: np.random.Generator | None = None,
):
    """Mean cross-entropy against distribution targets plus exact gradients.

    The gradient of the loss with respect to the logits is
    ``(softmax(logits) - target) / batch``; everything else follows by
    backpropagation through the affine layers, dropout and GELU.
    """
    d = params.dims[0]
    xb, _ = _as_batch(x, d)
    tb = np.asarray(targets, dtype=np.float64)
    if tb.ndim == 1:
        tb = tb[None, :]
    if tb.shape != (xb.shape[0], params.dims[2]):
        raise ValidationError(
            f"targets shape {tb.shape} incompatible with batch {xb.shape[0]} x {params.dims[2]} output"
        )
    _, cache = forward(params, xb, dropout_rate=dropout_rate, training=training, rng=rng)
    loss, _, dlogits = kernels.softmax_xent(cache.logits, tb)

    dw2 = dlogits.T @ cache.post
    db2 = dlogits.sum(axis=0)
    dpost = dlogits @ params.W2
    dact = dpost if cache.drop_scale is None else dpost * cache.drop_scale
    dpre = dact * kernels.gelu_grad(cache.pre)
    dw1 = dpre.T @ cache.x
    db1 = dpre.sum(axis=0)
    return loss, MlpParams(W1=dw1, b1=db1, W2=dw2, b2=db2)


def predict_proba(params: MlpParams, x) -> np.ndarray:
    """Evaluation-mode softmax predictions for a vector or batch."""
    logits, _ = forward(params, x, training=False)
    return kernels.softmax(logits)


def save_params(params: MlpParams, path) -> None:
    """Write a float32 checkpoint plus its JSON shape sidecar."""
    path = Path(path)
    d, h, c = params.dims
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIII", CHECKPOINT_FORMAT_VERSION, d, h, c))
        for _, arr in params.fields():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    sidecar = {
        "format": "mlp-checkpoint",
        "version": CHECKPOINT_FORMAT_VERSION,
        "embedding_dim": d,
        "hidden_width": h,
        "num_classes": c,
        "dtype": "float32",
        "order": ["W1", "b1", "W2", "b2"],
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_params(path) -> MlpParams:
    """Read a checkpoint back into float64 parameters."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 20 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not an MLP checkpoint")
    version, d, h, c = struct.unpack_from("<IIII", data, 4)
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    sizes = [h * d, h, c * h, c]
    if len(data) != 20 + 4 * sum(sizes):
        raise FormatError(f"{path}: checkpoint size does not match dims ({d}, {h}, {c})")
    sidecar_path = Path(str(path) + ".json")
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
        expected = (meta.get("embedding_dim"), meta.get("hidden_width"), meta.get("num_classes"))
        if expected != (d, h, c):
            raise FormatError(f"{path}: sidecar shapes {expected} disagree with header")
    offset = 20
    arrays = []
    for size in sizes:
        arrays.append(
            np.frombuffer(data, dtype="<f4", count=size, offset=offset).astype(np.float64)
        )
        offset += 4 * size
    return MlpParams(
        W1=arrays[0].reshape(h, d),
        b1=arrays[1],
        W2=arrays[2].reshape(c, h),
        b2=arrays[3],
    )
