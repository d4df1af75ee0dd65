"""Pure-numpy kernel implementations.

Twin of the compiled ``softalign._kernels`` extension: every function here
has the same name, signature and semantics as its Cython counterpart, and
either module can back the package (see :mod:`softalign.backend`). All
kernels operate in float64.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

# tanh-form GELU constants
_GELU_K = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715

# q is clamped at this floor inside KL so that float underflow of softmax
# outputs cannot produce infinities; exact arithmetic never hits it.
KL_EPS = 1e-12


def gelu(x):
    """Elementwise tanh-approximation GELU."""
    x = np.asarray(x, dtype=np.float64)
    inner = _GELU_K * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_grad(x):
    """Elementwise derivative of the tanh-approximation GELU."""
    x = np.asarray(x, dtype=np.float64)
    inner = _GELU_K * (x + _GELU_A * x * x * x)
    t = np.tanh(inner)
    dinner = _GELU_K * (1.0 + 3.0 * _GELU_A * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner


def softmax(logits):
    """Row-wise max-subtracted softmax; accepts a vector or a matrix."""
    z = np.asarray(logits, dtype=np.float64)
    squeeze = z.ndim == 1
    z = np.atleast_2d(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if squeeze else p


def softmax_xent(logits, targets):
    """Fused softmax + cross-entropy against distribution targets.

    Returns ``(mean_loss, probs, dlogits)`` where ``dlogits`` is the
    gradient of the mean loss with respect to the logits, i.e.
    ``(probs - targets) / batch``. Each target row must sum to 1.
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if z.shape != t.shape:
        raise ValueError(f"logits shape {z.shape} != targets shape {t.shape}")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - (t * shifted).sum(axis=1)
    probs = np.exp(shifted - lse[:, None])
    dlogits = (probs - t) / n
    return float(losses.mean()), probs, dlogits


def kl_rows(p, q):
    """Row-wise KL(p || q), natural log, zero p-entries contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"p shape {p.shape} != q shape {q.shape}")
    qc = np.maximum(q, KL_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p / qc), 0.0)
    return terms.sum(axis=1)


def entropy_rows(p):
    """Row-wise Shannon entropy in nats, with 0*log(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=1)


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """One fused Adam step with coupled L2 decay, in place on param/m/v.

    ``t`` is the post-increment step count (1 on the first call) and drives
    the bias corrections.
    """
    g = grad + weight_decay * param
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
