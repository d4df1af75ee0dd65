# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations.

Twin of softalign._kernels_py: identical names, signatures and semantics.
The win over numpy comes from fusing elementwise/row-wise passes into
single loops (no temporaries); matrix products stay in BLAS either way.
"""

from libc.math cimport exp, log, sqrt, tanh

import numpy as np

NAME = "ext"

cdef double GELU_K = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715

KL_EPS = 1e-12
cdef double KL_EPS_C = 1e-12


def _tanh_inner(arr):
    """numpy's SIMD tanh of the GELU cubic; the loops fuse everything else."""
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.reshape(-1)
    cdef double[::1] yv = out.reshape(-1)
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double xi
    for i in range(n):
        xi = xv[i]
        yv[i] = GELU_K * (xi + GELU_A * xi * xi * xi)
    return np.tanh(out)


def gelu(x):
    """Elementwise tanh-approximation GELU."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    t_arr = _tanh_inner(arr)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.reshape(-1)
    cdef double[::1] tv = t_arr.reshape(-1)
    cdef double[::1] yv = out.reshape(-1)
    cdef Py_ssize_t i, n = xv.shape[0]
    for i in range(n):
        yv[i] = 0.5 * xv[i] * (1.0 + tv[i])
    return out


def gelu_grad(x):
    """Elementwise derivative of the tanh-approximation GELU."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    t_arr = _tanh_inner(arr)
    out = np.empty_like(arr)
    cdef double[::1] xv = arr.reshape(-1)
    cdef double[::1] tv = t_arr.reshape(-1)
    cdef double[::1] yv = out.reshape(-1)
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double xi, t, dinner
    for i in range(n):
        xi = xv[i]
        t = tv[i]
        dinner = GELU_K * (1.0 + 3.0 * GELU_A * xi * xi)
        yv[i] = 0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * dinner
    return out


def softmax(logits):
    """Row-wise max-subtracted softmax; accepts a vector or a matrix."""
    arr = np.ascontiguousarray(logits, dtype=np.float64)
    squeeze = arr.ndim == 1
    mat = np.atleast_2d(arr)
    out = np.empty_like(mat)
    cdef double[:, ::1] z = mat
    cdef double[:, ::1] p = out
    cdef Py_ssize_t r, i, n = z.shape[0], c = z.shape[1]
    cdef double mx, s
    for r in range(n):
        mx = z[r, 0]
        for i in range(1, c):
            if z[r, i] > mx:
                mx = z[r, i]
        s = 0.0
        for i in range(c):
            p[r, i] = exp(z[r, i] - mx)
            s += p[r, i]
        for i in range(c):
            p[r, i] /= s
    return out[0] if squeeze else out


def softmax_xent(logits, targets):
    """Fused softmax + cross-entropy against distribution targets.

    Returns ``(mean_loss, probs, dlogits)`` where ``dlogits`` is the
    gradient of the mean loss with respect to the logits, i.e.
    ``(probs - targets) / batch``. Each target row must sum to 1.
    """
    zmat = np.ascontiguousarray(logits, dtype=np.float64)
    tmat = np.ascontiguousarray(targets, dtype=np.float64)
    if zmat.shape != tmat.shape:
        raise ValueError(f"logits shape {zmat.shape} != targets shape {tmat.shape}")
    probs = np.empty_like(zmat)
    dlogits = np.empty_like(zmat)
    cdef double[:, ::1] z = zmat
    cdef double[:, ::1] t = tmat
    cdef double[:, ::1] p = probs
    cdef double[:, ::1] d = dlogits
    cdef Py_ssize_t r, i, n = z.shape[0], c = z.shape[1]
    cdef double mx, s, lse, dot, total = 0.0, inv_n = 1.0 / n
    for r in range(n):
        mx = z[r, 0]
        for i in range(1, c):
            if z[r, i] > mx:
                mx = z[r, i]
        s = 0.0
        for i in range(c):
            s += exp(z[r, i] - mx)
        lse = log(s)
        dot = 0.0
        for i in range(c):
            p[r, i] = exp(z[r, i] - mx - lse)
            dot += t[r, i] * (z[r, i] - mx)
            d[r, i] = (p[r, i] - t[r, i]) * inv_n
        total += lse - dot
    return total * inv_n, probs, dlogits


def kl_rows(p, q):
    """Row-wise KL(p || q), natural log, zero p-entries contribute 0."""
    pmat = np.ascontiguousarray(p, dtype=np.float64)
    qmat = np.ascontiguousarray(q, dtype=np.float64)
    if pmat.shape != qmat.shape:
        raise ValueError(f"p shape {pmat.shape} != q shape {qmat.shape}")
    out = np.empty(pmat.shape[0], dtype=np.float64)
    cdef double[:, ::1] pv = pmat
    cdef double[:, ::1] qv = qmat
    cdef double[::1] ov = out
    cdef Py_ssize_t r, i, n = pv.shape[0], c = pv.shape[1]
    cdef double acc, qi
    for r in range(n):
        acc = 0.0
        for i in range(c):
            if pv[r, i] > 0.0:
                qi = qv[r, i]
                if qi < KL_EPS_C:
                    qi = KL_EPS_C
                acc += pv[r, i] * log(pv[r, i] / qi)
        ov[r] = acc
    return out


def entropy_rows(p):
    """Row-wise Shannon entropy in nats, with 0*log(0) = 0."""
    pmat = np.ascontiguousarray(p, dtype=np.float64)
    out = np.empty(pmat.shape[0], dtype=np.float64)
    cdef double[:, ::1] pv = pmat
    cdef double[::1] ov = out
    cdef Py_ssize_t r, i, n = pv.shape[0], c = pv.shape[1]
    cdef double acc
    for r in range(n):
        acc = 0.0
        for i in range(c):
            if pv[r, i] > 0.0:
                acc += pv[r, i] * log(pv[r, i])
        ov[r] = -acc
    return out


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps, weight_decay):
    """One fused Adam step with coupled L2 decay, in place on param/m/v.

    ``t`` is the post-increment step count (1 on the first call) and drives
    the bias corrections.
    """
    cdef double[::1] pv = param.reshape(-1)
    cdef double[::1] gv = np.ascontiguousarray(grad, dtype=np.float64).reshape(-1)
    cdef double[::1] mv = m.reshape(-1)
    cdef double[::1] vv = v.reshape(-1)
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double lr_c = lr, b1 = beta1, b2 = beta2, eps_c = eps, wd = weight_decay
    cdef double c1 = 1.0 - b1 ** t
    cdef double c2 = 1.0 - b2 ** t
    cdef double g, mhat, vhat
    for i in range(n):
        g = gv[i] + wd * pv[i]
        mv[i] = b1 * mv[i] + (1.0 - b1) * g
        vv[i] = b2 * vv[i] + (1.0 - b2) * g * g
        mhat = mv[i] / c1
        vhat = vv[i] / c2
        pv[i] -= lr_c * mhat / (sqrt(vhat) + eps_c)
