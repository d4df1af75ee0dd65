#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy twin.

Times each kernel on training-shaped inputs plus one full training epoch
per backend, and prints a speedup table. Run from the repo root:

    python3 benchmarks/bench_backends.py [--batch 64] [--hidden 256] [--repeats 200]
"""

import argparse
import time

import numpy as np

from softalign.backend import available_backends


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(kern, batch, hidden, classes):
    rng = np.random.default_rng(0)
    pre = rng.normal(size=(batch, hidden))
    logits = rng.normal(size=(batch, classes))
    targets = rng.random((batch, classes))
    targets /= targets.sum(axis=1, keepdims=True)
    probs = rng.random((batch, classes))
    probs /= probs.sum(axis=1, keepdims=True)
    param = rng.normal(size=hidden * classes)
    grad = rng.normal(size=hidden * classes)
    m = np.zeros_like(param)
    v = np.zeros_like(param)
    return {
        "gelu": lambda: kern.gelu(pre),
        "gelu_grad": lambda: kern.gelu_grad(pre),
        "softmax_xent": lambda: kern.softmax_xent(logits, targets),
        "kl_rows": lambda: kern.kl_rows(targets, probs),
        "entropy_rows": lambda: kern.entropy_rows(targets),
        "adam_update": lambda: kern.adam_update(
            param, grad, m, v, 1, 1e-3, 0.9, 0.999, 1e-8, 1e-4
        ),
    }


def epoch_case(backend_name, batch, hidden):
    """One full training epoch on a small synthetic problem."""
    import importlib
    import os

    os.environ["SOFTALIGN_BACKEND"] = backend_name
    import softalign.backend

    importlib.reload(softalign.backend)
    import softalign.nn_core
    import softalign.optim

    importlib.reload(softalign.nn_core)
    importlib.reload(softalign.optim)
    from softalign.nn_core import init_params, loss_and_grad
    from softalign.optim import adam_step, init_adam

    rng = np.random.default_rng(1)
    n, d, c = 2048, 32, 5
    x = rng.normal(size=(n, d))
    t = rng.random((n, c))
    t /= t.sum(axis=1, keepdims=True)
    params = init_params(0, d, hidden, c)
    adam = init_adam(params, lr=1e-3, weight_decay=1e-4)

    def run():
        nonlocal adam, params
        for start in range(0, n, batch):
            _, grads = loss_and_grad(
                params, x[start : start + batch], t[start : start + batch],
                dropout_rate=0.1, training=True, rng=rng,
            )
            adam, params = adam_step(adam, params, grads)

    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--hidden", type=int, default=256)
    parser.add_argument("--classes", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    backends = available_backends()
    if "ext" not in backends:
        print("compiled extension not built; benchmarking the numpy twin alone")

    rows = []
    names = list(kernel_cases(backends["python"], args.batch, args.hidden, args.classes))
    timings = {}
    for backend_name, kern in backends.items():
        cases = kernel_cases(kern, args.batch, args.hidden, args.classes)
        for case_name, fn in cases.items():
            timings[(backend_name, case_name)] = best_of(fn, args.repeats)

    for backend_name in backends:
        timings[(backend_name, "train_epoch")] = best_of(
            epoch_case(backend_name, args.batch, args.hidden), max(3, args.repeats // 40)
        )
    names.append("train_epoch")

    print(f"\nbatch={args.batch} hidden={args.hidden} classes={args.classes} (best of {args.repeats})")
    header = f"{'kernel':<14} {'python (us)':>12} {'ext (us)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for case_name in names:
        py_t = timings[("python", case_name)] * 1e6
        if ("ext", case_name) in timings:
            ext_t = timings[("ext", case_name)] * 1e6
            print(f"{case_name:<14} {py_t:12.1f} {ext_t:12.1f} {py_t / ext_t:8.2f}x")
        else:
            print(f"{case_name:<14} {py_t:12.1f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
