"""Micro-benchmark of the CTC path against the full distillation-CTC loss."""
from __future__ import annotations

import os
import platform
import sys
import time

import numba
import numpy as np

from .ctc import ctc_loss_and_grad_batch
from .losses import DctcConfig, batch_loss, dctc_loss
from .types import LabelSequence, Vocabulary


def machine_info() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "cpu_count": os.cpu_count(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "numba": numba.__version__,
    }


def synthetic_batch(K: int, T: int, L: int, batch: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(batch):
        U = rng.normal(size=(K + 1, T))
        y = rng.integers(1, K + 1, size=L)
        # avoid adjacent repeats so every item is feasible for T >= L
        for j in range(1, L):
            while y[j] == y[j - 1] and K > 1:
                y[j] = rng.integers(1, K + 1)
        items.append((U, LabelSequence(tuple(int(c) for c in y))))
    return items


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(K: int = 100, T: int = 64, L: int = 12, batch: int = 32, repeats: int = 5,
              seed: int = 0, lam: float = DctcConfig().lam) -> dict:
    """Best-of-``repeats`` wall time per sample for both losses and their ratio."""
    vocab = Vocabulary.synthetic(K)
    items = synthetic_batch(K, T, L, batch, seed)
    cfg = DctcConfig(lam)

    def dctc_fn(U, y, v=None):
        return dctc_loss(U, y, v, cfg)

    # warm the JIT outside the timed region
    ctc_loss_and_grad_batch(items[:1], vocab, threads=1)
    batch_loss(dctc_fn, items[:1], vocab, threads=1)

    t_ctc = _best_of(lambda: ctc_loss_and_grad_batch(items, vocab, threads=1), repeats)
    t_dctc = _best_of(lambda: batch_loss(dctc_fn, items, vocab, threads=1), repeats)
    return {
        "config": {"K": K, "T": T, "L": L, "batch": batch, "repeats": repeats, "seed": seed, "lambda": lam},
        "ctc_us_per_sample": 1e6 * t_ctc / batch,
        "dctc_us_per_sample": 1e6 * t_dctc / batch,
        "dctc_over_ctc": t_dctc / t_ctc,
        # greedy decoding of model logits never touches the training loss
        "inference_path": "shared: forward + greedy decode, independent of loss kind",
        "machine": machine_info(),
    }
