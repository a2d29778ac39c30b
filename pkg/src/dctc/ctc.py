"""Log-space CTC forward-backward, loss and gradient w.r.t. the logits.

Both tables include the emission at their own time step, so the occupancy
of augmented position ``i`` at time ``t`` is ``alpha + beta - logP``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .types import (
    BLANK,
    DomainError,
    LabelSequence,
    ProbSequence,
    Vocabulary,
    as_label,
    augment_label,
    softmax_columns,
)

NEG_INF = -np.inf


@njit(cache=True, nogil=True)
def _lae(a, b):
    # two-term logsumexp with -inf as the empty sum
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True, nogil=True)
def _forward_backward(logp, ext):
    S = ext.shape[0]
    C, T = logp.shape
    lp = np.empty((S, T))
    for s in range(S):
        for t in range(T):
            lp[s, t] = logp[ext[s], t]

    alpha = np.full((S, T), -np.inf)
    alpha[0, 0] = lp[0, 0]
    if S > 1:
        alpha[1, 0] = lp[1, 0]
    for t in range(1, T):
        for s in range(S):
            a = alpha[s, t - 1]
            if s >= 1:
                a = _lae(a, alpha[s - 1, t - 1])
            if s >= 2 and ext[s] != 0 and ext[s] != ext[s - 2]:
                a = _lae(a, alpha[s - 2, t - 1])
            if a != -np.inf:
                alpha[s, t] = a + lp[s, t]

    beta = np.full((S, T), -np.inf)
    beta[S - 1, T - 1] = lp[S - 1, T - 1]
    if S > 1:
        beta[S - 2, T - 1] = lp[S - 2, T - 1]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            b = beta[s, t + 1]
            if s + 1 < S:
                b = _lae(b, beta[s + 1, t + 1])
            if s + 2 < S and ext[s + 2] != 0 and ext[s + 2] != ext[s]:
                b = _lae(b, beta[s + 2, t + 1])
            if b != -np.inf:
                beta[s, t] = b + lp[s, t]

    log_prob = alpha[S - 1, T - 1]
    if S > 1:
        log_prob = _lae(log_prob, alpha[S - 2, T - 1])

    gamma = np.full((C, T), -np.inf)
    if log_prob != -np.inf:
        for t in range(T):
            for s in range(S):
                # skipping dead cells also avoids -inf - (-inf) when P is exactly 0
                if alpha[s, t] == -np.inf or beta[s, t] == -np.inf:
                    continue
                v = alpha[s, t] + beta[s, t] - lp[s, t]
                gamma[ext[s], t] = _lae(gamma[ext[s], t], v)
            for c in range(C):
                if gamma[c, t] != -np.inf:
                    gamma[c, t] -= log_prob
    return alpha, beta, log_prob, gamma


@dataclass(frozen=True)
class AlignmentLattice:
    """Forward/backward tables, total log-probability and class posterior.

    ``gamma[c, t]`` is the log posterior of class ``c`` at frame ``t`` given
    the label; classes absent from the augmented label hold ``-inf``.
    Infeasible instances keep ``feasible=False`` and ``log_prob=-inf``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    log_prob: float
    gamma: np.ndarray
    ext: np.ndarray
    feasible: bool

    @property
    def T(self) -> int:
        return self.alpha.shape[1]


def forward_backward(P: ProbSequence, y_aug) -> AlignmentLattice:
    ext = np.ascontiguousarray(y_aug, dtype=np.int64)
    if ext.ndim != 1 or ext.shape[0] % 2 == 0 or ext.shape[0] < 3:
        raise DomainError("augmented label must have odd length 2L+1 >= 3")
    if np.any(ext[0::2] != BLANK) or np.any(ext[1::2] == BLANK):
        raise DomainError("augmented label must interleave blanks")
    if ext.max() >= P.num_classes:
        raise DomainError("augmented label references a class outside P")
    logp = np.ascontiguousarray(P.log_values, dtype=np.float64)
    alpha, beta, log_prob, gamma = _forward_backward(logp, ext)
    log_prob = float(log_prob)
    return AlignmentLattice(alpha, beta, log_prob, gamma, ext, log_prob != NEG_INF)


def lattice_for(P: ProbSequence, y, vocab: Vocabulary | None = None) -> AlignmentLattice:
    return forward_backward(P, augment_label(as_label(y, vocab), vocab))


def ctc_loss(P: ProbSequence, y, vocab: Vocabulary | None = None) -> float:
    """Negative log-likelihood of ``y``; ``inf`` when T is too short."""
    return -lattice_for(P, y, vocab).log_prob


def ctc_gradient(P: ProbSequence, lattice: AlignmentLattice) -> np.ndarray:
    """Gradient of the CTC loss w.r.t. the logits: ``P - exp(gamma)``."""
    if P.values.shape != lattice.gamma.shape:
        raise DomainError(f"shape mismatch: P {P.values.shape} vs lattice {lattice.gamma.shape}")
    if not lattice.feasible:
        raise DomainError("gradient undefined for an infeasible lattice")
    return P.values - np.exp(lattice.gamma)


def num_threads() -> int:
    """Worker cap from DCTC_THREADS; 0 or 1 (or unset) means serial."""
    try:
        n = int(os.environ.get("DCTC_THREADS", "1"))
    except ValueError:
        return 1
    return max(1, n)


def map_items(fn, items, threads: int | None = None) -> list:
    """Apply ``fn`` to each item, optionally on a thread pool; order preserved."""
    threads = num_threads() if threads is None else max(1, threads)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class BatchResult:
    loss: float
    grads: list  # per item; None for skipped items
    n_feasible: int
    n_skipped: int


def ctc_loss_and_grad_batch(batch, vocab: Vocabulary, threads: int | None = None) -> BatchResult:
    """Mean CTC loss over the feasible items of a ragged batch.

    Each returned gradient is already scaled by ``1 / n_feasible`` so the
    list sums to the gradient of the mean loss.
    """
    if len(batch) == 0:
        raise DomainError("empty batch")

    def one(item):
        U, y = item
        P = softmax_columns(U)
        lat = lattice_for(P, as_label(y, vocab), vocab)
        if not lat.feasible:
            return math.inf, None
        return -lat.log_prob, ctc_gradient(P, lat)

    results = map_items(one, list(batch), threads)
    n_ok = sum(g is not None for _, g in results)
    if n_ok == 0:
        raise DomainError("every item in the batch is infeasible")
    total = 0.0
    grads = []
    for loss, g in results:
        if g is None:
            grads.append(None)
            continue
        total += loss
        grads.append(g / n_ok)
    return BatchResult(total / n_ok, grads, n_ok, len(batch) - n_ok)


def is_feasible(y: LabelSequence, T: int) -> bool:
    return len(y) >= 1 and T >= y.min_frames()
