"""Brute-force references for tests and ``gradcheck``; never used for training.

Everything here works in plain linear-domain probabilities and enumerates
every length-T path, so it shares no code with the dynamic program.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .alignment import LatentAlignment
from .ctc import ctc_loss
from .types import DomainError, ProbSequence, Vocabulary, as_label, softmax_columns

MAX_PATHS = 2_000_000


@dataclass(frozen=True)
class PathEnumeration:
    total_prob: float
    per_timestep_mass: np.ndarray  # (K+1, T): summed prob of valid paths through (c, t)


def _collapse(path):
    return tuple(k for k, _ in itertools.groupby(path) if k != 0)


def enumerate_paths(P: ProbSequence, y, vocab: Vocabulary | None = None) -> PathEnumeration:
    """Sum the probability of every path that collapses to ``y``."""
    y = tuple(as_label(y, vocab).ids)
    C, T = P.values.shape
    if C**T > MAX_PATHS:
        raise DomainError(f"{C}^{T} paths exceeds the enumeration guard of {MAX_PATHS}; use a smaller instance")
    probs = np.asarray(P.values, dtype=np.float64)
    mass = np.zeros((C, T))
    total = 0.0
    cols = range(T)
    for path in itertools.product(range(C), repeat=T):
        if _collapse(path) != y:
            continue
        p = 1.0
        for t in cols:
            p *= probs[path[t], t]
        total += p
        for t in cols:
            mass[path[t], t] += p
    return PathEnumeration(total, mass)


def oracle_map_alignment(enum: PathEnumeration, P: ProbSequence) -> LatentAlignment:
    """Per-frame argmax of posterior / prior, with ties to the lower class."""
    if enum.total_prob <= 0:
        raise DomainError("label is unreachable; posterior undefined")
    ratio = oracle_posterior_ratio(enum, P)
    z = np.argmax(ratio, axis=0)
    return LatentAlignment(tuple(int(c) for c in z), ratio[z, np.arange(ratio.shape[1])])


def oracle_posterior_ratio(enum: PathEnumeration, P: ProbSequence) -> np.ndarray:
    posterior = enum.per_timestep_mass / enum.total_prob
    # classes no valid path visits score 0, which also covers P = 0
    visited = enum.per_timestep_mass > 0
    ratio = np.zeros_like(posterior)
    ratio[visited] = posterior[visited] / np.asarray(P.values)[visited]
    return ratio


def finite_difference_grad(U, y, vocab: Vocabulary | None = None, step: float = 1e-5, loss=None) -> np.ndarray:
    """Central differences of ``loss(U)``, by default the CTC loss of ``softmax(U)``.

    ``loss`` may be any callable mapping a logit matrix to a scalar, which
    lets the same routine check the composed losses.
    """
    if not 1e-7 <= step <= 1e-3:
        raise DomainError("finite-difference step must lie in [1e-7, 1e-3]")
    U = np.array(U, dtype=np.float64)
    if loss is None:
        label = as_label(y, vocab)

        def loss(V):
            return ctc_loss(softmax_columns(V), label, vocab)

    grad = np.zeros_like(U)
    for idx in np.ndindex(*U.shape):
        orig = U[idx]
        U[idx] = orig + step
        up = loss(U)
        U[idx] = orig - step
        down = loss(U)
        U[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad
