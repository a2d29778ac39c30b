"""CTC, distillation-CTC and focal-CTC losses with gradients w.r.t. the logits.

Every loss returns a :class:`LossOutput` whose ``grad_u`` is the total
derivative of ``loss.total`` w.r.t. ``U``. In the distillation loss the
latent alignment is treated as a constant target (stop-gradient).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alignment import LatentAlignment, estimate_map_alignment
from .ctc import AlignmentLattice, ctc_gradient, lattice_for, map_items
from .types import DomainError, ProbSequence, Vocabulary, as_label, softmax_columns

DEFAULT_LAMBDA = 0.025


@dataclass(frozen=True)
class DctcConfig:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be a finite non-negative number, got {self.lam}")


@dataclass(frozen=True)
class FocalCtcConfig:
    alpha_f: float = 1.0
    gamma_f: float = 2.0

    def __post_init__(self):
        if self.alpha_f < 0 or self.gamma_f < 0:
            raise DomainError("focal weight and exponent must be non-negative")


@dataclass(frozen=True)
class LossValue:
    ctc: float
    distill: float
    total: float


@dataclass
class LossOutput:
    loss: LossValue
    grad_u: np.ndarray | None
    alignment: LatentAlignment | None = None
    feasible: bool = True
    P: ProbSequence | None = field(default=None, repr=False)
    lattice: AlignmentLattice | None = field(default=None, repr=False)


def _infeasible(P, lattice) -> LossOutput:
    return LossOutput(LossValue(math.inf, math.nan, math.inf), None, None, False, P, lattice)


def distill_loss(P: ProbSequence, z) -> tuple[float, np.ndarray]:
    """Frame-wise cross-entropy against the hard path ``z``.

    Returns ``(-sum_t logP(z_t, t), P - onehot(z))``; the gradient is w.r.t.
    the logits.
    """
    ids = z.as_array() if isinstance(z, LatentAlignment) else np.asarray(z, dtype=np.int64)
    if ids.shape != (P.T,):
        raise DomainError(f"alignment length {ids.shape} does not match T={P.T}")
    if ids.min() < 0 or ids.max() >= P.num_classes:
        raise DomainError("alignment references a class outside P")
    cols = np.arange(P.T)
    loss = -float(P.log_values[ids, cols].sum())
    grad = np.array(P.values)
    grad[ids, cols] -= 1.0
    return loss, grad


def ctc_loss_output(U, y, vocab: Vocabulary | None = None) -> LossOutput:
    """Plain CTC in the same output format as the other losses.

    The MAP alignment is still estimated (as a diagnostic) and the distill
    component is reported, but neither enters ``total`` or ``grad_u``.
    """
    P = softmax_columns(U)
    lat = lattice_for(P, as_label(y, vocab), vocab)
    if not lat.feasible:
        return _infeasible(P, lat)
    G = ctc_gradient(P, lat)
    z = estimate_map_alignment(P, lat)
    d, _ = distill_loss(P, z)
    ctc = -lat.log_prob
    return LossOutput(LossValue(ctc, d, ctc), G, z, True, P, lat)


def dctc_loss(U, y, vocab: Vocabulary | None = None, cfg: DctcConfig = DctcConfig()) -> LossOutput:
    """CTC plus ``lam`` times frame-wise distillation onto the MAP alignment.

    The alignment comes from the (detached) CTC gradient of the same
    logits and is held constant when differentiating, so
    ``grad_u = G + lam * (P - onehot(z*))``.
    """
    P = softmax_columns(U)
    lat = lattice_for(P, as_label(y, vocab), vocab)
    if not lat.feasible:
        return _infeasible(P, lat)
    G = ctc_gradient(P, lat)
    z = estimate_map_alignment(P, lat)
    d, dgrad = distill_loss(P, z)
    ctc = -lat.log_prob
    if cfg.lam == 0:
        # skip the zero-weighted term so lam=0 is bit-identical to plain CTC
        return LossOutput(LossValue(ctc, d, ctc), G, z, True, P, lat)
    total = ctc + cfg.lam * d
    return LossOutput(LossValue(ctc, d, total), G + cfg.lam * dgrad, z, True, P, lat)


def focal_ctc_loss(U, y, vocab: Vocabulary | None = None, cfg: FocalCtcConfig = FocalCtcConfig()) -> LossOutput:
    """Sequence-level focal CTC: ``alpha_f * (1 - p)**gamma_f * L`` with ``p = exp(-L)``."""
    P = softmax_columns(U)
    lat = lattice_for(P, as_label(y, vocab), vocab)
    if not lat.feasible:
        return _infeasible(P, lat)
    G = ctc_gradient(P, lat)
    z = estimate_map_alignment(P, lat)
    d, _ = distill_loss(P, z)
    L = -lat.log_prob
    a, g = cfg.alpha_f, cfg.gamma_f
    one_minus_p = -math.expm1(-L)
    p = 1.0 - one_minus_p
    total = a * one_minus_p**g * L
    # d total / dL = a * [(1-p)^g + g * p * L * (1-p)^(g-1)]
    if g == 0:
        scale = a
    elif one_minus_p == 0.0:
        scale = 0.0
    else:
        scale = a * (one_minus_p**g + g * p * L * one_minus_p ** (g - 1))
    return LossOutput(LossValue(L, d, total), scale * G, z, True, P, lat)


LOSS_KINDS = ("ctc", "dctc", "focal_ctc")


def make_loss(kind: str, lam: float = DEFAULT_LAMBDA, alpha_f: float = 1.0, gamma_f: float = 2.0):
    """Return ``fn(U, y, vocab) -> LossOutput`` for a loss kind name."""
    kind = kind.replace("-", "_")
    if kind == "ctc":
        return ctc_loss_output
    if kind == "dctc":
        cfg = DctcConfig(lam)
        return lambda U, y, vocab=None: dctc_loss(U, y, vocab, cfg)
    if kind == "focal_ctc":
        fcfg = FocalCtcConfig(alpha_f, gamma_f)
        return lambda U, y, vocab=None: focal_ctc_loss(U, y, vocab, fcfg)
    raise DomainError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


@dataclass
class BatchLoss:
    ctc: float
    distill: float
    total: float
    grads: list
    outputs: list
    n_feasible: int
    n_skipped: int


def batch_loss(loss_fn, batch, vocab: Vocabulary | None = None, threads: int | None = None) -> BatchLoss:
    """Mean of a per-sample loss over the feasible items of a ragged batch.

    Per-item gradients are scaled by ``1 / n_feasible``; skipped items get
    ``None``.
    """
    if len(batch) == 0:
        raise DomainError("empty batch")
    outs = map_items(lambda item: loss_fn(item[0], item[1], vocab), list(batch), threads)
    ok = [o for o in outs if o.feasible]
    if not ok:
        raise DomainError("every item in the batch is infeasible")
    n = len(ok)
    ctc = sum(o.loss.ctc for o in ok) / n
    distill = sum(o.loss.distill for o in ok) / n
    total = sum(o.loss.total for o in ok) / n
    grads = [o.grad_u / n if o.feasible else None for o in outs]
    return BatchLoss(ctc, distill, total, grads, outs, n, len(outs) - n)
