"""Frame classifier (linear or one tanh hidden layer) with a hand-written backward pass.

Each frame is classified independently from its own features stacked with
those of ``context`` neighbours on either side (zero past the sequence
ends); ``context=0`` sees the frame alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..types import DomainError

MODES = ("linear", "hidden")


@dataclass
class ToyModel:
    mode: str
    W2: np.ndarray
    b2: np.ndarray
    W1: np.ndarray | None = None
    b1: np.ndarray | None = None
    context: int = 0

    def __post_init__(self):
        if self.context < 0:
            raise DomainError("context must be >= 0")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "hidden":
            if self.W1 is None or self.b1 is None:
                raise DomainError("hidden mode needs W1 and b1")
            if self.W1.shape[0] < 1:
                raise DomainError("hidden_dim must be >= 1")
            if self.W2.shape[1] != self.W1.shape[0] or self.b1.shape != (self.W1.shape[0],):
                raise DomainError("hidden-layer shapes are inconsistent")
        elif self.W1 is not None or self.b1 is not None:
            raise DomainError("linear mode takes no hidden layer")
        if self.b2.shape != (self.W2.shape[0],):
            raise DomainError("output bias shape does not match W2")
        for name, p in self.params().items():
            if not np.all(np.isfinite(p)):
                raise DomainError(f"parameter {name} is not finite")

    @classmethod
    def init(cls, rng: np.random.Generator, mode: str, feature_dim: int, num_classes: int,
             hidden_dim: int = 32, scale: float = 1.0, context: int = 0) -> "ToyModel":
        """Gaussian weights with std ``scale / sqrt(fan_in)``, zero biases."""
        feature_dim *= 2 * context + 1
        if mode == "hidden":
            if hidden_dim < 1:
                raise DomainError("hidden_dim must be >= 1")
            W1 = rng.standard_normal((hidden_dim, feature_dim)) * (scale / np.sqrt(feature_dim))
            W2 = rng.standard_normal((num_classes, hidden_dim)) * (scale / np.sqrt(hidden_dim))
            return cls(mode, W2, np.zeros(num_classes), W1, np.zeros(hidden_dim), context)
        W2 = rng.standard_normal((num_classes, feature_dim)) * (scale / np.sqrt(feature_dim))
        return cls(mode, W2, np.zeros(num_classes), context=context)

    @property
    def input_dim(self) -> int:
        return (self.W1 if self.mode == "hidden" else self.W2).shape[1]

    @property
    def feature_dim(self) -> int:
        """Per-frame feature size F before context stacking."""
        return self.input_dim // (2 * self.context + 1)

    @property
    def num_classes(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict:
        if self.mode == "hidden":
            return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}
        return {"W2": self.W2, "b2": self.b2}

    def copy(self) -> "ToyModel":
        return ToyModel(self.mode, context=self.context, **{k: v.copy() for k, v in self.params().items()})


@dataclass
class ForwardCache:
    X: np.ndarray  # context-stacked inputs, (input_dim, T)
    hidden: np.ndarray | None = field(default=None, repr=False)


def stack_context(X, context: int) -> np.ndarray:
    """(F, T) -> ((2*context+1)*F, T); block ``k`` holds frame ``t + k - context``."""
    X = np.asarray(X, dtype=np.float64)
    if context == 0:
        return X
    F, T = X.shape
    padded = np.zeros((F, T + 2 * context))
    padded[:, context:context + T] = X
    return np.vstack([padded[:, k:k + T] for k in range(2 * context + 1)])


def forward(model: ToyModel, X, return_cache: bool = False):
    """Logits ``U`` of shape (K+1, T) for one sequence ``X`` of shape (F, T)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.feature_dim:
        raise DomainError(f"expected features of shape ({model.feature_dim}, T), got {X.shape}")
    return forward_stacked(model, stack_context(X, model.context), return_cache)


def forward_stacked(model: ToyModel, X, return_cache: bool = False):
    """Like :func:`forward` but on already context-stacked columns."""
    if X.ndim != 2 or X.shape[0] != model.input_dim:
        raise DomainError(f"expected stacked inputs of shape ({model.input_dim}, T), got {X.shape}")
    if model.mode == "hidden":
        h = np.tanh(model.W1 @ X + model.b1[:, None])
        U = model.W2 @ h + model.b2[:, None]
    else:
        h = None
        U = model.W2 @ X + model.b2[:, None]
    if return_cache:
        return U, ForwardCache(X, h)
    return U


def backward(model: ToyModel, cache: ForwardCache, dU) -> dict:
    """Parameter gradients given ``dL/dU`` for the frames in ``cache``."""
    dU = np.asarray(dU, dtype=np.float64)
    X = cache.X
    if dU.shape != (model.num_classes, X.shape[1]):
        raise DomainError(f"dL/dU has shape {dU.shape}, expected {(model.num_classes, X.shape[1])}")
    if model.mode == "linear":
        return {"W2": dU @ X.T, "b2": dU.sum(axis=1)}
    h = cache.hidden
    dpre = (model.W2.T @ dU) * (1.0 - h * h)
    return {
        "W1": dpre @ X.T,
        "b1": dpre.sum(axis=1),
        "W2": dU @ h.T,
        "b2": dU.sum(axis=1),
    }
