"""Vocabulary, label and probability-sequence types shared by every module.

Class index 0 of the augmented vocabulary is always the blank; character
``chars[k]`` lives at class index ``k + 1``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BLANK = 0
BLANK_TOKEN = "<blank>"

_SYNTH_POOL = string.ascii_lowercase + string.digits + string.ascii_uppercase


class DomainError(ValueError):
    """Raised when an input violates an operation's preconditions."""


@dataclass(frozen=True)
class Vocabulary:
    chars: tuple[str, ...]
    blank_index: int = BLANK

    def __post_init__(self):
        chars = tuple(self.chars)
        object.__setattr__(self, "chars", chars)
        if len(chars) < 1:
            raise DomainError("vocabulary needs at least one character")
        if len(set(chars)) != len(chars):
            raise DomainError("vocabulary characters must be distinct")
        for c in chars:
            if len(c) != 1 or c.isspace():
                raise DomainError(f"invalid vocabulary symbol {c!r}")
        if self.blank_index != BLANK:
            raise DomainError("blank must sit at class index 0")
        object.__setattr__(self, "_index", {c: i + 1 for i, c in enumerate(chars)})

    @property
    def K(self) -> int:
        return len(self.chars)

    @property
    def num_classes(self) -> int:
        return len(self.chars) + 1

    @classmethod
    def synthetic(cls, K: int) -> "Vocabulary":
        """A K-character vocabulary of printable symbols (letters first)."""
        if K < 1:
            raise DomainError("vocab size must be >= 1")
        pool = list(_SYNTH_POOL)
        # past the ASCII pool fall back to CJK code points
        pool.extend(chr(0x4E00 + i) for i in range(max(0, K - len(pool))))
        return cls(tuple(pool[:K]))

    def encode(self, text: str) -> "LabelSequence":
        try:
            return LabelSequence(tuple(self._index[c] for c in text), self)
        except KeyError as exc:
            raise DomainError(f"character {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if not 1 <= i <= self.K:
                raise DomainError(f"class index {i} is not a character of this vocabulary")
            out.append(self.chars[i - 1])
        return "".join(out)

    def token(self, i: int) -> str:
        """Printable token for a class index; blank renders as ``<b>``."""
        return "<b>" if i == BLANK else self.chars[i - 1]

    def save(self, path) -> None:
        lines = [BLANK_TOKEN, *self.chars]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != BLANK_TOKEN:
            raise DomainError(f"{path}: first line must be {BLANK_TOKEN}")
        return cls(tuple(lines[1:]))


@dataclass(frozen=True)
class LabelSequence:
    """Ground-truth label ``y``: class indices into V' that are never blank.

    An empty sequence is allowed only as a decoder output; the loss functions
    reject it.
    """

    ids: tuple[int, ...]
    vocab: Vocabulary | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        for i in ids:
            if i == BLANK:
                raise DomainError("label sequence may not contain blank")
            if i < 0 or (self.vocab is not None and i > self.vocab.K):
                raise DomainError(f"class index {i} out of range")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    @property
    def repeats(self) -> int:
        """Number of adjacent equal-character pairs."""
        return sum(a == b for a, b in zip(self.ids, self.ids[1:]))

    def min_frames(self) -> int:
        """Smallest T for which at least one path collapses to this label."""
        return len(self.ids) + self.repeats

    def text(self, vocab: Vocabulary | None = None) -> str:
        vocab = vocab or self.vocab
        if vocab is None:
            raise DomainError("no vocabulary to render label with")
        return vocab.decode(self.ids)


def as_label(y, vocab: Vocabulary | None = None) -> LabelSequence:
    if isinstance(y, LabelSequence):
        return y
    if isinstance(y, str):
        if vocab is None:
            raise DomainError("string labels need a vocabulary")
        return vocab.encode(y)
    return LabelSequence(tuple(y), vocab)


def augment_label(y, vocab: Vocabulary | None = None) -> np.ndarray:
    """Interleave blanks around ``y``: ``[b, y1, b, y2, ..., yL, b]``."""
    y = as_label(y, vocab)
    if len(y) == 0:
        raise DomainError("cannot augment an empty label")
    if vocab is not None:
        for i in y.ids:
            if not 1 <= i <= vocab.K:
                raise DomainError(f"class index {i} out of range for vocabulary")
    ext = np.full(2 * len(y) + 1, BLANK, dtype=np.int64)
    ext[1::2] = y.ids
    return ext


@dataclass(frozen=True)
class ProbSequence:
    """Column-stochastic (K+1) x T matrix together with its natural log."""

    values: np.ndarray
    log_values: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


def softmax_columns(U) -> ProbSequence:
    """Column-wise softmax of a (K+1) x T logit matrix.

    The log probabilities come straight from ``U - max - logsumexp`` so they
    stay finite even where the linear value underflows to 0.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] < 1 or U.shape[0] < 2:
        raise DomainError(f"logits must be a (K+1) x T matrix with K, T >= 1, got {U.shape}")
    if not np.all(np.isfinite(U)):
        raise DomainError("logits must be finite")
    shifted = U - U.max(axis=0, keepdims=True)
    log_values = shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    values = np.exp(log_values)
    values.flags.writeable = False
    log_values.flags.writeable = False
    return ProbSequence(values, log_values)


Batch = Sequence[tuple[np.ndarray, LabelSequence]]
