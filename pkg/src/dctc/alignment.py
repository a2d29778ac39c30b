"""Latent-alignment estimators, greedy CTC decoding and the ACC/AACC metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ctc import AlignmentLattice
from .types import BLANK, DomainError, LabelSequence, ProbSequence, Vocabulary


@dataclass(frozen=True)
class LatentAlignment:
    """A length-T path over V'.

    ``score`` holds the per-frame log score of the chosen class (posterior
    ratio for MAP estimates, log probability for the argmax baseline).
    """

    ids: tuple[int, ...]
    score: np.ndarray | None = None

    def __len__(self):
        return len(self.ids)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ids, dtype=np.int64)


@dataclass(frozen=True)
class MetricReport:
    acc: float
    aacc: float
    n_samples: int
    n_skipped: int = 0


def _first_argmax(scores: np.ndarray) -> np.ndarray:
    # np.argmax already returns the lowest index among ties
    return np.argmax(scores, axis=0)


def posterior_ratio(P: ProbSequence, lattice: AlignmentLattice) -> np.ndarray:
    """Log of p(z_t=c | X, y) / p(z_t=c | X), -inf where the posterior is 0."""
    if P.values.shape != lattice.gamma.shape:
        raise DomainError("P and lattice disagree in shape")
    with np.errstate(invalid="ignore"):
        ratio = lattice.gamma - P.log_values
    # a class with zero posterior (including P = 0, where the ratio is undefined) never wins
    ratio[lattice.gamma == -np.inf] = -np.inf
    return ratio


def estimate_map_alignment(P: ProbSequence, lattice: AlignmentLattice) -> LatentAlignment:
    """Per-frame MAP class: argmax of gamma - logP.

    This orders classes exactly like argmin of G/P with G = P - exp(gamma),
    but never divides by a vanishing probability.
    """
    if not lattice.feasible:
        raise DomainError("cannot estimate an alignment from an infeasible lattice")
    ratio = posterior_ratio(P, lattice)
    z = _first_argmax(ratio)
    return LatentAlignment(tuple(int(c) for c in z), ratio[z, np.arange(ratio.shape[1])])


def estimate_self_alignment(P: ProbSequence) -> LatentAlignment:
    """Hard prediction of the model itself: per-frame argmax of P."""
    z = _first_argmax(P.log_values)
    return LatentAlignment(tuple(int(c) for c in z), P.log_values[z, np.arange(P.T)])


def collapse(ids) -> tuple[int, ...]:
    """Merge runs of equal ids, then drop blanks."""
    out = []
    prev = None
    for i in ids:
        i = int(i)
        if i != prev and i != BLANK:
            out.append(i)
        prev = i
    return tuple(out)


def greedy_decode(z, vocab: Vocabulary | None = None) -> LabelSequence:
    ids = z.ids if isinstance(z, LatentAlignment) else z
    return LabelSequence(collapse(ids), vocab)


def _as_text(s) -> str:
    if isinstance(s, str):
        return s
    if isinstance(s, LabelSequence):
        if s.vocab is not None:
            return s.text()
        return " ".join(map(str, s.ids))
    return " ".join(map(str, s))


def accuracy(preds: Sequence, truths: Sequence, fold_case: bool = False) -> float:
    """Fraction of exact sequence matches.

    Sequences may be strings or label sequences; ``fold_case`` lowercases
    both sides first (the English evaluation protocol).
    """
    if len(preds) != len(truths):
        raise DomainError(f"{len(preds)} predictions vs {len(truths)} references")
    if not preds:
        return 0.0
    hits = 0
    for p, t in zip(preds, truths):
        if fold_case:
            hits += _as_text(p).lower() == _as_text(t).lower()
        elif isinstance(p, str) or isinstance(t, str):
            hits += _as_text(p) == _as_text(t)
        else:
            hits += tuple(p) == tuple(t)
    return hits / len(preds)


def alignment_accuracy(alignments: Sequence[LatentAlignment], truths: Sequence, vocab: Vocabulary | None = None) -> float:
    """AACC: accuracy of greedily decoded alignments, with no case folding."""
    if len(alignments) != len(truths):
        raise DomainError(f"{len(alignments)} alignments vs {len(truths)} references")
    decoded = [greedy_decode(z, vocab) for z in alignments]
    truths = [vocab.encode(t) if isinstance(t, str) else t for t in truths] if vocab else truths
    return accuracy([tuple(d) for d in decoded], [tuple(t) for t in truths])


def format_dump_line(sample_id, z: LatentAlignment, truth: LabelSequence, vocab: Vocabulary) -> str:
    """One tab-separated dump row: id, raw path, decoded, truth, match flag."""
    raw = " ".join(vocab.token(i) for i in z.ids)
    decoded = vocab.decode(collapse(z.ids))
    truth_s = vocab.decode(truth.ids)
    return f"{sample_id}\t{raw}\t{decoded}\t{truth_s}\t{int(decoded == truth_s)}"


def parse_dump_line(line: str, vocab: Vocabulary):
    """Inverse of :func:`format_dump_line`; returns (id, alignment, decoded, truth, match)."""
    sample_id, raw, decoded, truth, flag = line.rstrip("\n").split("\t")
    lookup = {"<b>": BLANK, **{c: i + 1 for i, c in enumerate(vocab.chars)}}
    ids = tuple(lookup[tok] for tok in raw.split(" "))
    return sample_id, LatentAlignment(ids), decoded, truth, flag == "1"
