"""Synthetic frame-sequence recognition task and its on-disk format.

Every character (and the blank) owns a fixed unit-norm prototype vector;
a sample is the prototypes of its label characters, each held for a few
frames, separated by blank gap frames, plus Gaussian noise.
"""
from __future__ import annotations

import base64
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..types import DomainError, LabelSequence, Vocabulary

HEADER_TAG = "#dctc-dataset"


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 10
    feature_dim: int = 16
    frames_per_char: tuple[int, int] = (2, 4)
    gap_frames: tuple[int, int] = (0, 2)
    noise_sigma: float = 0.2
    label_len: tuple[int, int] = (3, 8)
    n_train: int = 4000
    n_test: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("frames_per_char", "gap_frames", "label_len"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            if lo > hi:
                raise DomainError(f"{name}: empty range [{lo}, {hi}]")
        if self.vocab_size < 1:
            raise DomainError("vocab_size must be >= 1")
        if self.feature_dim < 1:
            raise DomainError("feature_dim must be >= 1")
        if self.frames_per_char[0] < 1:
            raise DomainError("frames_per_char minimum must be >= 1")
        if self.gap_frames[0] < 0:
            raise DomainError("gap_frames minimum must be >= 0")
        if self.label_len[0] < 1:
            raise DomainError("label_len minimum must be >= 1")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")
        if self.n_train < 0 or self.n_test < 0:
            raise DomainError("sample counts must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Sample:
    label: LabelSequence
    X: np.ndarray  # (F, T) float32

    @property
    def T(self) -> int:
        return self.X.shape[1]


@dataclass
class Dataset:
    vocab: Vocabulary
    feature_dim: int
    samples: list

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def make_prototypes(rng: np.random.Generator, num_classes: int, feature_dim: int) -> np.ndarray:
    protos = rng.standard_normal((num_classes, feature_dim))
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def _draw_sample(rng, cfg: SynthConfig, protos) -> Sample:
    L = int(rng.integers(cfg.label_len[0], cfg.label_len[1] + 1))
    ids = rng.integers(1, cfg.vocab_size + 1, size=L)
    durations = rng.integers(cfg.frames_per_char[0], cfg.frames_per_char[1] + 1, size=L)
    gaps = rng.integers(cfg.gap_frames[0], cfg.gap_frames[1] + 1, size=max(L - 1, 0))
    classes = []
    for j in range(L):
        if j > 0:
            gap = int(gaps[j - 1])
            if ids[j] == ids[j - 1]:
                # a repeated character needs a blank between its runs
                gap = max(gap, 1)
            classes.extend([0] * gap)
        classes.extend([int(ids[j])] * int(durations[j]))
    frames = protos[classes].T
    noise = rng.standard_normal(frames.shape) * cfg.noise_sigma
    X = (frames + noise).astype(np.float32)
    return Sample(LabelSequence(tuple(int(i) for i in ids)), X)


def generate_dataset(cfg: SynthConfig) -> tuple[Dataset, Dataset]:
    """Deterministically draw (train, test) splits for ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    vocab = Vocabulary.synthetic(cfg.vocab_size)
    protos = make_prototypes(rng, vocab.num_classes, cfg.feature_dim)
    train = [_draw_sample(rng, cfg, protos) for _ in range(cfg.n_train)]
    test = [_draw_sample(rng, cfg, protos) for _ in range(cfg.n_test)]
    for s in train + test:
        object.__setattr__(s, "label", LabelSequence(s.label.ids, vocab))
    return Dataset(vocab, cfg.feature_dim, train), Dataset(vocab, cfg.feature_dim, test)


def encode_frames(X: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(X, dtype="<f4").tobytes()).decode("ascii")


def decode_frames(text: str, feature_dim: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(text), dtype="<f4")
    if raw.size % feature_dim:
        raise DomainError(f"frame payload of {raw.size} floats is not a multiple of F={feature_dim}")
    return raw.reshape(feature_dim, -1).astype(np.float32)


def save_dataset(ds: Dataset, path, vocab_ref: str = "vocab.txt") -> None:
    """Write one header line, then ``label<TAB>base64(F x T float32 LE)`` rows."""
    lines = [f"{HEADER_TAG}\tK={ds.vocab.K}\tF={ds.feature_dim}\tvocab={vocab_ref}\tn={len(ds)}"]
    for s in ds.samples:
        lines.append(f"{ds.vocab.decode(s.label.ids)}\t{encode_frames(s.X)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_header(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    return _parse_header(first, path)


def _parse_header(line: str, path) -> dict:
    parts = line.split("\t")
    if not parts or parts[0] != HEADER_TAG:
        raise DomainError(f"{path}: missing {HEADER_TAG} header")
    fields = dict(p.split("=", 1) for p in parts[1:])
    try:
        return {"K": int(fields["K"]), "F": int(fields["F"]), "vocab": fields["vocab"], "n": int(fields.get("n", -1))}
    except (KeyError, ValueError) as exc:
        raise DomainError(f"{path}: malformed header ({exc})") from None


def load_dataset(path, vocab: Vocabulary | None = None) -> Dataset:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")
    header = _parse_header(lines[0], path)
    if vocab is None:
        vocab = Vocabulary.load(path.parent / header["vocab"])
    if vocab.K != header["K"]:
        raise DomainError(f"{path}: header K={header['K']} but vocabulary has {vocab.K} characters")
    samples = []
    for n, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        try:
            text, payload = line.split("\t")
        except ValueError:
            raise DomainError(f"{path}:{n}: expected two tab-separated fields") from None
        samples.append(Sample(vocab.encode(text), decode_frames(payload, header["F"])))
    if header["n"] >= 0 and header["n"] != len(samples):
        raise DomainError(f"{path}: header promises {header['n']} records, found {len(samples)}")
    return Dataset(vocab, header["F"], samples)
