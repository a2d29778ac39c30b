"""SGD-with-momentum training of the toy frame classifier under CTC-family losses.

The minibatch schedule (one permutation per epoch) is drawn up front from
a dedicated generator, so a run is a pure function of its config and a
checkpoint needs only that generator's initial state plus an iteration
counter to resume exactly.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..alignment import collapse, estimate_self_alignment
from ..losses import DEFAULT_LAMBDA, LOSS_KINDS, batch_loss, make_loss
from ..types import DomainError
from .model import ToyModel, backward, forward_stacked, stack_context
from .synth import Dataset

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("iter", "loss_total", "loss_ctc", "loss_distill", "test_acc", "aacc_map", "aacc_self")


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "dctc"
    lam: float = DEFAULT_LAMBDA
    lr: float = 0.1
    momentum: float = 0.9
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0
    log_every: int = 25
    estimator_kind: str = "map"
    aacc_batches: int = 10
    alpha_f: float = 1.0
    gamma_f: float = 2.0
    mode: str = "hidden"
    hidden_dim: int = 32
    context: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", self.loss_kind.replace("-", "_"))
        if self.loss_kind not in LOSS_KINDS:
            raise DomainError(f"loss_kind must be one of {LOSS_KINDS}")
        if not self.lr > 0:
            raise DomainError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise DomainError("momentum must lie in [0, 1)")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.log_every < 1:
            raise DomainError("log_every must be >= 1")
        if self.aacc_batches < 1:
            raise DomainError("aacc_batches must be >= 1")
        if self.estimator_kind not in ("map", "self"):
            raise DomainError("estimator_kind must be 'map' or 'self'")
        if self.lam < 0:
            raise DomainError("lambda must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, state: "TrainState"):
        super().__init__(message)
        self.state = state


@dataclass
class TrainState:
    model: ToyModel
    velocity: dict
    iteration: int
    cfg: TrainConfig
    rng_state: dict
    history: list = field(default_factory=list)


def init_model(cfg: TrainConfig, feature_dim: int, num_classes: int) -> ToyModel:
    rng = np.random.default_rng([cfg.seed, 0])
    return ToyModel.init(rng, cfg.mode, feature_dim, num_classes, cfg.hidden_dim, cfg.init_scale, cfg.context)


def schedule_rng(cfg: TrainConfig) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, 1])


def make_schedule(rng: np.random.Generator, n: int, cfg: TrainConfig) -> list:
    batches = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        batches.extend(perm[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size))
    return batches


def run_frames(model: ToyModel, samples, return_cache: bool = False):
    """Forward a list of samples as one stacked matrix; returns per-sample logits."""
    # stack context per sample so neighbours never leak across sequences
    X = np.hstack([stack_context(s.X, model.context) for s in samples])
    out = forward_stacked(model, X, return_cache=return_cache)
    U, cache = out if return_cache else (out, None)
    splits = np.cumsum([s.T for s in samples])[:-1]
    parts = np.split(U, splits, axis=1)
    return (parts, cache) if return_cache else parts


def predict(model: ToyModel, samples) -> list:
    """Greedy-decoded label ids for each sample."""
    if not samples:
        return []
    return [collapse(np.argmax(U, axis=0)) for U in run_frames(model, samples)]


def evaluate_accuracy(model: ToyModel, ds: Dataset) -> float:
    if len(ds) == 0:
        return 0.0
    preds = predict(model, ds.samples)
    return sum(p == s.label.ids for p, s in zip(preds, ds.samples)) / len(ds)


def probe_metrics(model: ToyModel, samples, loss_fn, vocab) -> dict:
    """Loss components and AACC of both estimators, with the model frozen."""
    parts = run_frames(model, samples)
    bl = batch_loss(loss_fn, list(zip(parts, [s.label for s in samples])), vocab, threads=None)
    hit_map = hit_self = 0
    for s, out in zip(samples, bl.outputs):
        if out.feasible:
            hit_map += collapse(out.alignment.ids) == s.label.ids
            hit_self += collapse(estimate_self_alignment(out.P).ids) == s.label.ids
    n = bl.n_feasible
    return {
        "loss_total": bl.total,
        "loss_ctc": bl.ctc,
        "loss_distill": bl.distill,
        "aacc_map": hit_map / n,
        "aacc_self": hit_self / n,
    }


def new_state(cfg: TrainConfig, model: ToyModel) -> TrainState:
    velocity = {k: np.zeros_like(v) for k, v in model.params().items()}
    return TrainState(model, velocity, 0, cfg, schedule_rng(cfg).bit_generator.state, [])


def train(model: ToyModel | None, train_ds: Dataset, test_ds: Dataset, cfg: TrainConfig,
          state: TrainState | None = None, stop_after: int | None = None,
          threads: int | None = None) -> TrainState:
    """Train (or resume training) and return the final state with its metrics history.

    Metrics are taken at iteration 0, every ``log_every`` updates and after
    the last update. AACC and the loss columns are measured on the
    ``aacc_batches`` minibatches the schedule will consume next, using the
    current (not yet updated) parameters.
    """
    if state is None:
        if model is None:
            model = init_model(cfg, train_ds.feature_dim, train_ds.vocab.num_classes)
        state = new_state(cfg, model)
    cfg = state.cfg
    model = state.model
    vocab = train_ds.vocab
    if model.num_classes != vocab.num_classes or model.feature_dim != train_ds.feature_dim:
        raise DomainError("model shape does not match the dataset")
    loss_fn = make_loss(cfg.loss_kind, cfg.lam, cfg.alpha_f, cfg.gamma_f)

    rng = np.random.default_rng()
    rng.bit_generator.state = state.rng_state
    schedule = make_schedule(rng, len(train_ds), cfg)
    total = len(schedule)
    logged = {row["iter"] for row in state.history}

    def record(it):
        if it in logged:
            return
        lo = min(it, max(total - cfg.aacc_batches, 0))
        idx = np.concatenate(schedule[lo:lo + cfg.aacc_batches])
        row = {"iter": it, **probe_metrics(model, [train_ds[i] for i in idx], loss_fn, vocab)}
        row["test_acc"] = evaluate_accuracy(model, test_ds)
        state.history.append({k: row[k] for k in METRIC_COLUMNS})
        logged.add(it)
        log.info("iter %d loss %.4f test_acc %.4f aacc_map %.3f aacc_self %.3f", it, row["loss_total"],
                 row["test_acc"], row["aacc_map"], row["aacc_self"])

    params = model.params()
    while state.iteration < total:
        it = state.iteration
        if stop_after is not None and it >= stop_after:
            return state
        if it % cfg.log_every == 0:
            record(it)
        samples = [train_ds[i] for i in schedule[it]]
        parts, cache = run_frames(model, samples, return_cache=True)
        try:
            bl = batch_loss(loss_fn, list(zip(parts, [s.label for s in samples])), vocab, threads)
        except DomainError as exc:
            raise TrainingDiverged(f"iteration {it}: {exc}", state) from exc
        if not math.isfinite(bl.total):
            raise TrainingDiverged(f"iteration {it}: non-finite loss {bl.total}", state)
        dU = np.hstack([g if g is not None else np.zeros_like(U) for g, U in zip(bl.grads, parts)])
        grads = backward(model, cache, dU)
        with np.errstate(over="ignore", invalid="ignore"):
            for k, p in params.items():
                v = state.velocity[k]
                v *= cfg.momentum
                v += grads[k]
                p -= cfg.lr * v
                if not np.all(np.isfinite(p)):
                    raise TrainingDiverged(f"iteration {it}: parameter {k} became non-finite", state)
        state.iteration = it + 1
    record(total)
    return state


def write_metrics_csv(history: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in history:
            w.writerow([row["iter"]] + [repr(float(row[k])) for k in METRIC_COLUMNS[1:]])


def read_metrics_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(r[k]) if k == "iter" else float(r[k])) for k in METRIC_COLUMNS} for r in rows]
