"""Checkpoints as a single JSON document.

Floats are written with ``repr`` precision by the json module, so every
parameter survives a save/load cycle bit for bit.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ..types import DomainError
from .model import ToyModel
from .train import TrainConfig, TrainState

FORMAT = "dctc-checkpoint/1"


def _arr(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.tolist()}


def _unarr(d: dict) -> np.ndarray:
    a = np.array(d["data"], dtype=np.float64)
    return a.reshape(d["shape"])


def state_to_dict(state: TrainState, metrics_path: str | None = None) -> dict:
    m = state.model
    return {
        "format": FORMAT,
        "mode": m.mode,
        "context": m.context,
        "shapes": {k: list(v.shape) for k, v in m.params().items()},
        "params": {k: _arr(v) for k, v in m.params().items()},
        "velocity": {k: _arr(v) for k, v in state.velocity.items()},
        "iteration": state.iteration,
        "train_config": state.cfg.to_dict(),
        "rng_state": state.rng_state,
        "metrics_history": metrics_path,
        "history": state.history,
    }


def state_from_dict(doc: dict) -> TrainState:
    if doc.get("format") != FORMAT:
        raise DomainError(f"not a {FORMAT} document")
    params = {k: _unarr(v) for k, v in doc["params"].items()}
    model = ToyModel(doc["mode"], context=int(doc.get("context", 0)), **params)
    velocity = {k: _unarr(v) for k, v in doc["velocity"].items()}
    return TrainState(model, velocity, int(doc["iteration"]), TrainConfig.from_dict(doc["train_config"]),
                      doc["rng_state"], list(doc.get("history", [])))


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(state: TrainState, path, metrics_path: str | None = None) -> None:
    write_atomic(path, json.dumps(state_to_dict(state, metrics_path), indent=1) + "\n")


def load_checkpoint(path) -> TrainState:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: not a valid checkpoint ({exc})") from None
    return state_from_dict(doc)
