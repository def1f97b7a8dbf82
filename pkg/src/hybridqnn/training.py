"""Cross-entropy loss, plain SGD, the epoch loop, and checkpoint I/O."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ConfigurationError, ShapeError
from .models import Model, ModelSpec, build_model

logger = logging.getLogger(__name__)

STREAMS = ("init", "shuffle", "shots", "analysis")
METRIC_COLUMNS = ("epoch", "train_loss", "train_acc", "test_acc", "wall_seconds")
SHOT_SWEEP = (100, 500, 1000, 1500, 2000)
CHECKPOINT_MAGIC = "# hybridqnn checkpoint v1"


def make_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent named generators derived from one integer seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 10
    epochs: int = 50
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size >= 1 and epochs >= 0 are required")


@dataclass
class TrainState:
    params: np.ndarray
    streams: Dict[str, np.random.Generator]
    epoch: int = 0
    history: List[dict] = field(default_factory=list)


def cross_entropy_loss(logits, labels) -> Tuple[float, np.ndarray]:
    """Mean negative log softmax probability of the true class, and its gradient."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"{n} logit rows but labels of shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ConfigurationError(f"labels must lie in [0, {c}), got {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def sgd_step(params, grads, learning_rate: float) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise ShapeError(f"params {params.shape} and grads {grads.shape} differ")
    return params - learning_rate * grads


def predict_logits(model: Model, X, params, rng=None, batch_size: int = 50) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = [model.forward(X[i : i + batch_size], params, rng) for i in range(0, len(X), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.spec.n_classes))


def evaluate_accuracy(model: Model, X, y, params, rng=None) -> float:
    """Fraction of argmax hits; ties go to the lowest class index."""
    y = np.asarray(y)
    if y.size == 0:
        return 0.0
    return float(np.mean(np.argmax(predict_logits(model, X, params, rng), axis=1) == y))


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    out = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(out, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return out


def loss_and_gradient(model: Model, X, y, params, rng=None) -> Tuple[float, np.ndarray, np.ndarray]:
    logits = model.forward(X, params, rng)
    loss, dlogits = cross_entropy_loss(logits, y)
    return loss, model.backward(dlogits), logits


def train_epoch(model: Model, train, state: TrainState, config: TrainConfig, test=None) -> dict:
    """One pass of mini-batch SGD over ``train = (X, y)``; appends and returns the metrics row."""
    X, y = train
    if len(y) == 0:
        raise ConfigurationError("training set is empty")
    start = time.perf_counter()
    order = state.streams["shuffle"].permutation(len(y)) if config.shuffle else np.arange(len(y))
    shots_rng = state.streams["shots"]
    total_loss, hits = 0.0, 0
    for i in range(0, len(y), config.batch_size):
        idx = order[i : i + config.batch_size]
        loss, grad, logits = loss_and_gradient(model, X[idx], y[idx], state.params, shots_rng)
        state.params = sgd_step(state.params, grad, config.learning_rate)
        total_loss += loss * len(idx)
        hits += int(np.sum(np.argmax(logits, axis=1) == y[idx]))
    state.epoch += 1
    test_acc = float("nan") if test is None else evaluate_accuracy(model, *test, state.params, shots_rng)
    row = {
        "epoch": state.epoch,
        "train_loss": total_loss / len(y),
        "train_acc": hits / len(y),
        "test_acc": test_acc,
        "wall_seconds": time.perf_counter() - start,
    }
    state.history.append(row)
    logger.info(
        "epoch %d loss %.4f train_acc %.3f test_acc %.3f (%.1fs)",
        row["epoch"], row["train_loss"], row["train_acc"], row["test_acc"], row["wall_seconds"],
    )
    return row


def fit(model: Model, train, config: TrainConfig, test=None,
        on_epoch: Optional[Callable[[dict], None]] = None) -> TrainState:
    streams = make_streams(config.seed)
    state = TrainState(model.init_params(streams["init"]), streams)
    for _ in range(config.epochs):
        row = train_epoch(model, train, state, config, test)
        if on_epoch is not None:
            on_epoch(row)
    return state


# -- persistence ----------------------------------------------------------------


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in METRIC_COLUMNS})


def save_checkpoint(path, model: Model, params, extra: Optional[dict] = None) -> None:
    """Plain-text header of ``key=value`` lines, a ``---`` line, then one parameter per line."""
    params = np.asarray(params, dtype=float)
    if params.shape != (model.n_params,):
        raise ShapeError(f"model has {model.n_params} parameters, got {params.shape}")
    header = dict(model.spec.to_dict())
    header["shapes"] = ";".join(model.describe())
    header["n_params"] = model.n_params
    header.update(extra or {})
    lines = [CHECKPOINT_MAGIC]
    lines += [f"{k}={v}" for k, v in header.items()]
    lines.append("---")
    lines += [format(v, ".17g") for v in params]
    Path(path).write_text("\n".join(lines) + "\n")


_SPEC_TYPES = {"ansatz_layers": int, "shots": int, "angle_scale": float, "input_size": int, "n_classes": int}


def load_checkpoint(path) -> Tuple[Model, np.ndarray, Dict[str, str]]:
    """Rebuild the model named in the header and check it against the stored shapes."""
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot read checkpoint {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC or "---" not in lines:
        raise ConfigurationError(f"{path} is not a hybridqnn checkpoint")
    sep = lines.index("---")
    header = dict(line.split("=", 1) for line in lines[1:sep] if "=" in line)
    try:
        spec_kwargs = {"kind": header["kind"], "ansatz_family": header["ansatz_family"]}
        spec_kwargs.update({k: t(header[k]) for k, t in _SPEC_TYPES.items()})
        model = build_model(ModelSpec(**spec_kwargs))
        params = np.array([float(v) for v in lines[sep + 1 :] if v.strip()])
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"corrupted checkpoint {path}: {exc}") from exc
    if header.get("shapes") != ";".join(model.describe()):
        raise ConfigurationError(f"{path}: stored layer shapes do not match the rebuilt model")
    if params.shape != (model.n_params,) or int(header.get("n_params", -1)) != model.n_params:
        raise ConfigurationError(f"{path}: expected {model.n_params} parameters, found {params.size}")
    if not np.all(np.isfinite(params)):
        raise ConfigurationError(f"{path}: non-finite parameter values")
    return model, params, header
