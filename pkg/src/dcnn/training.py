"""Losses, AdaGrad, initialization and the early-stopped minibatch training loop."""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .graph import augment_with_edges, diffuse
from .model import DcnnParams, backward_flat, forward, pool_nodes, predict_hard

log = logging.getLogger(__name__)

LOSSES = ("hinge", "hinge_ova", "cross_entropy")


class TrainingDiverged(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    init_std: float = 0.1
    batch_size: int = 64
    max_epochs: int = 500
    early_stop_window: int = 5
    margin: float = 1.0
    rng_seed: int = 0
    adagrad_epsilon: float = 1e-8
    loss: str = "hinge"
    output_nonlinearity: str | None = None

    def __post_init__(self):
        for name in ("learning_rate", "init_std", "batch_size", "max_epochs",
                     "early_stop_window", "margin", "adagrad_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be nonnegative")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.output_nonlinearity in ("none", ""):
            object.__setattr__(self, "output_nonlinearity", None)
        if self.output_nonlinearity not in (None, "tanh"):
            raise ValueError("output_nonlinearity must be None or 'tanh'")

    @classmethod
    def from_dict(cls, overrides: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**overrides)

    @classmethod
    def from_file(cls, path) -> TrainConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> TrainConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


# -- losses -----------------------------------------------------------------

def _check_labels(scores, labels):
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != scores.shape[0]:
        raise ValueError("one label per score row required")
    if labels.size and (labels.min() < 0 or labels.max() >= scores.shape[1]):
        raise ValueError(f"labels must lie in [0, {scores.shape[1]})")
    return scores, labels


def _worst_competitor(scores, labels):
    rows = np.arange(len(labels))
    others = scores.copy()
    others[rows, labels] = -np.inf
    worst = np.argmax(others, axis=1)
    return rows, worst, others[rows, worst]


def hinge_loss(scores, labels, margin=1.0) -> float:
    """Crammer-Singer multiclass hinge loss, averaged over rows."""
    scores, labels = _check_labels(scores, labels)
    rows, _, worst = _worst_competitor(scores, labels)
    slack = margin + worst - scores[rows, labels]
    return float(np.mean(np.maximum(slack, 0.0)))


def hinge_loss_grad(scores, labels, margin=1.0) -> np.ndarray:
    scores, labels = _check_labels(scores, labels)
    n = len(labels)
    rows, worst_idx, worst = _worst_competitor(scores, labels)
    active = margin + worst - scores[rows, labels] > 0
    grad = np.zeros_like(scores)
    grad[rows[active], worst_idx[active]] += 1.0 / n
    grad[rows[active], labels[active]] -= 1.0 / n
    return grad


def _signs(scores, labels):
    t = -np.ones_like(scores)
    t[np.arange(len(labels)), labels] = 1.0
    return t


def ova_hinge_loss(scores, labels, margin=1.0) -> float:
    """One-vs-all hinge: sum over classes of ``max(0, margin - t_c s_c)``."""
    scores, labels = _check_labels(scores, labels)
    t = _signs(scores, labels)
    return float(np.mean(np.maximum(margin - t * scores, 0.0).sum(axis=1)))


def ova_hinge_loss_grad(scores, labels, margin=1.0) -> np.ndarray:
    scores, labels = _check_labels(scores, labels)
    t = _signs(scores, labels)
    return np.where(margin - t * scores > 0, -t, 0.0) / len(labels)


def cross_entropy_loss(scores, labels, margin=None) -> float:
    scores, labels = _check_labels(scores, labels)
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(labels)), labels]))


def cross_entropy_loss_grad(scores, labels, margin=None) -> np.ndarray:
    scores, labels = _check_labels(scores, labels)
    shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
    grad = shifted / shifted.sum(axis=1, keepdims=True)
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)


LOSS_FUNCTIONS = {
    "hinge": (hinge_loss, hinge_loss_grad),
    "hinge_ova": (ova_hinge_loss, ova_hinge_loss_grad),
    "cross_entropy": (cross_entropy_loss, cross_entropy_loss_grad),
}


# -- optimizer --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdaGradState:
    """Running sums of squared gradients, shaped like the parameters."""

    conv: np.ndarray
    dense: np.ndarray
    steps: int = 0

    @classmethod
    def zeros_like(cls, params: DcnnParams) -> AdaGradState:
        return cls(np.zeros_like(params.conv_weights),
                   np.zeros_like(params.dense_weights))


def _adagrad_update(w, g, acc, lr, eps):
    denom = np.sqrt(acc) + eps
    step = np.divide(lr * g, denom, out=np.zeros_like(g), where=denom > 0)
    return w - step


def adagrad_step(params: DcnnParams, grads, state: AdaGradState,
                 lr=0.05, eps=1e-8):
    """One AdaGrad descent step; returns ``(new_params, new_state)``."""
    g_conv, g_dense = (np.asarray(g, dtype=np.float64) for g in grads)
    if (g_conv.shape != params.conv_weights.shape
            or g_dense.shape != params.dense_weights.shape):
        raise ValueError("gradient shapes do not match the parameters")
    acc_conv = state.conv + g_conv ** 2
    acc_dense = state.dense + g_dense ** 2
    new_params = DcnnParams(
        _adagrad_update(params.conv_weights, g_conv, acc_conv, lr, eps),
        _adagrad_update(params.dense_weights, g_dense, acc_dense, lr, eps),
    )
    return new_params, AdaGradState(acc_conv, acc_dense, state.steps + 1)


def init_params(hops, num_features, num_classes, init_std=0.1, rng_seed=0) -> DcnnParams:
    if hops < 0 or num_features < 1 or num_classes < 1:
        raise ValueError("need hops >= 0 and positive feature/class counts")
    rng = np.random.default_rng(rng_seed)
    k = (hops + 1) * num_features
    wc = rng.normal(0.0, init_std, size=(hops + 1, num_features))
    wd = rng.normal(0.0, init_std, size=(num_classes, k))
    return DcnnParams(wc, wd)


class EarlyStopWindow:
    """Stop once an epoch's validation error exceeds the mean of the previous ``size``."""

    def __init__(self, size=5):
        if size < 1:
            raise ValueError("window size must be positive")
        self.size = size
        self.errors = deque(maxlen=size)
        self.epoch = 0

    def should_stop(self, val_error) -> bool:
        self.epoch += 1
        stop = (len(self.errors) == self.size
                and val_error > sum(self.errors) / self.size)
        self.errors.append(val_error)
        return stop


# -- training loop ----------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_error: float


@dataclass
class TrainResult:
    params: DcnnParams
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def best_val_error(self) -> float:
        return self.history[self.best_epoch - 1].val_error

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_error"])
        for rec in self.history:
            writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_error)])
        return buf.getvalue()

    def write_history(self, path):
        Path(path).write_text(self.history_csv())


def predict_entities(inputs, params: DcnnParams, index=None,
                     output_nonlinearity=None, chunk_size=2048, backend=None):
    """Hard predictions for the entities in ``index``, computed in chunks."""
    inputs = np.asarray(inputs)
    flat = inputs.reshape(inputs.shape[0], -1)
    index = np.arange(flat.shape[0]) if index is None else np.asarray(index)
    out = np.empty(len(index), dtype=np.int64)
    for start in range(0, len(index), chunk_size):
        part = index[start:start + chunk_size]
        _, scores = forward(flat[part], params, output_nonlinearity, backend)
        out[start:start + chunk_size] = predict_hard(scores)
    return out


def train_entities(inputs, labels, train_idx, val_idx, num_classes,
                   config: TrainConfig = TrainConfig(), backend=None) -> TrainResult:
    """Train on precomputed entity blocks ``inputs`` of shape ``(E, H + 1, F)``.

    Each epoch reshuffles ``train_idx`` into minibatches, takes one AdaGrad
    step per batch, then measures the misclassification rate on
    ``val_idx``.  The parameters of the epoch with the lowest validation
    error are returned, the latest such epoch on ties.
    """
    inputs = np.asarray(inputs)
    if inputs.ndim != 3:
        raise ValueError("inputs must be E x (H + 1) x F")
    labels = np.asarray(labels, dtype=np.int64)
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("training and validation splits must be nonempty")
    used = labels[np.concatenate([train_idx, val_idx])]
    if used.min() < 0 or used.max() >= num_classes:
        raise ValueError(f"split labels must lie in [0, {num_classes})")

    n_ent, n_hop, n_feat = inputs.shape
    flat = inputs.reshape(n_ent, -1)
    loss_fn, grad_fn = LOSS_FUNCTIONS[config.loss]
    onl = config.output_nonlinearity
    batch = min(config.batch_size, len(train_idx))

    params = init_params(n_hop - 1, n_feat, num_classes, config.init_std,
                         config.rng_seed)
    state = AdaGradState.zeros_like(params)
    shuffler = np.random.default_rng([config.rng_seed, 1])
    window = EarlyStopWindow(config.early_stop_window)
    result = TrainResult(params)
    best_error = np.inf

    for epoch in range(1, config.max_epochs + 1):
        order = shuffler.permutation(train_idx)
        total = 0.0
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            x = flat[idx]
            z, scores = forward(x, params, onl, backend)
            loss = loss_fn(scores, labels[idx], config.margin)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            upstream = grad_fn(scores, labels[idx], config.margin)
            grads = backward_flat(x, z, scores, params, upstream, onl, backend)
            params, state = adagrad_step(params, grads, state,
                                         config.learning_rate,
                                         config.adagrad_epsilon)
            total += loss * len(idx)
        pred = predict_entities(flat, params, val_idx, onl, backend=backend)
        val_error = float(np.mean(pred != labels[val_idx]))
        result.history.append(EpochRecord(epoch, total / len(order), val_error))
        log.debug("epoch %d loss %.5f val_error %.4f", epoch, total / len(order),
                  val_error)
        # ties go to the later epoch, which has seen more training
        if val_error <= best_error:
            best_error = val_error
            result.params, result.best_epoch = params, epoch
        if window.should_stop(val_error):
            result.stopped_early = True
            break
    return result


def entity_inputs(task, data, hops, labels=None, edge_features=None, backend=None):
    """Diffused blocks and labels for each entity of a node/graph/edge task.

    ``data`` is a :class:`Graph` for node and edge tasks and a sequence of
    graphs for graph tasks.  Node tasks default to the graph's node labels;
    graph and edge tasks need ``labels`` (one per graph / per edge).
    """
    if task == "node":
        labels = data.node_labels if labels is None else labels
        return diffuse(data, hops, backend).values, np.asarray(labels)
    if task == "graph":
        if labels is None:
            raise ValueError("graph task needs one label per graph")
        blocks = [pool_nodes(diffuse(g, hops, backend)) for g in data]
        return np.concatenate(blocks), np.asarray(labels)
    if task == "edge":
        if labels is None:
            raise ValueError("edge task needs one label per edge")
        aug = augment_with_edges(data, edge_features, labels)
        values = diffuse(aug, hops, backend).values[data.num_nodes:]
        return values, np.asarray(labels)
    raise ValueError(f"unknown task {task!r}")


def train(data, task, split, config: TrainConfig = TrainConfig(), hops=2,
          labels=None, num_classes=None, backend=None) -> TrainResult:
    """Build entity inputs for ``task`` and run :func:`train_entities`.

    ``split`` is anything with ``train`` and ``val`` index attributes.
    """
    inputs, labels = entity_inputs(task, data, hops, labels, backend=backend)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return train_entities(inputs, labels, split.train, split.val, num_classes,
                          config, backend)

