"""Cross-entropy training loop, evaluation metrics, checkpoint persistence.

Graphs are variable-sized, so batches are processed one graph at a time
with the per-graph loss scaled by 1/batch and gradients accumulated; one
optimizer step per batch then matches a mean-over-batch loss exactly,
with no padding or batched tensors.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import numerics as nm
from .detections import SceneSample
from .errors import BadTarget, EmptyDataset, UnlabeledSample
from .gnn_models import Model, ModelConfig, build_model
from .graph_builder import SceneGraph, build_graph
from .numerics import ParameterStore, Tensor

CHECKPOINT_VERSION = 1

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 5e-4
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    per_class_accuracy: tuple[Optional[float], Optional[float]]
    confusion: tuple[tuple[int, int], tuple[int, int]]  # [true class][predicted]
    mean_loss: float

    @property
    def sample_count(self) -> int:
        return sum(sum(row) for row in self.confusion)


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    seed: int
    history: list[dict]
    parameters: dict
    version: int = CHECKPOINT_VERSION


def cross_entropy_loss(log_probs: Tensor, target: int) -> Tensor:
    """Negative log-probability of the target class; expects log_softmax output."""
    n_classes = log_probs.shape[1]
    if not 0 <= target < n_classes:
        raise BadTarget(f"target must be in [0, {n_classes}), got {target}")
    return nm.scale(nm.pick(log_probs, target), -1.0)


# --- optimizers ---

class SGD:
    def __init__(self, store: ParameterStore, lr: float, weight_decay: float = 0.0):
        self.store = store
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self) -> None:
        for _, t in self.store.items():
            t.values -= self.lr * (t.grad + self.weight_decay * t.values)
            t.zero_grad()


class Adam:
    """Adam with decoupled weight decay applied directly to the parameters."""

    def __init__(self, store: ParameterStore, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.values) for name, t in store.items()}
        self._v = {name: np.zeros_like(t.values) for name, t in store.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, t in self.store.items():
            g = t.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            t.values -= self.lr * (update + self.weight_decay * t.values)
            t.zero_grad()


def make_optimizer(cfg: TrainConfig, store: ParameterStore):
    if cfg.optimizer == "sgd":
        return SGD(store, cfg.learning_rate, cfg.weight_decay)
    return Adam(store, cfg.learning_rate, cfg.weight_decay)


# --- training ---

def _require_labeled(scenes: Sequence[SceneSample], what: str) -> np.ndarray:
    for s in scenes:
        if s.scene_class is None:
            raise UnlabeledSample(f"{what} scene {s.scene_id!r} has no scene class")
    return np.array([int(s.scene_class) for s in scenes], dtype=np.int64)

def _build_graphs(scenes: Sequence[SceneSample], model_cfg: ModelConfig) -> list[SceneGraph]:
    return [build_graph(s, beta=model_cfg.beta, vocab_size=model_cfg.vocab_size) for s in scenes]


def _predict(log_probs: np.ndarray) -> int:
    # exact ties resolve to indoor (class 0) so accuracy is reproducible
    return 0 if log_probs[0] >= log_probs[1] else 1


def train(
    train_scenes: Sequence[SceneSample],
    val_scenes: Sequence[SceneSample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> Checkpoint:
    """Run the full optimization loop and return a checkpoint with history.

    Deterministic in train_cfg.seed, which controls parameter init and the
    per-epoch shuffle.  Train loss/accuracy in the history are running
    statistics gathered from the training passes; validation metrics are
    computed with the end-of-epoch parameters.
    """
    if not train_scenes:
        raise EmptyDataset("training set is empty")
    train_labels = _require_labeled(train_scenes, "training")
    val_labels = _require_labeled(val_scenes, "validation")
    train_graphs = _build_graphs(train_scenes, model_cfg)
    val_graphs = _build_graphs(val_scenes, model_cfg)

    model = build_model(model_cfg, seed=train_cfg.seed)
    optimizer = make_optimizer(train_cfg, model.store)
    rng = np.random.default_rng(train_cfg.seed)
    n = len(train_graphs)

    history = []
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, train_cfg.batch_size):
            batch = order[start : start + train_cfg.batch_size]
            inv_batch = 1.0 / len(batch)
            for idx in batch:
                log_probs = model.forward(train_graphs[idx])
                loss = cross_entropy_loss(log_probs, int(train_labels[idx]))
                loss_sum += loss.item()
                correct += _predict(log_probs.values[0]) == train_labels[idx]
                nm.backward(nm.scale(loss, inv_batch))
            optimizer.step()
        entry = {
            "epoch": epoch,
            "train_loss": loss_sum / n,
            "train_accuracy": correct / n,
            "val_loss": None,
            "val_accuracy": None,
        }
        if val_graphs:
            val_metrics = evaluate_model(model, val_graphs, val_labels)
            entry["val_loss"] = val_metrics.mean_loss
            entry["val_accuracy"] = val_metrics.accuracy
        history.append(entry)

    return Checkpoint(
        model_config=model_cfg,
        train_config=train_cfg,
        seed=train_cfg.seed,
        history=history,
        parameters=model.store.state_dict(),
    )


# --- evaluation ---

def evaluate_model(model: Model, graphs: Sequence[SceneGraph], labels: np.ndarray) -> Metrics:
    confusion = [[0, 0], [0, 0]]
    loss_sum = 0.0
    for graph, label in zip(graphs, labels):
        log_probs = model.forward(graph).values[0]
        confusion[int(label)][_predict(log_probs)] += 1
        loss_sum += -float(log_probs[int(label)])
    total = len(graphs)
    per_class = tuple(
        confusion[c][c] / sum(confusion[c]) if sum(confusion[c]) else None for c in (0, 1)
    )
    return Metrics(
        accuracy=(confusion[0][0] + confusion[1][1]) / total,
        per_class_accuracy=per_class,
        confusion=(tuple(confusion[0]), tuple(confusion[1])),
        mean_loss=loss_sum / total,
    )


def evaluate(checkpoint: Checkpoint, scenes: Sequence[SceneSample]) -> Metrics:
    """Accuracy, per-class accuracy, confusion counts, and mean loss on a labeled set."""
    if not scenes:
        raise EmptyDataset("evaluation set is empty")
    labels = _require_labeled(scenes, "evaluation")
    model = model_from_checkpoint(checkpoint)
    graphs = _build_graphs(scenes, checkpoint.model_config)
    return evaluate_model(model, graphs, labels)


# --- persistence ---

def model_from_checkpoint(checkpoint: Checkpoint) -> Model:
    model = build_model(checkpoint.model_config, seed=checkpoint.seed)
    model.store.load_state_dict(checkpoint.parameters)
    return model


def checkpoint_to_dict(checkpoint: Checkpoint) -> dict:
    return {
        "version": checkpoint.version,
        "model_config": dataclasses.asdict(checkpoint.model_config),
        "train_config": dataclasses.asdict(checkpoint.train_config),
        "seed": checkpoint.seed,
        "history": checkpoint.history,
        "parameters": checkpoint.parameters,
    }


def checkpoint_from_dict(obj: dict) -> Checkpoint:
    version = obj.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    return Checkpoint(
        model_config=ModelConfig(**obj["model_config"]),
        train_config=TrainConfig(**obj["train_config"]),
        seed=int(obj["seed"]),
        history=list(obj["history"]),
        parameters=dict(obj["parameters"]),
        version=version,
    )


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Write a checkpoint as JSON; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(checkpoint_to_dict(checkpoint), f, separators=(",", ":"))
        f.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as f:
        return checkpoint_from_dict(json.load(f))
