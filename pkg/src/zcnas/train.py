"""Full training of one instantiated model: Adam, stepped learning-rate
decay, per-epoch validation, best-validation checkpoint selection, and
macro F1 reporting.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import WindowedDataset
from .nn import tensor as T
from .nn.layers import Model
from .nn.optim import Adam


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 256
    lr_decay: float = 0.8
    decay_every: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lr <= 0 or self.batch_size <= 0 or self.decay_every <= 0:
            raise ValueError("lr, batch_size and decay_every must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")


@dataclass
class RunRecord:
    spec_hash: str
    seed: int
    best_val_f1: float
    test_f1_at_best_val: float
    epochs_completed: int
    wall_time_s: float
    diverged: bool = False
    val_f1_history: list[float] = field(default_factory=list)   # entry 0 = untrained
    train_loss_history: list[float] = field(default_factory=list)
    proxy_scores: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "best_val_f1": self.best_val_f1,
            "test_f1_at_best_val": self.test_f1_at_best_val,
            "epochs_completed": self.epochs_completed,
            "wall_time_s": self.wall_time_s,
            "diverged": self.diverged,
            "val_f1_history": self.val_f1_history,
            "train_loss_history": self.train_loss_history,
            # degenerate (-inf) proxy values are not valid strict JSON
            "proxy_scores": {k: (v if math.isfinite(v) else None)
                             for k, v in self.proxy_scores.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            spec_hash=d["spec_hash"],
            seed=int(d["seed"]),
            best_val_f1=float(d["best_val_f1"]),
            test_f1_at_best_val=float(d["test_f1_at_best_val"]),
            epochs_completed=int(d["epochs_completed"]),
            wall_time_s=float(d["wall_time_s"]),
            diverged=bool(d.get("diverged", False)),
            val_f1_history=[float(v) for v in d.get("val_f1_history", [])],
            train_loss_history=[float(v) for v in d.get("train_loss_history", [])],
            proxy_scores={k: (float("-inf") if v is None else float(v))
                          for k, v in d.get("proxy_scores", {}).items()},
        )


def lr_at_epoch(base_lr: float, epoch: int, decay: float, every: int) -> float:
    """Learning rate in force during 1-indexed ``epoch``."""
    return base_lr * decay ** ((epoch - 1) // every)


def macro_f1(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted mean of per-class F1 over the classes present in
    ``labels``; a class with zero precision+recall contributes 0."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    if labels.size == 0:
        raise ValueError("macro_f1 of empty input is undefined")
    f1s = []
    for c in np.unique(labels):
        tp = int(np.sum((predictions == c) & (labels == c)))
        fp = int(np.sum((predictions == c) & (labels != c)))
        fn = int(np.sum((predictions != c) & (labels == c)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * precision * recall / (precision + recall)
                   if precision + recall else 0.0)
    return float(np.mean(f1s))


def predict(model: Model, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Deterministic batched argmax predictions."""
    was_deterministic = model.deterministic
    model.deterministic = True
    try:
        preds = []
        for lo in range(0, windows.shape[0], batch_size):
            logits = model.forward(T.Tensor(windows[lo:lo + batch_size]))
            preds.append(logits.data.argmax(axis=1))
        return np.concatenate(preds)
    finally:
        model.deterministic = was_deterministic


def evaluate_f1(model: Model, dataset: WindowedDataset) -> float:
    return macro_f1(predict(model, dataset.windows), dataset.labels)


def train(model: Model, datasets: dict[str, WindowedDataset], config: TrainConfig,
          spec_hash: str = "") -> RunRecord:
    """Train with Adam and per-epoch validation.

    val_f1_history[0] is the untrained model's validation F1, so the
    initial state competes as a checkpoint and epochs=0 degenerates to a
    pure evaluation. On return the model holds the parameters of its
    best-validation epoch; a non-finite loss aborts the run and flags the
    record as diverged (the best parameters seen so far are kept).
    """
    config.validate()
    t0 = time.perf_counter()
    for split in ("train", "val", "test"):
        if split not in datasets:
            raise ValueError(f"missing {split} split")
    train_set = datasets["train"]
    n = len(train_set)
    if n == 0:
        raise ValueError("train split is empty")
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params, lr=config.lr)

    val_history = [evaluate_f1(model, datasets["val"])]
    best_val = val_history[0]
    best_state = model.params.state()
    loss_history: list[float] = []
    diverged = False
    epochs_completed = 0

    for epoch in range(1, config.epochs + 1):
        opt.lr = lr_at_epoch(config.lr, epoch, config.lr_decay, config.decay_every)
        perm = rng.permutation(n)
        model.deterministic = False
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            model.zero_grad()
            logits = model.forward(T.Tensor(train_set.windows[idx]))
            loss = T.cross_entropy(logits, train_set.labels[idx])
            if not np.isfinite(loss.data):
                diverged = True
                break
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.data))
        model.deterministic = True
        if diverged:
            break
        loss_history.append(float(np.mean(epoch_losses)))
        val_f1 = evaluate_f1(model, datasets["val"])
        val_history.append(val_f1)
        epochs_completed = epoch
        if val_f1 > best_val:
            best_val = val_f1
            best_state = model.params.state()

    model.params.load_state(best_state)
    test_f1 = evaluate_f1(model, datasets["test"])
    return RunRecord(
        spec_hash=spec_hash,
        seed=config.seed,
        best_val_f1=best_val,
        test_f1_at_best_val=test_f1,
        epochs_completed=epochs_completed,
        wall_time_s=time.perf_counter() - t0,
        diverged=diverged,
        val_f1_history=val_history,
        train_loss_history=loss_history,
    )
