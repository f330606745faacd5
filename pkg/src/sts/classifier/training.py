"""Mini-batch training with per-epoch balanced sampling."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateInputError, TrainingError
from ..labels import StSClass
from ..nn import functional as F
from ..nn.optim import SGD
from .checkpoint import save_checkpoint
from .inference import classify_inputs
from .network import Network
from .sampling import balanced_epoch_sampler


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 30
    batch: int = 8
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_accuracy: float
    heldout_accuracy: float | None = None


@dataclass
class TrainResult:
    network: Network
    log: list[EpochLog] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)

    def write_log(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps([asdict(e) for e in self.log], indent=1) + "\n")
        return path


def _targets(labels) -> np.ndarray:
    return np.array([StSClass(l).index for l in labels], dtype=np.int64)


def balanced_accuracy(probs, targets) -> float:
    pred = probs.argmax(axis=1)
    recalls = [np.mean(pred[targets == c] == c) for c in range(probs.shape[1]) if np.any(targets == c)]
    return float(np.mean(recalls))


def train(net: Network, inputs: np.ndarray, labels, config: TrainConfig = TrainConfig(), *,
          heldout: tuple[np.ndarray, list] | None = None, checkpoint_dir=None, progress=None) -> TrainResult:
    """Train ``net`` in place on prepared (N, T, H, W) inputs.

    Each epoch visits all transition clips plus a fresh Other subset. With a
    ``checkpoint_dir`` the parameters are saved after every completed epoch;
    a non-finite loss raises ``TrainingError`` and leaves the last good
    checkpoint untouched.
    """
    targets = _targets(labels)
    if len(set(targets.tolist())) < 3:
        raise DegenerateInputError("training data must contain all three classes")
    result = TrainResult(net)
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)
    sampler = balanced_epoch_sampler(labels, seed=config.seed)
    opt = SGD(net, lr=config.lr, momentum=config.momentum)
    for epoch in range(1, config.epochs + 1):
        order = next(sampler)
        losses, correct = [], 0
        for start in range(0, len(order), config.batch):
            idx = np.sort(order[start : start + config.batch])
            if len(idx) < 2:
                continue  # batch statistics need at least two clips
            x = inputs[idx].astype(net.dtype)
            y = targets[idx]
            net.zero_grad()
            probs = F.softmax(net.forward(x, train=True))
            loss = F.cross_entropy(probs, y)
            if not math.isfinite(loss):
                where = f"; last good checkpoint {result.checkpoints[-1]}" if result.checkpoints else ""
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}{where}")
            net.backward(F.softmax_cross_entropy_backward(probs, y).astype(net.dtype))
            opt.step()
            losses.append(loss * len(idx))
            correct += int(np.sum(probs.argmax(axis=1) == y))
        entry = EpochLog(epoch, float(np.sum(losses) / len(order)), correct / len(order))
        if heldout is not None:
            hx, hy = heldout
            entry.heldout_accuracy = balanced_accuracy(classify_inputs(net, hx), _targets(hy))
        result.log.append(entry)
        if ckdir is not None:
            result.checkpoints.append(save_checkpoint(net, ckdir / f"epoch_{epoch:03d}.ckpt", {"epoch": epoch}))
        if progress is not None:
            progress(entry)
    return result
