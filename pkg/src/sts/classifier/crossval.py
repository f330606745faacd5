"""Leave-one-house-out cross-validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluation import ConfusionMatrix3, confusion_and_accuracy
from .inference import argmax_class, classify_inputs
from .network import Network, NetworkConfig
from .training import TrainConfig, train


@dataclass
class HouseData:
    name: str
    inputs: np.ndarray  # prepared (N, T, H, W)
    labels: list


@dataclass
class FoldResult:
    held_out: str
    confusion: ConfusionMatrix3
    recalls: dict
    overall: float
    log: list
    network: Network | None = None  # the model trained without this house


@dataclass
class CrossValidation:
    folds: list[FoldResult]

    @property
    def mean_overall(self) -> float:
        return float(np.mean([f.overall for f in self.folds]))


def cross_validate(houses: list[HouseData], net_config: NetworkConfig, train_config: TrainConfig = TrainConfig(),
                   *, seed: int = 0, dtype=np.float32, progress=None) -> CrossValidation:
    if len(houses) < 2:
        raise ValueError(f"leave-one-house-out needs at least 2 houses, got {len(houses)}")
    folds = []
    for k, held in enumerate(houses):
        rest = [h for h in houses if h is not held]
        x = np.concatenate([h.inputs for h in rest])
        y = [l for h in rest for l in h.labels]
        net = Network(net_config, seed=seed + k, dtype=dtype)
        res = train(net, x, y, train_config, progress=progress)
        pred = [argmax_class(p) for p in classify_inputs(net, held.inputs)]
        cm, recalls, overall = confusion_and_accuracy(held.labels, pred, warn=True)
        folds.append(FoldResult(held.name, cm, recalls, overall, res.log, net))
    return CrossValidation(folds)
