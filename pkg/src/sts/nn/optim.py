"""SGD with classical momentum."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingError


class SGD:
    def __init__(self, layer, lr: float = 0.01, momentum: float = 0.9):
        self.layer, self.lr, self.momentum = layer, lr, momentum
        self.velocity = {name: np.zeros_like(p) for name, p, _ in layer.named_params()}

    def step(self):
        sgd_step(list(self.layer.named_params()), self.velocity, self.lr, self.momentum)


def sgd_step(named, velocity: dict, lr: float, momentum: float) -> None:
    """In-place update ``v <- mu*v - lr*g; p <- p + v`` for ``(name, param, grad)`` triples.

    All gradients are checked before anything is written, so a failing step
    leaves parameters and velocities untouched.
    """
    for name, p, g in named:
        if g.shape != p.shape:
            raise TrainingError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in layer {name}")
    for name, p, g in named:
        v = velocity.setdefault(name, np.zeros_like(p))
        v *= momentum
        v -= lr * g
        p += v
