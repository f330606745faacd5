"""Per-epoch under-sampling of the majority class."""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import DegenerateInputError
from ..labels import StSClass


class UndersampleWarning(UserWarning):
    pass


def other_subset_size(n_up: int, n_down: int) -> int:
    # round half up; np.round would send 414.5 to 414
    return int(np.floor((n_up + n_down) / 2 + 0.5))


def balanced_epoch_sampler(labels, seed: int = 0):
    """Yield one shuffled index array per epoch, forever.

    Each epoch holds every Sit-to-Stand and Stand-to-Sit index plus a fresh
    draw (without replacement) of Other indices, as many as the mean of the
    two minority counts.
    """
    labels = [StSClass(l) for l in labels]
    idx = {c: np.array([i for i, l in enumerate(labels) if l == c], dtype=np.int64) for c in StSClass}
    up, down, other = idx[StSClass.SitToStand], idx[StSClass.StandToSit], idx[StSClass.Other]
    if len(up) == 0 or len(down) == 0:
        raise DegenerateInputError(f"need both transition classes, got {len(up)} and {len(down)}")
    want = other_subset_size(len(up), len(down))
    if want > len(other):
        warnings.warn(f"only {len(other)} Other samples for a subset of {want}; using all", UndersampleWarning)
        want = len(other)
    minority = np.concatenate([up, down])
    rng = np.random.default_rng(seed)
    while True:
        chosen = rng.choice(other, size=want, replace=False) if want < len(other) else other
        epoch = np.concatenate([minority, chosen])
        rng.shuffle(epoch)
        yield epoch
