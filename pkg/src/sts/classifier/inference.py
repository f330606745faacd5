"""Clip-level inference and the classification CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from ..ingest import CLIP_FRAMES, CLIP_SIZE, Clip
from ..labels import CLASS_ORDER, StSClass
from ..nn import functional as F
from .network import Network, NetworkConfig

CLASSIFICATION_HEADER = ["clip_id", "predicted", "p_sit_to_stand", "p_stand_to_sit", "p_other"]


@dataclass(frozen=True)
class ClipClassification:
    clip_id: str
    predicted: StSClass
    probabilities: tuple[float, float, float]


def argmax_class(p) -> StSClass:
    # np.argmax returns the first maximum, which is the declared class order
    return CLASS_ORDER[int(np.argmax(p))]


def _nearest_index(n_out: int, n_in: int) -> np.ndarray:
    return (2 * np.arange(n_out) + 1) * n_in // (2 * n_out)


def prepare_input(frames: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Nearest-neighbour resample a (T, H, W) binary clip to the network input grid."""
    frames = np.asarray(frames)
    if frames.shape != (CLIP_FRAMES, CLIP_SIZE, CLIP_SIZE):
        raise ShapeError(f"clip tensor must be {(CLIP_FRAMES, CLIP_SIZE, CLIP_SIZE)}, got {frames.shape}")
    t, h, w = config.input_shape
    out = frames
    if (t, h, w) != frames.shape:
        out = frames[np.ix_(_nearest_index(t, frames.shape[0]), _nearest_index(h, frames.shape[1]),
                            _nearest_index(w, frames.shape[2]))]
    return out.astype(np.uint8)


def prepare_batch(clips, config: NetworkConfig) -> np.ndarray:
    return np.stack([prepare_input(c.frames if isinstance(c, Clip) else c, config) for c in clips])


def classify_inputs(net: Network, inputs: np.ndarray, batch: int = 8) -> np.ndarray:
    """Class probabilities for already-prepared (N, T, H, W) inputs."""
    out = []
    for i in range(0, len(inputs), batch):
        out.append(F.softmax(net.forward(inputs[i : i + batch].astype(net.dtype), train=False).astype(np.float64)))
    return np.concatenate(out) if out else np.zeros((0, 3))


def classify_clip(net: Network, clip: Clip) -> ClipClassification:
    p = classify_inputs(net, prepare_input(clip.frames, net.config)[None])[0]
    return ClipClassification(clip.clip_id, argmax_class(p), tuple(float(v) for v in p))


def classify_clips(net: Network, clips: list[Clip], batch: int = 8) -> list[ClipClassification]:
    results = []
    for i in range(0, len(clips), batch):
        chunk = clips[i : i + batch]
        probs = classify_inputs(net, prepare_batch(chunk, net.config), batch)
        results += [ClipClassification(c.clip_id, argmax_class(p), tuple(float(v) for v in p))
                    for c, p in zip(chunk, probs)]
    return results


def write_classifications(path, results: list[ClipClassification]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLASSIFICATION_HEADER)
        for r in results:
            w.writerow([r.clip_id, r.predicted.value] + [repr(p) for p in r.probabilities])
    return path


def read_classifications(path) -> list[ClipClassification]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CLASSIFICATION_HEADER:
        raise FormatError(f"{path}: expected header {','.join(CLASSIFICATION_HEADER)}")
    out = []
    for lineno, r in enumerate(rows[1:], 2):
        try:
            out.append(ClipClassification(r[0], StSClass.parse(r[1]), (float(r[2]), float(r[3]), float(r[4]))))
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out
