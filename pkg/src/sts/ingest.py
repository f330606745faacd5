"""Readers and writers for silhouette streams, box tracks and skeletons, plus
the crop/resize and 10-second clip segmentation used ahead of the classifier.

On-disk formats
---------------
* silhouette stream: a directory holding ``manifest.jsonl`` (one
  ``{"t", "file", "w", "h"}`` object per frame) and one binary PBM (P4) file
  per frame;
* box track: CSV ``t,x1,y1,z1,x2,y2,z2``;
* skeleton: a header of joint names, then ``t`` and x,y,z per joint per row.

Index 1 of a box is the right/top/front corner and index 2 the
left/bottom/back one, so ``y1`` is the top edge.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, FormatError, IntegrityError

log = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
BOX_HEADER = "t,x1,y1,z1,x2,y2,z2"
CLIP_SECONDS = 10.0
CLIP_FRAMES = 100
CLIP_SIZE = 100


class GapWarning(UserWarning):
    """A clip window contained no source frames and was skipped."""


@dataclass
class SilhouetteFrame:
    timestamp: float
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool, 1 = person

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise IntegrityError(f"frame size must be positive, got {self.width}x{self.height}")
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise IntegrityError(f"mask shape {self.bits.shape} does not match {self.height}x{self.width}")

    def extent(self) -> tuple[int, int, int, int]:
        """Pixel box ``(x0, y0, x1, y1)`` (exclusive ends) of the foreground; whole frame if empty."""
        rows = np.flatnonzero(self.bits.any(axis=1))
        if rows.size == 0:
            return 0, 0, self.width, self.height
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


@dataclass(frozen=True)
class BBox3D:
    timestamp: float
    x1: float
    y1: float
    z1: float
    x2: float
    y2: float
    z2: float

    def __post_init__(self):
        if not self.y1 >= self.y2:
            raise IntegrityError(f"box at t={self.timestamp} has top y1={self.y1} below bottom y2={self.y2}")

    def row(self) -> tuple[float, ...]:
        return (self.timestamp, self.x1, self.y1, self.z1, self.x2, self.y2, self.z2)


@dataclass
class BBox3DTrack:
    track_id: str
    boxes: list[BBox3D]

    def __post_init__(self):
        t = self.times
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise IntegrityError(f"track {self.track_id}: timestamp at index {i} ({t[i]}) is not increasing")

    def __len__(self):
        return len(self.boxes)

    @property
    def times(self) -> np.ndarray:
        return np.array([b.timestamp for b in self.boxes], dtype=float)

    @property
    def y_top(self) -> np.ndarray:
        return np.array([b.y1 for b in self.boxes], dtype=float)

    def window(self, t_start: float, t_end: float) -> "BBox3DTrack":
        """Boxes with ``t_start <= t <= t_end``."""
        return BBox3DTrack(self.track_id, [b for b in self.boxes if t_start <= b.timestamp <= t_end])


@dataclass
class SkeletonSequence:
    joint_names: list[str]
    frames: np.ndarray  # (n_frames, n_joints, 3) meters
    frame_rate: float
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise IntegrityError(f"skeleton frames must be (n, joints, 3), got {self.frames.shape}")
        if self.frames.shape[1] != len(self.joint_names):
            raise IntegrityError(
                f"skeleton has {len(self.joint_names)} joint names but {self.frames.shape[1]} joints per frame"
            )
        if not self.frame_rate > 0:
            raise IntegrityError(f"frame rate must be positive, got {self.frame_rate}")
        if self.timestamps is None:
            self.timestamps = np.arange(len(self.frames)) / self.frame_rate


@dataclass
class Clip:
    track_id: str
    index: int
    t_start: float
    t_end: float
    frames: np.ndarray  # (100, 100, 100) uint8, time x height x width
    source_boxes: list[BBox3D] = field(default_factory=list)

    @property
    def clip_id(self) -> str:
        return clip_id(self.track_id, self.index)

    def track(self) -> BBox3DTrack:
        return BBox3DTrack(self.track_id, list(self.source_boxes))


def clip_id(track_id: str, index: int) -> str:
    return f"{track_id}#{index}"


# ---------------------------------------------------------------- PBM


def write_pbm(path: Path, bits: np.ndarray) -> None:
    h, w = bits.shape
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(np.packbits(bits.astype(bool), axis=1).tobytes())


def read_pbm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
        if pos >= len(data):
            break
    if len(tokens) < 3 or tokens[0] != b"P4":
        raise FormatError(f"{path}: not a binary PBM (P4) file")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1  # single whitespace after the height
    row_bytes = (w + 7) // 8
    raw = np.frombuffer(data, dtype=np.uint8, count=row_bytes * h, offset=pos)
    return np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w].astype(bool)


# ---------------------------------------------------------------- silhouette streams


def write_silhouette_stream(path, frames: Iterable[SilhouetteFrame]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, fr in enumerate(frames):
        name = f"{i:06d}.pbm"
        write_pbm(path / name, fr.bits)
        lines.append(json.dumps({"t": float(fr.timestamp), "file": name, "w": fr.width, "h": fr.height}))
    (path / MANIFEST).write_text("".join(line + "\n" for line in lines))
    return path


def load_silhouette_stream(path) -> Iterator[SilhouetteFrame]:
    """Lazily yield frames in manifest order.

    The manifest is validated up front; bitmaps are read one at a time, so
    memory use does not grow with the stream length.
    """
    path = Path(path)
    manifest = path / MANIFEST
    if not manifest.is_file():
        raise FormatError(f"{path}: missing {MANIFEST}")
    entries = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            e = json.loads(line)
            entries.append((float(e["t"]), str(e["file"]), int(e["w"]), int(e["h"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{manifest}:{lineno}: bad manifest entry ({exc})") from None
    for i in range(1, len(entries)):
        if not entries[i][0] > entries[i - 1][0]:
            raise IntegrityError(f"{manifest}: timestamp at index {i} ({entries[i][0]}) is not increasing")
    return _iter_frames(path, entries)


def _iter_frames(path: Path, entries):
    for t, name, w, h in entries:
        file = path / name
        if not file.is_file():
            raise IntegrityError(f"{path}: manifest references missing bitmap {name}")
        bits = read_pbm(file)
        if bits.shape != (h, w):
            raise IntegrityError(f"{file}: bitmap is {bits.shape[1]}x{bits.shape[0]}, manifest says {w}x{h}")
        yield SilhouetteFrame(t, w, h, bits)


# ---------------------------------------------------------------- box tracks


def write_bbox_track(path, track: BBox3DTrack) -> Path:
    path = Path(path)
    rows = [BOX_HEADER] + [",".join(repr(float(v)) for v in b.row()) for b in track.boxes]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    return path


def load_bbox_track(path, track_id: str | None = None) -> BBox3DTrack:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != BOX_HEADER:
        raise FormatError(f"{path}:1: expected header {BOX_HEADER!r}")
    boxes = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 7:
                raise ValueError(f"{len(parts)} fields")
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: unparsable row ({exc})") from None
        try:
            boxes.append(BBox3D(*vals))
        except IntegrityError as exc:
            raise IntegrityError(f"{path}:{lineno}: {exc}") from None
    return BBox3DTrack(track_id if track_id is not None else path.stem, boxes)


# ---------------------------------------------------------------- skeletons


def write_skeleton(path, seq: SkeletonSequence) -> Path:
    path = Path(path)
    rows = [",".join(seq.joint_names)]
    for t, fr in zip(seq.timestamps, seq.frames):
        rows.append(",".join([repr(float(t))] + [repr(float(v)) for v in fr.reshape(-1)]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    return path


def load_skeleton(path) -> SkeletonSequence:
    path = Path(path)
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    if not lines:
        raise FormatError(f"{path}: empty skeleton file")
    names = [n.strip() for n in lines[0].split(",")]
    ts, frames = [], []
    for lineno, line in enumerate(lines[1:], 2):
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: unparsable row ({exc})") from None
        if len(vals) != 1 + 3 * len(names):
            raise IntegrityError(f"{path}:{lineno}: expected {1 + 3 * len(names)} values, got {len(vals)}")
        ts.append(vals[0])
        frames.append(np.reshape(vals[1:], (len(names), 3)))
    ts = np.array(ts)
    rate = 1.0 / float(np.median(np.diff(ts))) if len(ts) > 1 else 1.0
    return SkeletonSequence(names, np.array(frames).reshape(len(ts), len(names), 3), rate, ts)


def bbox_from_skeleton(seq: SkeletonSequence, track_id: str = "skeleton") -> BBox3DTrack:
    """Axis-aligned box around all joints of every frame (y1 = highest joint)."""
    if seq.frames.shape[1] == 0:
        raise IntegrityError("skeleton frame has no joints")
    lo = seq.frames.min(axis=1)
    hi = seq.frames.max(axis=1)
    boxes = [
        BBox3D(float(t), float(h[0]), float(h[1]), float(h[2]), float(l[0]), float(l[1]), float(l[2]))
        for t, l, h in zip(seq.timestamps, lo, hi)
    ]
    return BBox3DTrack(track_id, boxes)


def cg_from_skeleton(seq: SkeletonSequence, iliac_joints: Sequence[str]) -> np.ndarray:
    """Per-frame mean of the four iliac-spine joints, shape (n_frames, 3)."""
    missing = [j for j in iliac_joints if j not in seq.joint_names]
    if missing:
        raise ConfigurationError(f"joints {missing} not in skeleton; available: {seq.joint_names}")
    idx = [seq.joint_names.index(j) for j in iliac_joints]
    return seq.frames[:, idx, :].mean(axis=1)


# ---------------------------------------------------------------- crop / resize / segment


def crop_and_resize(frame: SilhouetteFrame, box2d, out: int = CLIP_SIZE) -> np.ndarray:
    """Crop ``box2d = (x0, y0, x1, y1)`` (exclusive ends), pad it to a square of
    background centred on the box, and nearest-neighbour resample to ``out``x``out``.
    """
    x0, y0, x1, y1 = (int(v) for v in box2d)
    ix0, iy0 = max(x0, 0), max(y0, 0)
    ix1, iy1 = min(x1, frame.width), min(y1, frame.height)
    if ix1 <= ix0 or iy1 <= iy0:
        raise DegenerateInputError(f"box {box2d} does not intersect the {frame.width}x{frame.height} frame")
    bw, bh = x1 - x0, y1 - y0
    side = max(bw, bh)
    sx0 = x0 - (side - bw) // 2
    sy0 = y0 - (side - bh) // 2
    canvas = np.zeros((side, side), dtype=np.uint8)
    canvas[iy0 - sy0 : iy1 - sy0, ix0 - sx0 : ix1 - sx0] = frame.bits[iy0:iy1, ix0:ix1]
    src = ((2 * np.arange(out) + 1) * side) // (2 * out)
    return canvas[np.ix_(src, src)]


def clip_window(track: BBox3DTrack, index: int, seconds: float = CLIP_SECONDS) -> tuple[float, float]:
    """Closed time interval covered by window ``index`` of ``track``."""
    start = float(track.times[0]) + index * seconds
    return start, start + seconds


def _coverage_end(times: np.ndarray) -> float:
    if len(times) < 2:
        return float(times[-1])
    return float(times[-1] + np.median(np.diff(times)))


def segment_clips(
    frames: Iterable[SilhouetteFrame],
    track: BBox3DTrack,
    *,
    seconds: float = CLIP_SECONDS,
    samples: int = CLIP_FRAMES,
    size: int = CLIP_SIZE,
) -> list[Clip]:
    """Cut a stream into consecutive, non-overlapping windows from the track's first timestamp.

    Each window is resampled onto ``samples`` uniform instants, each taking
    the in-window source frame nearest in time (earliest on ties). A trailing
    partial window is dropped; a window without frames is skipped with a
    :class:`GapWarning`.
    """
    times = track.times
    if len(times) == 0:
        return []
    t0 = float(times[0])
    n_windows = int(math.floor((_coverage_end(times) - t0) / seconds + 1e-9))
    step = seconds / samples
    buckets: list[list[SilhouetteFrame]] = [[] for _ in range(n_windows)]
    for fr in frames:
        k = int(math.floor((fr.timestamp - t0) / seconds + 1e-12))
        if 0 <= k < n_windows:
            buckets[k].append(fr)
    clips = []
    for k, bucket in enumerate(buckets):
        w_start, w_end = clip_window(track, k, seconds)
        if not bucket:
            warnings.warn(GapWarning(f"track {track.track_id}: no frames in [{w_start}, {w_end}), clip skipped"))
            log.warning("gap in track %s at window %d", track.track_id, k)
            continue
        ft = np.array([f.timestamp for f in bucket])
        sample_t = w_start + step * np.arange(samples)
        nearest = np.abs(sample_t[:, None] - ft[None, :]).argmin(axis=1)
        tensor = np.empty((samples, size, size), dtype=np.uint8)
        cache: dict[int, np.ndarray] = {}
        for j, idx in enumerate(nearest):
            if idx not in cache:
                fr = bucket[idx]
                cache[idx] = crop_and_resize(fr, fr.extent(), size)
            tensor[j] = cache[idx]
        boxes = [b for b in track.boxes if w_start <= b.timestamp <= w_end]
        clips.append(Clip(track.track_id, k, w_start, w_end, tensor, boxes))
    return clips
