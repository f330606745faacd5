"""Label files and loading of labelled clips from a house directory.

A house directory holds ``streams/<track_id>/`` silhouette streams,
``tracks/<track_id>.csv`` box tracks and ``labels.csv``
(``clip_id,t_start,t_end,label``). Clip ids are ``<track_id>#<window>``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .ingest import Clip, load_bbox_track, load_silhouette_stream, segment_clips
from .labels import StSClass

LABEL_HEADER = ["clip_id", "t_start", "t_end", "label"]


def write_labels(path, rows) -> Path:
    """``rows`` are ``(clip_id, t_start, t_end, StSClass)`` tuples."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for cid, t0, t1, label in rows:
            w.writerow([cid, repr(float(t0)), repr(float(t1)), StSClass(label).value])
    return path


def read_labels(path) -> list[tuple[str, float, float, StSClass]]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != LABEL_HEADER:
        raise FormatError(f"{path}:1: expected header {','.join(LABEL_HEADER)}")
    out = []
    for lineno, r in enumerate(rows[1:], 2):
        if len(r) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(r)}")
        try:
            out.append((r[0], float(r[1]), float(r[2]), StSClass.parse(r[3])))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def track_of(clip: str) -> str:
    return clip.rsplit("#", 1)[0]


@dataclass
class LabelledClips:
    clips: list[Clip]
    labels: list[StSClass]

    def __len__(self):
        return len(self.clips)


def house_tracks(root) -> list[str]:
    return sorted(p.stem for p in (Path(root) / "tracks").glob("*.csv"))


def load_clips(root, track_ids=None) -> list[Clip]:
    root = Path(root)
    ids = house_tracks(root) if track_ids is None else track_ids
    clips = []
    for tid in ids:
        track = load_bbox_track(root / "tracks" / f"{tid}.csv", track_id=tid)
        clips.extend(segment_clips(load_silhouette_stream(root / "streams" / tid), track))
    return clips


def load_house(root, labels_file=None) -> LabelledClips:
    """Segment every labelled track of a house and attach its labels."""
    root = Path(root)
    labels = read_labels(labels_file or root / "labels.csv")
    by_id = {cid: lab for cid, _, _, lab in labels}
    tracks = sorted({track_of(cid) for cid in by_id})
    clips = [c for c in load_clips(root, tracks) if c.clip_id in by_id]
    return LabelledClips(clips, [by_id[c.clip_id] for c in clips])


def clip_tensor(clips: list[Clip]) -> np.ndarray:
    return np.stack([c.frames for c in clips])
