"""Synthetic motions with closed-form ground truth, silhouette rendering, and
multi-week house datasets.

Transitions use a logistic top-edge profile
``y_top(t) = base + A / (1 + exp(-k (t - t0)))`` whose steepest slope is
``A k / 4`` at ``t0``, which makes the speed of ascent exactly known.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .ingest import BBox3D, BBox3DTrack, SilhouetteFrame, clip_id, write_bbox_track, write_silhouette_stream
from .labels import StSClass

KINDS = ("SitToStand", "StandToSit", "Walk", "Reach", "Idle")
TRANSITION_KINDS = ("SitToStand", "StandToSit")
GROUND_TRUTH_HEADER = ["clip_id", "kind", "v_soa_true", "peak_time_true", "week_index"]
SECONDS_PER_WEEK = 7 * 86400.0
DAYS_PER_MONTH = 365.25 / 12

WALK_BOB = 0.015  # m, vertical head bob while walking
WALK_STEP_HZ = 1.8


def kind_label(kind: str) -> StSClass:
    return StSClass[kind] if kind in TRANSITION_KINDS else StSClass.Other


@dataclass(frozen=True)
class MotionParams:
    kind: str = "SitToStand"
    amplitude: float = 0.45  # m, seated-to-standing rise of the top edge
    rate: float = 4.0  # 1/s
    midpoint: float = 5.0  # s, relative to the motion start
    base_height: float = 1.25  # m, top edge when seated
    noise_sigma: float = 0.0  # m, added to the box top edge only
    seed: int = 0
    idle_seated: bool = True
    walk_speed: float = 0.3  # m/s

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.kind in TRANSITION_KINDS + ("Reach",) and not (self.amplitude > 0 and self.rate > 0):
            raise ValueError("transition motions need amplitude > 0 and rate > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def reach_width(self) -> float:
        # gaussian dip width chosen so the recovery slope is comparable to A k / 4
        return 2.4 / self.rate


@dataclass(frozen=True)
class MotionTruth:
    v_soa_true: float
    peak_time_true: float


@dataclass
class Motion:
    params: MotionParams
    track: BBox3DTrack
    truth: MotionTruth
    t_offset: float = 0.0

    def clean_top(self, t) -> np.ndarray:
        return clean_top(self.params, np.asarray(t, dtype=float) - self.t_offset)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def clean_top(p: MotionParams, t) -> np.ndarray:
    """Noise-free top-edge height at motion-relative times ``t``."""
    t = np.asarray(t, dtype=float)
    stand = p.base_height + p.amplitude
    if p.kind == "SitToStand":
        return p.base_height + p.amplitude * _sigmoid(p.rate * (t - p.midpoint))
    if p.kind == "StandToSit":
        return p.base_height + p.amplitude * _sigmoid(-p.rate * (t - p.midpoint))
    if p.kind == "Walk":
        return stand + WALK_BOB * np.sin(2 * np.pi * WALK_STEP_HZ * t)
    if p.kind == "Reach":
        return stand - p.amplitude * np.exp(-0.5 * ((t - p.midpoint) / p.reach_width) ** 2)
    return np.full_like(t, p.base_height if p.idle_seated else stand)


def _truth(p: MotionParams, duration: float) -> MotionTruth:
    if p.kind in TRANSITION_KINDS:
        return MotionTruth(p.amplitude * p.rate / 4.0, p.midpoint)
    if p.kind == "Walk":
        return MotionTruth(WALK_BOB * 2 * np.pi * WALK_STEP_HZ, 0.0)
    if p.kind == "Reach":
        w = p.reach_width
        return MotionTruth(p.amplitude * math.exp(-0.5) / w, p.midpoint + w)
    return MotionTruth(0.0, 0.0)


def _pose(p: MotionParams, t: np.ndarray) -> dict[str, np.ndarray]:
    """Posture descriptors: stand fraction, forward bend, gait phase, horizontal position."""
    top = clean_top(p, t)
    stand = np.ones_like(t)
    bend = np.zeros_like(t)
    phase = np.zeros_like(t)
    x = np.zeros_like(t)
    if p.kind in TRANSITION_KINDS:
        stand = np.clip((top - p.base_height) / p.amplitude, 0.0, 1.0)
    elif p.kind == "Reach":
        bend = np.clip((p.base_height + p.amplitude - top) / p.amplitude, 0.0, 1.0)
    elif p.kind == "Walk":
        phase = 2 * np.pi * WALK_STEP_HZ * t / 2
        x = p.walk_speed * (t - p.midpoint)
    elif p.idle_seated:
        stand = np.zeros_like(t)
    return {"top": top, "stand": stand, "bend": bend, "phase": phase, "x": x}


def generate_motion(params: MotionParams, frame_rate: float = 10.0, duration: float = 10.0, *,
                    t_offset: float = 0.0, track_id: str = "motion", depth: float = 4.0) -> Motion:
    """Sample a box track at ``frame_rate`` for ``duration`` seconds (start ``t_offset``)."""
    n = int(round(duration * frame_rate))
    rel = np.arange(n) / frame_rate
    times = t_offset + rel
    pose = _pose(params, rel)
    rng = np.random.default_rng(params.seed)
    top = pose["top"] + (rng.normal(0.0, params.noise_sigma, n) if params.noise_sigma > 0 else 0.0)
    # seated bodies reach further forward (knees), bending ones too
    half_depth = 0.15 + 0.15 * (1 - pose["stand"]) + 0.25 * pose["bend"]
    boxes = [
        BBox3D(float(times[i]), float(pose["x"][i] + 0.25), float(top[i]), float(depth - half_depth[i]),
               float(pose["x"][i] - 0.25), 0.0, float(depth + half_depth[i]))
        for i in range(n)
    ]
    truth = _truth(params, duration)
    truth = MotionTruth(truth.v_soa_true, truth.peak_time_true + t_offset)
    return Motion(params, BBox3DTrack(track_id, boxes), truth, t_offset)


# ---------------------------------------------------------------- rendering


@dataclass(frozen=True)
class Camera:
    width: int = 160
    height: int = 120
    focal: float = 140.0  # px
    distance: float = 4.0  # m from the person
    eye_height: float = 1.0  # m

    def project(self, x, y):
        s = self.focal / self.distance
        return self.width / 2 + s * x, self.height / 2 + s * (self.eye_height - y)


def _rot(theta):
    return np.array([np.sin(theta), np.cos(theta)])


def _figure(stand, bend, phase, walking=False):
    """Limb list [(p, q, radius)] for a side-view figure facing +x, plus head."""
    sit_hip, stand_hip = np.array([-0.12, 0.47]), np.array([0.0, 0.92])
    sit_knee, stand_knee = np.array([0.30, 0.50]), np.array([0.0, 0.50])
    sit_ankle, stand_ankle = np.array([0.32, 0.08]), np.array([0.0, 0.08])
    hip = sit_hip + stand * (stand_hip - sit_hip)
    knee = sit_knee + stand * (stand_knee - sit_knee)
    ankle = sit_ankle + stand * (stand_ankle - sit_ankle)
    hip = hip + bend * np.array([-0.15, -0.10])
    knee = knee + bend * np.array([0.12, -0.04])
    lean = np.radians(40.0) * 4 * stand * (1 - stand) + np.radians(85.0) * bend
    shoulder = hip + 0.52 * _rot(lean)
    head = shoulder + 0.15 * _rot(0.8 * lean)
    limbs = [(hip, shoulder, 0.16)]
    if walking:
        for sgn in (1.0, -1.0):
            a = np.radians(22.0) * np.sin(phase) * sgn
            k = hip + 0.42 * np.array([np.sin(a), -np.cos(a)])
            sh = a - np.radians(15.0) * max(0.0, -np.sin(phase) * sgn)
            limbs += [(hip, k, 0.085), (k, k + 0.42 * np.array([np.sin(sh), -np.cos(sh)]), 0.06)]
        arm = np.radians(20.0) * np.sin(phase)
        limbs.append((shoulder, shoulder + 0.62 * np.array([-np.sin(arm), -np.cos(arm)]), 0.045))
    else:
        limbs += [(hip, knee, 0.085), (knee, ankle, 0.06)]
        # arms: resting on the lap when seated, hanging when standing, to the floor when bending
        arm = np.radians(-60.0) * (1 - stand) * (1 - bend) + lean * bend * 0.2
        hand = shoulder + 0.62 * np.array([np.sin(-arm) if stand < 1 else 0.0, -np.cos(arm)])
        limbs.append((shoulder, hand, 0.045))
    return limbs, (head, 0.11)


def _raster_ellipse(mask, c, a, b, ang):
    h, w = mask.shape
    r = max(a, b)
    u0, u1 = max(int(c[0] - r) - 1, 0), min(int(c[0] + r) + 2, w)
    v0, v1 = max(int(c[1] - r) - 1, 0), min(int(c[1] + r) + 2, h)
    if u1 <= u0 or v1 <= v0:
        return
    uu, vv = np.meshgrid(np.arange(u0, u1) + 0.5 - c[0], np.arange(v0, v1) + 0.5 - c[1])
    ca, sa = np.cos(ang), np.sin(ang)
    along = (uu * ca + vv * sa) / a
    across = (-uu * sa + vv * ca) / b
    mask[v0:v1, u0:u1] |= along * along + across * across <= 1.0


def render_frame(stand, bend, phase, x, top, camera: Camera, facing: float = 1.0, walking: bool = False) -> np.ndarray:
    limbs, (head, hr) = _figure(float(stand), float(bend), float(phase), walking)
    natural_top = max([head[1] + hr] + [max(p[1], q[1]) + r for p, q, r in limbs])
    sy = top / natural_top
    s = camera.focal / camera.distance
    mask = np.zeros((camera.height, camera.width), dtype=bool)

    def px(pt):
        return np.array(camera.project(x + facing * pt[0], pt[1] * sy))

    for p, q, r in limbs:
        P, Q = px(p), px(q)
        d = Q - P
        L = float(np.hypot(*d))
        ang = math.atan2(d[1], d[0]) if L > 0 else 0.0
        _raster_ellipse(mask, (P + Q) / 2, L / 2 + r * s, r * s, ang)
    hc = px(head)
    _raster_ellipse(mask, hc, hr * s, hr * s * sy, 0.0)
    return mask


def render_silhouette_clip(motion: Motion, camera: Camera = Camera()):
    """Rasterise the figure at every track timestamp.

    Returns ``(frames, boxes2d)`` where ``boxes2d`` are the foreground pixel
    extents ``(x0, y0, x1, y1)``.
    """
    times = motion.track.times
    pose = _pose(motion.params, times - motion.t_offset)
    facing = 1.0 if motion.params.seed % 2 == 0 else -1.0
    frames, boxes = [], []
    for i, t in enumerate(times):
        bits = render_frame(pose["stand"][i], pose["bend"][i], pose["phase"][i], pose["x"][i],
                            pose["top"][i], camera, facing, motion.params.kind == "Walk")
        fr = SilhouetteFrame(float(t), camera.width, camera.height, bits)
        frames.append(fr)
        boxes.append(fr.extent())
    return frames, boxes


# ---------------------------------------------------------------- houses


@dataclass
class HouseScenario:
    house_id: str = "house"
    duration_weeks: int = 1
    event_week: int | None = None
    weekly_v_soa_schedule: list[float] = field(default_factory=lambda: [0.4])
    # expected clips per week for Sit-to-Stand, Stand-to-Sit, Other
    class_mix: dict[str, float] = field(default_factory=lambda: {"Sit-to-Stand": 2, "Stand-to-Sit": 2, "Other": 6})
    seed: int = 0
    forced_counts: bool = False
    other_mix: dict[str, float] = field(default_factory=lambda: {"Walk": 1.0, "Reach": 1.0, "Idle": 1.0})
    noise_sigma: float = 0.003
    frame_rate: float = 10.0
    start_date: str = "2020-01-06"
    camera: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weekly_v_soa_schedule) != self.duration_weeks:
            raise ValueError(
                f"schedule has {len(self.weekly_v_soa_schedule)} weeks, duration is {self.duration_weeks}"
            )
        if any(v < 0 for v in self.class_mix.values()):
            raise ValueError("class_mix counts must be >= 0")
        for k in self.class_mix:
            StSClass.parse(k)

    @classmethod
    def from_dict(cls, d: dict) -> "HouseScenario":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known - {"version"}
        if extra:
            raise ValueError(f"unknown scenario keys: {sorted(extra)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return {"version": 1, **asdict(self)}

    @property
    def epoch(self) -> date:
        return date.fromisoformat(self.start_date)


def recovery_scenario(seed: int = 0, *, pre_weeks: int = 6, post_weeks: int = 16, plateau: float = 0.40,
                      drop_to: float = 0.25, slope_per_month: float = 0.04,
                      class_mix: dict[str, float] | None = None, house_id: str = "recovery") -> HouseScenario:
    """Pre-surgery plateau, a drop in the event week, then a linear recovery."""
    per_week = slope_per_month * 7 / DAYS_PER_MONTH
    schedule = [plateau] * pre_weeks + [drop_to + per_week * i for i in range(post_weeks)]
    return HouseScenario(
        house_id=house_id, duration_weeks=pre_weeks + post_weeks, event_week=pre_weeks,
        weekly_v_soa_schedule=[round(v, 6) for v in schedule],
        class_mix=class_mix or {"Sit-to-Stand": 6, "Stand-to-Sit": 6, "Other": 12}, seed=seed,
    )


def _draw_motion(kind: str, v_target: float, rng: np.random.Generator, noise: float, seed: int) -> MotionParams:
    # amplitudes keep k = 4 v / A below ~5 for realistic speeds, where an
    # 11-sample window at 10 Hz still resolves the peak
    amp = float(rng.uniform(0.45, 0.60))
    base = float(rng.uniform(1.15, 1.30))
    mid = float(rng.uniform(3.5, 6.5))
    if kind in TRANSITION_KINDS:
        rate = 4.0 * max(v_target, 0.05) / amp
    else:
        rate = float(rng.uniform(2.0, 5.0))
    return MotionParams(kind=kind, amplitude=amp, rate=rate, midpoint=mid, base_height=base,
                        noise_sigma=noise, seed=seed, idle_seated=bool(rng.integers(2)),
                        walk_speed=float(rng.uniform(0.2, 0.4)) * (1 if rng.integers(2) else -1))


@dataclass
class HouseDataset:
    root: Path
    labels: Path
    ground_truth: Path
    n_clips: int


def generate_house(scenario: HouseScenario, out_dir) -> HouseDataset:
    """Write streams, tracks, ``labels.csv`` and ``ground_truth.csv`` under ``out_dir``."""
    from .dataset import write_labels  # local import: dataset depends on ingest only

    root = Path(out_dir)
    (root / "streams").mkdir(parents=True, exist_ok=True)
    (root / "tracks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(scenario.seed)
    camera = Camera(**scenario.camera)
    other_kinds = sorted(scenario.other_mix)
    other_p = np.array([scenario.other_mix[k] for k in other_kinds], dtype=float)
    other_p /= other_p.sum() if other_p.sum() > 0 else 1.0
    label_rows, truth_rows = [], []
    for week in range(scenario.duration_weeks):
        kinds = []
        for label in (c.value for c in StSClass):
            mean = float(scenario.class_mix.get(label, 0))
            n = int(round(mean)) if scenario.forced_counts else int(rng.poisson(mean))
            for _ in range(n):
                if label == StSClass.Other.value:
                    kinds.append(other_kinds[int(rng.choice(len(other_kinds), p=other_p))])
                else:
                    kinds.append(StSClass.parse(label).name)
        offsets = np.sort(rng.choice(int(SECONDS_PER_WEEK // 20) - 1, size=len(kinds), replace=False)) * 20.0
        order = rng.permutation(len(kinds))
        for n, (kind, off) in enumerate(zip([kinds[i] for i in order], offsets)):
            track_id = f"{scenario.house_id}_w{week:03d}_{n:04d}"
            sched = scenario.weekly_v_soa_schedule[week]
            v_target = float(rng.normal(sched, 0.1 * sched))
            params = _draw_motion(kind, v_target, rng, scenario.noise_sigma, int(rng.integers(2**31)))
            t_offset = week * SECONDS_PER_WEEK + float(off)
            motion = generate_motion(params, scenario.frame_rate, 10.0, t_offset=t_offset, track_id=track_id)
            frames, _ = render_silhouette_clip(motion, camera)
            write_silhouette_stream(root / "streams" / track_id, frames)
            write_bbox_track(root / "tracks" / f"{track_id}.csv", motion.track)
            cid = clip_id(track_id, 0)
            label_rows.append((cid, t_offset, t_offset + 10.0, kind_label(kind)))
            truth_rows.append([cid, kind, repr(motion.truth.v_soa_true), repr(motion.truth.peak_time_true), week])
    write_labels(root / "labels.csv", label_rows)
    with open(root / "ground_truth.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUND_TRUTH_HEADER)
        w.writerows(truth_rows)
    (root / "scenario.json").write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n")
    return HouseDataset(root, root / "labels.csv", root / "ground_truth.csv", len(label_rows))


def read_ground_truth(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["v_soa_true"] = float(r["v_soa_true"])
        r["peak_time_true"] = float(r["peak_time_true"])
        r["week_index"] = int(r["week_index"])
    return rows
