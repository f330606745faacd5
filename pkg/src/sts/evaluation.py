"""Classification metrics and the box-versus-reference speed comparison."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError, ShapeError
from .ingest import BBox3DTrack
from .kinematics import SavgolConfig, speed_of_ascent, speed_series, vertical_speed
from .labels import CLASS_ORDER, StSClass
from .trend import pearson

CURVE_POINTS = 101


class UndefinedClassWarning(UserWarning):
    pass


@dataclass
class ConfusionMatrix3:
    counts: np.ndarray  # rows truth, columns prediction

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def recalls(self) -> dict[StSClass, float | None]:
        rows = self.counts.sum(axis=1)
        return {c: (float(self.counts[i, i] / rows[i]) if rows[i] else None) for i, c in enumerate(CLASS_ORDER)}

    def overall(self) -> float:
        defined = [r for r in self.recalls().values() if r is not None]
        return float(np.mean(defined)) if defined else float("nan")

    def false_positive_rate(self) -> float:
        """Share of Other clips predicted as either transition class."""
        other = self.counts[2]
        return float((other[0] + other[1]) / other.sum()) if other.sum() else float("nan")

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["truth\\predicted"] + [c.value for c in CLASS_ORDER])
            for c, row in zip(CLASS_ORDER, self.counts):
                w.writerow([c.value] + [int(v) for v in row])
        return path

    @classmethod
    def read_csv(cls, path) -> "ConfusionMatrix3":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) != 4 or rows[0][1:] != [c.value for c in CLASS_ORDER] or \
                [r[0] for r in rows[1:]] != [c.value for c in CLASS_ORDER]:
            raise FormatError(f"{path}: not a 3-class confusion matrix")
        return cls(np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64))


def confusion_and_accuracy(truth, predicted, *, warn: bool = False):
    """Return ``(matrix, recalls, overall)``.

    ``overall`` is the unweighted mean of the per-class recalls; a class
    absent from ``truth`` has recall ``None`` and is left out of the mean.
    """
    if len(truth) != len(predicted):
        raise ShapeError(f"{len(truth)} truth labels vs {len(predicted)} predictions")
    counts = np.zeros((3, 3), dtype=np.int64)
    ti = np.array([StSClass(t).index for t in truth], dtype=np.int64)
    pi = np.array([StSClass(p).index for p in predicted], dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    cm = ConfusionMatrix3(counts)
    recalls = cm.recalls()
    missing = [c.value for c, r in recalls.items() if r is None]
    if missing and warn:
        warnings.warn(f"no ground-truth samples for {', '.join(missing)}; excluded from the mean",
                      UndefinedClassWarning)
    return cm, recalls, cm.overall()


# ---------------------------------------------------------------- estimator comparison


@dataclass
class PointTrack:
    """Time-stamped 3D points, such as a centre-of-gravity trajectory."""

    times: np.ndarray
    points: np.ndarray  # (n, 3) metres


@dataclass
class Transition:
    estimate: BBox3DTrack
    reference: PointTrack
    t_start: float
    t_end: float
    direction: StSClass = StSClass.SitToStand


@dataclass
class ComparisonReport:
    n_transitions: int
    bias: float
    bias_percent: float
    pearson_r: float
    v_estimate: np.ndarray
    v_reference: np.ndarray
    tau: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, CURVE_POINTS))
    curve_estimate: np.ndarray | None = None
    curve_reference: np.ndarray | None = None

    @property
    def curve_peak_difference_percent(self) -> float:
        """Relative difference of the two mean-curve maxima."""
        return float((self.curve_estimate.max() - self.curve_reference.max()) / self.curve_reference.max() * 100)

    def summary(self) -> dict:
        return {"n": self.n_transitions, "bias": self.bias, "bias_percent": self.bias_percent,
                "pearson_r": self.pearson_r}

    def write(self, out_dir, ids=None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ids = ids or [str(i) for i in range(self.n_transitions)]
        with open(out / "transitions.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["transition", "v_soa_estimate", "v_soa_reference"])
            for i, a, b in zip(ids, self.v_estimate, self.v_reference):
                w.writerow([i, repr(float(a)), repr(float(b))])
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=1, sort_keys=True) + "\n")
        for name, curve in (("estimate", self.curve_estimate), ("reference", self.curve_reference)):
            with open(out / f"curve_{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["tau", "v"])
                for t, v in zip(self.tau, curve):
                    w.writerow([repr(float(t)), repr(float(v))])
        return out


def _normalized_curve(vs, t_start, t_end, grid):
    inside = (vs.timestamps >= t_start) & (vs.timestamps <= t_end)
    tau = (vs.timestamps[inside] - t_start) / (t_end - t_start)
    return np.interp(grid, tau, vs.v[inside])


def compare_estimators(transitions: list[Transition], config: SavgolConfig = SavgolConfig()) -> ComparisonReport:
    if len(transitions) < 2:
        raise ShapeError(f"need at least 2 transitions, got {len(transitions)}")
    grid = np.linspace(0.0, 1.0, CURVE_POINTS)
    va, vb, ca, cb = [], [], [], []
    for k, tr in enumerate(transitions):
        if not tr.t_end > tr.t_start:
            raise IntegrityError(f"transition {k}: t_end {tr.t_end} not after t_start {tr.t_start}")
        sa = vertical_speed(tr.estimate, tr.direction, config)
        sb = speed_series(tr.reference.times, np.asarray(tr.reference.points)[:, 1], tr.direction, config,
                          name=f"reference {k}")
        va.append(speed_of_ascent(sa, tr.t_start, tr.t_end).v_soa)
        vb.append(speed_of_ascent(sb, tr.t_start, tr.t_end).v_soa)
        ca.append(_normalized_curve(sa, tr.t_start, tr.t_end, grid))
        cb.append(_normalized_curve(sb, tr.t_start, tr.t_end, grid))
    va, vb = np.array(va), np.array(vb)
    bias = float(np.mean(va - vb))
    return ComparisonReport(len(transitions), bias, bias / float(np.mean(vb)) * 100.0, pearson(va, vb),
                            va, vb, grid, np.mean(ca, axis=0), np.mean(cb, axis=0))
