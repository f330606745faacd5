"""File-based pipeline stages: classify, measure, trend and the end-to-end report.

Every stage reads the previous stage's files and writes its own, so each one
can be rerun or inspected on its own.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from .classifier.checkpoint import load_checkpoint
from .classifier.inference import ClipClassification, classify_clips, write_classifications
from .dataset import load_clips, read_labels, track_of
from .errors import DegenerateInputError, IntegrityError, NoVarianceError, StageError, StsError
from .evaluation import confusion_and_accuracy
from .ingest import clip_window, load_bbox_track
from .kinematics import StSMeasurement, measure_track, write_measurements
from .labels import StSClass
from .trend import TrendSeries, emit_trend_plot, fit_line, trend_correlation, weekly_aggregate

log = logging.getLogger(__name__)

SKIP_HEADER = ["clip_id", "reason"]


def oracle_classifications(labels_csv) -> list[ClipClassification]:
    """Stand-in classifier that returns the annotated label with probability 1."""
    out = []
    for cid, _, _, lab in read_labels(labels_csv):
        p = [0.0, 0.0, 0.0]
        p[lab.index] = 1.0
        out.append(ClipClassification(cid, lab, tuple(p)))
    return out


def classify_house(data_dir, model_path=None, *, oracle_labels=None) -> list[ClipClassification]:
    if oracle_labels is not None:
        return oracle_classifications(oracle_labels)
    net = load_checkpoint(model_path)
    return classify_clips(net, load_clips(data_dir))


def _clip_index(cid: str) -> int:
    return int(cid.rsplit("#", 1)[1])


def measure_house(data_dir, classifications: list[ClipClassification]):
    """Measure every clip classified as a transition.

    Returns ``(measurements, skipped)`` where ``skipped`` lists
    ``(clip_id, reason)`` for clips whose track segment could not be measured.
    """
    data_dir = Path(data_dir)
    tracks = {}
    measurements, skipped = [], []
    for c in sorted(classifications, key=lambda c: c.clip_id):
        if c.predicted == StSClass.Other:
            continue
        tid = track_of(c.clip_id)
        if tid not in tracks:
            tracks[tid] = load_bbox_track(data_dir / "tracks" / f"{tid}.csv", track_id=tid)
        track = tracks[tid]
        t0, t1 = clip_window(track, _clip_index(c.clip_id))
        try:
            measurements.append(measure_track(track.window(t0, t1), c.predicted, t0, t1))
        except (DegenerateInputError, IntegrityError) as exc:
            skipped.append((c.clip_id, str(exc)))
    return measurements, skipped


def write_skipped(path, skipped) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SKIP_HEADER)
        w.writerows(skipped)
    return path


@dataclass
class TrendStats:
    weeks: int
    r2: float | None
    r2_post_event: float | None
    slope_post_event_per_month: float | None
    rejected: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _safe_fit(trend: TrendSeries):
    try:
        return fit_line(trend)
    except (DegenerateInputError, NoVarianceError) as exc:
        log.warning("trend fit skipped: %s", exc)
        return None


def trend_stats(trend: TrendSeries) -> TrendStats:
    whole = _safe_fit(trend)
    post = _safe_fit(trend.after(trend.event_date)) if trend.event_date is not None else None
    return TrendStats(len(trend), whole.r2 if whole else None, post.r2 if post else None,
                      post.slope_per_month if post else None, trend.rejected)


def build_trend(measurements: list[StSMeasurement], epoch: date, event_date: date | None, out_dir,
                direction: StSClass = StSClass.SitToStand, stem: str = "trend") -> tuple[TrendSeries, TrendStats]:
    out = Path(out_dir)
    trend = weekly_aggregate(measurements, epoch, direction, event_date)
    emit_trend_plot(trend, out / f"{stem}.csv", "csv")
    emit_trend_plot(trend, out / f"{stem}.svg", "svg",
                    title=f"{'Speed of ascent' if direction == StSClass.SitToStand else 'Speed of descent'} per week")
    stats = trend_stats(trend)
    (out / f"{stem}_stats.json").write_text(json.dumps(stats.to_dict(), indent=1, sort_keys=True) + "\n")
    return trend, stats


def scenario_dates(data_dir) -> tuple[date | None, date | None]:
    """Epoch and event date recorded by the synthetic generator, when present."""
    path = Path(data_dir) / "scenario.json"
    if not path.exists():
        return None, None
    sc = json.loads(path.read_text())
    epoch = date.fromisoformat(sc["start_date"])
    event = epoch + timedelta(days=7 * sc["event_week"]) if sc.get("event_week") is not None else None
    return epoch, event


def run_report(data_dir, out_dir, *, model_path=None, oracle: bool = False, epoch: date | None = None,
               event_date: date | None = None, direction: StSClass = StSClass.SitToStand) -> dict:
    """Segment, classify, measure and aggregate one house; compare with the annotated labels if present."""
    data_dir, out = Path(data_dir), Path(out_dir)
    (out / "automatic").mkdir(parents=True, exist_ok=True)
    sc_epoch, sc_event = scenario_dates(data_dir)
    epoch = epoch or sc_epoch
    event_date = event_date or sc_event
    if epoch is None:
        raise DegenerateInputError("no epoch date given and no scenario.json to read it from")
    labels_csv = data_dir / "labels.csv"
    has_labels = labels_csv.exists()

    stage = "classify"
    try:
        results = classify_house(data_dir, model_path, oracle_labels=labels_csv if oracle else None)
        write_classifications(out / "automatic" / "classifications.csv", results)
        stage = "measure"
        auto_m, auto_skip = measure_house(data_dir, results)
        write_measurements(out / "automatic" / "measurements.csv", auto_m)
        write_skipped(out / "automatic" / "skipped.csv", auto_skip)
        stage = "trend"
        auto_trend, auto_stats = build_trend(auto_m, epoch, event_date, out / "automatic", direction)
        summary = {
            "n_clips": len(results),
            "n_measurements": len(auto_m),
            "n_skipped": len(auto_skip),
            "epoch": epoch.isoformat(),
            "event_date": event_date.isoformat() if event_date else None,
            "direction": direction.value,
            "trend": auto_stats.to_dict(),
            "accuracy": None,
            "manual_trend": None,
            "correlation": None,
        }
        if has_labels:
            stage = "evaluate"
            truth = {cid: lab for cid, _, _, lab in read_labels(labels_csv)}
            paired = [(truth[r.clip_id], r.predicted) for r in results if r.clip_id in truth]
            cm, recalls, overall = confusion_and_accuracy([a for a, _ in paired], [b for _, b in paired])
            cm.write_csv(out / "confusion.csv")
            summary["accuracy"] = {"overall": overall, "false_positive_rate": cm.false_positive_rate(),
                                   "recalls": {c.value: r for c, r in recalls.items()}}
            (out / "manual").mkdir(exist_ok=True)
            manual_m, manual_skip = measure_house(data_dir, oracle_classifications(labels_csv))
            write_measurements(out / "manual" / "measurements.csv", manual_m)
            write_skipped(out / "manual" / "skipped.csv", manual_skip)
            manual_trend, manual_stats = build_trend(manual_m, epoch, event_date, out / "manual", direction)
            summary["manual_trend"] = manual_stats.to_dict()
            try:
                summary["correlation"] = trend_correlation(manual_trend, auto_trend)
            except (DegenerateInputError, NoVarianceError) as exc:
                log.warning("trend correlation skipped: %s", exc)
    except (StsError, OSError) as exc:
        raise StageError(stage, exc) from exc
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary

