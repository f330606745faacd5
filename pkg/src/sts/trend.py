"""Weekly aggregation of speed-of-ascent measurements and trend statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import DegenerateInputError, FormatError, NoVarianceError
from .kinematics import StSMeasurement
from .labels import StSClass

TREND_HEADER = ["week_start", "mean_v", "sem_v", "count"]
SECONDS_PER_WEEK = 7 * 86400.0


@dataclass
class TrendSeries:
    week_start: list[date]
    mean_v: np.ndarray
    dispersion: np.ndarray  # standard error of the mean
    count: np.ndarray
    event_date: date | None = None
    epoch: date | None = None
    rejected: int = 0  # low-quality measurements left out

    def __len__(self):
        return len(self.week_start)

    def week_index(self) -> np.ndarray:
        """Weeks since the first bin (or since the epoch when known)."""
        origin = self.epoch or self.week_start[0]
        return np.array([(d - origin).days / 7.0 for d in self.week_start])

    def select(self, mask) -> "TrendSeries":
        mask = np.asarray(mask, dtype=bool)
        return TrendSeries([d for d, m in zip(self.week_start, mask) if m], self.mean_v[mask],
                           self.dispersion[mask], self.count[mask], self.event_date, self.epoch, self.rejected)

    def after(self, day: date) -> "TrendSeries":
        return self.select([d >= day for d in self.week_start])


def weekly_aggregate(measurements: list[StSMeasurement], epoch: date,
                     direction: StSClass | None = StSClass.SitToStand,
                     event_date: date | None = None) -> TrendSeries:
    """Bin measurements into 7-day weeks anchored at ``epoch``.

    Measurement times (``peak_time``) are seconds since ``epoch``. Weeks
    without accepted measurements are omitted.
    """
    chosen = [m for m in measurements if direction is None or m.direction == direction]
    ok = [m for m in chosen if m.accepted]
    rejected = len(chosen) - len(ok)
    if not ok:
        raise DegenerateInputError("no accepted measurements to aggregate")
    weeks = np.floor(np.array([m.peak_time for m in ok]) / SECONDS_PER_WEEK).astype(int)
    v = np.array([m.v_soa for m in ok])
    starts, means, sems, counts = [], [], [], []
    for w in np.unique(weeks):
        vals = np.sort(v[weeks == w])  # sorted so the sums do not depend on input order
        n = len(vals)
        mean = float(np.mean(vals))
        sem = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        starts.append(epoch + timedelta(days=7 * int(w)))
        means.append(mean)
        sems.append(sem)
        counts.append(n)
    return TrendSeries(starts, np.array(means), np.array(sems), np.array(counts, dtype=int),
                       event_date, epoch, rejected)


@dataclass(frozen=True)
class LineFit:
    slope: float  # m/s per week
    intercept: float
    r2: float

    @property
    def slope_per_month(self) -> float:
        return self.slope * (365.25 / 12) / 7


def fit_line(trend: TrendSeries) -> LineFit:
    """Ordinary least squares of weekly means on week index."""
    if len(trend) < 3:
        raise DegenerateInputError(f"need at least 3 weeks for a trend, got {len(trend)}")
    x = trend.week_index()
    y = trend.mean_v
    xc = x - x.mean()
    yc = y - y.mean()
    ss_tot = float(yc @ yc)
    sxx = float(xc @ xc)
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    if ss_tot == 0.0:
        raise NoVarianceError("all weekly means are identical; R^2 is undefined")
    resid = yc - slope * xc
    return LineFit(slope, intercept, 1.0 - float(resid @ resid) / ss_tot)


def r_squared(trend: TrendSeries) -> float:
    return fit_line(trend).r2


def trend_correlation(a: TrendSeries, b: TrendSeries) -> float:
    """Pearson correlation of weekly means over the weeks both series contain."""
    common = sorted(set(a.week_start) & set(b.week_start))
    if len(common) < 3:
        raise DegenerateInputError(f"need at least 3 overlapping weeks, got {len(common)}")
    ia = {d: i for i, d in enumerate(a.week_start)}
    ib = {d: i for i, d in enumerate(b.week_start)}
    x = np.array([a.mean_v[ia[d]] for d in common])
    y = np.array([b.mean_v[ib[d]] for d in common])
    return pearson(x, y)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float) - np.mean(x)
    y = np.asarray(y, dtype=float) - np.mean(y)
    sx, sy = math.sqrt(float(x @ x)), math.sqrt(float(y @ y))
    if sx == 0.0 or sy == 0.0:
        raise NoVarianceError("a series has zero variance; correlation is undefined")
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))


# ---------------------------------------------------------------- output


def write_trend_csv(path, trend: TrendSeries) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TREND_HEADER)
        for d, m, s, c in zip(trend.week_start, trend.mean_v, trend.dispersion, trend.count):
            w.writerow([d.isoformat(), repr(float(m)), repr(float(s)), int(c)])
    return path


def read_trend_csv(path, event_date: date | None = None, epoch: date | None = None) -> TrendSeries:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TREND_HEADER:
        raise FormatError(f"{path}: expected header {','.join(TREND_HEADER)}")
    try:
        body = rows[1:]
        return TrendSeries([date.fromisoformat(r[0]) for r in body], np.array([float(r[1]) for r in body]),
                           np.array([float(r[2]) for r in body]), np.array([int(r[3]) for r in body], dtype=int),
                           event_date, epoch)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def emit_trend_plot(trend: TrendSeries, out, fmt: str = "svg", title: str = "Speed of ascent") -> Path:
    """Write the trend as a self-contained SVG (markers, SEM bars, event line) or as CSV."""
    if len(trend) == 0:
        raise DegenerateInputError("empty trend")
    out = Path(out)
    if fmt == "csv":
        return write_trend_csv(out, trend)
    if fmt != "svg":
        raise ValueError(f"unknown plot format {fmt!r}")
    out.write_text(_svg(trend, title))
    return out


def _svg(trend: TrendSeries, title: str) -> str:
    W, H, L, R, T, B = 640, 400, 70, 20, 40, 50
    weeks = trend.week_index()
    lo = float(np.min(trend.mean_v - trend.dispersion))
    hi = float(np.max(trend.mean_v + trend.dispersion))
    if hi - lo < 1e-6:
        lo, hi = lo - 0.05, hi + 0.05
    pad = 0.1 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    origin = trend.epoch or trend.week_start[0]
    xs = list(weeks)
    if trend.event_date is not None:
        xs.append((trend.event_date - origin).days / 7.0)
    x0, x1 = min(xs) - 0.5, max(xs) + 0.5

    def sx(w):
        return L + (w - x0) / (x1 - x0) * (W - L - R)

    def sy(v):
        return H - B - (v - lo) / (hi - lo) * (H - T - B)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<line class="axis" x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line class="axis" x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
        f'<text x="{(L + W - R) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13">time (weeks)</text>',
        f'<text x="18" y="{(T + H - B) / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {(T + H - B) / 2:.1f})">speed (m/s)</text>',
    ]
    for v in np.linspace(lo, hi, 5):
        parts.append(f'<text x="{L - 6}" y="{sy(v) + 4:.1f}" text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{v:.2f}</text>')
    if trend.event_date is not None:
        ex = sx((trend.event_date - origin).days / 7.0)
        parts.append(f'<line class="event" x1="{ex:.1f}" y1="{T}" x2="{ex:.1f}" y2="{H - B}" '
                     f'stroke="black" stroke-width="2"/>')
    for w, m, s in zip(weeks, trend.mean_v, trend.dispersion):
        cx = sx(w)
        parts.append(f'<line class="errorbar" x1="{cx:.1f}" y1="{sy(m - s):.1f}" x2="{cx:.1f}" '
                     f'y2="{sy(m + s):.1f}" stroke="steelblue"/>')
        parts.append(f'<circle class="marker" cx="{cx:.1f}" cy="{sy(m):.1f}" r="4" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def seconds_to_date(epoch: date, seconds: float) -> date:
    return (datetime(epoch.year, epoch.month, epoch.day, tzinfo=timezone.utc) + timedelta(seconds=seconds)).date()
