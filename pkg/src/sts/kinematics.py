"""Savitzky-Golay smoothing and the speed of ascent/descent of a box track.

The vertical speed is the ratio of the smoothed first derivatives of the top
edge and of the time vector, which handles jittery frame timing without
resampling. The speed of ascent is its maximum over the clip interval.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, FormatError, IntegrityError
from .ingest import BBox3DTrack
from .labels import StSClass

MEASUREMENT_HEADER = ["track_id", "direction", "t_start", "t_end", "peak_time", "v_soa", "quality"]


@dataclass(frozen=True)
class SavgolConfig:
    window: int = 11
    polyorder: int = 3
    deriv: int = 0

    def validate(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigurationError(f"savgol window must be a positive odd integer, got {self.window}")
        if not 0 <= self.polyorder < self.window:
            raise ConfigurationError(f"polyorder {self.polyorder} must be in [0, window={self.window})")
        if not 0 <= self.deriv <= self.polyorder:
            raise ConfigurationError(f"deriv {self.deriv} must be in [0, polyorder={self.polyorder}]")

    def with_deriv(self, deriv: int) -> "SavgolConfig":
        return SavgolConfig(self.window, self.polyorder, deriv)


@dataclass
class VerticalSpeedSeries:
    timestamps: np.ndarray
    v: np.ndarray


@dataclass
class StSMeasurement:
    track_id: str
    direction: StSClass
    t_start: float
    t_end: float
    peak_time: float
    v_soa: float
    quality: str = "ok"  # "low" when no ascent/descent was found (v_soa < 0)

    @property
    def accepted(self) -> bool:
        return self.quality == "ok"


def _fit_operator(positions: np.ndarray, polyorder: int) -> np.ndarray:
    """Rows map samples to the least-squares polynomial coefficients (ascending powers)."""
    vander = np.vander(positions, polyorder + 1, increasing=True)
    return np.linalg.pinv(vander)


def savgol_coefficients(config: SavgolConfig = SavgolConfig()) -> np.ndarray:
    """Weights ``w`` such that ``sum(w * window_samples)`` is the fitted deriv-th
    derivative at the window centre (per-sample units)."""
    config.validate()
    half = config.window // 2
    coeffs = _fit_operator(np.arange(-half, half + 1, dtype=float), config.polyorder)
    return math.factorial(config.deriv) * coeffs[config.deriv]


def _edge_values(samples: np.ndarray, positions: np.ndarray, config: SavgolConfig) -> np.ndarray:
    coeffs = _fit_operator(np.arange(config.window, dtype=float), config.polyorder) @ samples
    poly = np.polynomial.Polynomial(coeffs).deriv(config.deriv) if config.deriv else np.polynomial.Polynomial(coeffs)
    return poly(positions)


def savgol_filter(signal, config: SavgolConfig = SavgolConfig()) -> np.ndarray:
    """Smooth (or differentiate) ``signal`` sample-wise.

    Interior points use the convolution weights; each half-window at the ends
    is evaluated from a single polynomial fitted to the first/last ``window``
    samples.
    """
    config.validate()
    x = np.asarray(signal, dtype=float)
    n, win = len(x), config.window
    if n < win:
        raise DegenerateInputError(f"signal of length {n} is shorter than the savgol window {win}")
    half = win // 2
    w = savgol_coefficients(config)
    out = np.empty(n)
    if n > 2 * half:
        windows = np.lib.stride_tricks.sliding_window_view(x, win)
        out[half : n - half] = windows @ w
    out[:half] = _edge_values(x[:win], np.arange(half, dtype=float), config)
    out[n - half :] = _edge_values(x[n - win :], np.arange(win - half, win, dtype=float), config)
    return out


def speed_series(t, y, direction: StSClass, config: SavgolConfig = SavgolConfig(), name: str = "series") -> VerticalSpeedSeries:
    """Signed vertical speed of a height signal ``y(t)``, in m/s."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < config.window:
        raise DegenerateInputError(f"{name} has {len(t)} samples, savgol window needs {config.window}")
    if np.any(np.diff(t) <= 0):
        raise IntegrityError(f"{name}: timestamps not strictly increasing")
    d1 = config.with_deriv(1)
    # derivatives ignore constant offsets; removing them keeps absolute clock values from costing precision
    dy = savgol_filter(y - y[0], d1)
    dt = savgol_filter(t - t[0], d1)
    if np.any(dt <= 0):
        i = int(np.flatnonzero(dt <= 0)[0])
        raise IntegrityError(f"{name}: smoothed time derivative is non-positive at sample {i}")
    return VerticalSpeedSeries(t, direction.sign * dy / dt)


def vertical_speed(track: BBox3DTrack, direction: StSClass, config: SavgolConfig = SavgolConfig()) -> VerticalSpeedSeries:
    """Signed vertical speed of the box top edge."""
    return speed_series(track.times, track.y_top, direction, config, name=f"track {track.track_id}")


def speed_of_ascent(vs: VerticalSpeedSeries, t_start: float, t_end: float, *, track_id: str = "",
                    direction: StSClass = StSClass.SitToStand) -> StSMeasurement:
    """Maximum vertical speed over the closed interval (earliest sample on ties)."""
    inside = np.flatnonzero((vs.timestamps >= t_start) & (vs.timestamps <= t_end))
    if inside.size == 0:
        raise DegenerateInputError(f"no speed samples in [{t_start}, {t_end}]")
    i = inside[int(np.argmax(vs.v[inside]))]
    v = float(vs.v[i])
    return StSMeasurement(track_id, direction, float(t_start), float(t_end), float(vs.timestamps[i]), v,
                          "ok" if v >= 0 else "low")


def measure_track(track: BBox3DTrack, direction: StSClass, t_start: float | None = None,
                  t_end: float | None = None, config: SavgolConfig = SavgolConfig()) -> StSMeasurement:
    t = track.times
    t_start = float(t[0]) if t_start is None else t_start
    t_end = float(t[-1]) if t_end is None else t_end
    vs = vertical_speed(track, direction, config)
    return speed_of_ascent(vs, t_start, t_end, track_id=track.track_id, direction=direction)


def write_measurements(path, measurements: list[StSMeasurement]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_HEADER)
        for m in measurements:
            w.writerow([m.track_id, m.direction.value, repr(m.t_start), repr(m.t_end), repr(m.peak_time),
                        f"{m.v_soa:.6f}", m.quality])
    return path


def read_measurements(path) -> list[StSMeasurement]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != MEASUREMENT_HEADER:
        raise FormatError(f"{path}: expected header {','.join(MEASUREMENT_HEADER)}")
    out = []
    for lineno, r in enumerate(rows[1:], 2):
        try:
            out.append(StSMeasurement(r[0], StSClass.parse(r[1]), float(r[2]), float(r[3]), float(r[4]),
                                      float(r[5]), r[6]))
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out
