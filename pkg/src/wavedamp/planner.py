"""Simulated segment-speed feed and the advisory speed planner stub.

The feed mimics a commercial probe-data product: mean speeds over
fixed road segments, aggregated over a time window and served with
minutes of latency. The planner synthesizes target speeds at the ego
position and 200/500/1000 m downstream from that feed. When the feed
has no data old enough to serve (a cold start), the query returns an
explicit default-advice state rather than failing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

DEFAULT_SPEED = 30.0        # m/s served when the feed is cold
ADVICE_SPEED_CAP = 35.0
LOOKAHEADS = (200.0, 500.0, 1000.0)
SMOOTH_SEGMENTS = 3         # forward-looking moving average width


@dataclass(frozen=True)
class SpeedPlannerAdvice:
    """Target speeds at the ego position and three downstream ranges."""

    v_sp: float
    v_200: float
    v_500: float
    v_1000: float
    max_headway_flag: bool = False
    is_default: bool = False

    def __post_init__(self):
        for name in ("v_sp", "v_200", "v_500", "v_1000"):
            val = getattr(self, name)
            if not 0.0 <= val <= ADVICE_SPEED_CAP:
                raise DomainError(f"{name}={val} outside [0, 35] m/s")

    def as_tuple(self):
        return (self.v_sp, self.v_200, self.v_500, self.v_1000)


DEFAULT_ADVICE = SpeedPlannerAdvice(
    DEFAULT_SPEED, DEFAULT_SPEED, DEFAULT_SPEED, DEFAULT_SPEED,
    max_headway_flag=False, is_default=True)


class SegmentFeed:
    """Append-only time series of per-segment mean speeds.

    A single writer appends snapshots with strictly increasing
    timestamps; readers may query concurrently.
    """

    def __init__(self, x0: float, n_segments: int, segment_length: float = 650.0,
                 aggregation_window: float = 60.0, latency: float = 180.0,
                 max_headway_flag: bool = False):
        if not 500.0 <= segment_length <= 800.0:
            raise DomainError("segment_length must lie in [500, 800] m")
        if latency < 0:
            raise DomainError("latency must be >= 0")
        if n_segments < 1:
            raise DomainError("need at least one segment")
        self.x0 = float(x0)
        self.n_segments = int(n_segments)
        self.segment_length = float(segment_length)
        self.aggregation_window = float(aggregation_window)
        self.latency = float(latency)
        self.max_headway_flag = bool(max_headway_flag)
        self._times: list[float] = []
        self._means: list[np.ndarray] = []

    def append(self, t_end: float, mean_speeds) -> None:
        """Record window-averaged speeds; NaN marks an empty segment."""
        means = np.asarray(mean_speeds, dtype=float)
        if means.shape != (self.n_segments,):
            raise DomainError(
                f"expected {self.n_segments} segment means, got {means.shape}")
        if self._times and t_end <= self._times[-1]:
            raise DomainError("snapshot timestamps must strictly increase")
        self._times.append(float(t_end))
        self._means.append(means.copy())

    def segment_index(self, position: float) -> int:
        idx = int(np.floor((position - self.x0) / self.segment_length))
        return min(max(idx, 0), self.n_segments - 1)

    def latest_before(self, cutoff: float) -> np.ndarray | None:
        """Most recent snapshot whose window closed at or before cutoff."""
        idx = np.searchsorted(np.asarray(self._times), cutoff, side="right") - 1
        if idx < 0:
            return None
        return self._means[idx]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "segment_idx", "mean_speed_mps"])
            for t, means in zip(self._times, self._means):
                for k, m in enumerate(means):
                    w.writerow([f"{t:.12g}", k, f"{m:.12g}"])


def _smoothed_segment_speed(means: np.ndarray, idx: int) -> float:
    """Forward-looking average over up to SMOOTH_SEGMENTS segments,
    skipping segments without data. Falls back to the cold default."""
    window = means[idx:idx + SMOOTH_SEGMENTS]
    valid = window[np.isfinite(window)]
    if len(valid) == 0:
        return DEFAULT_SPEED
    return float(np.mean(valid))


def speed_planner_query(feed: SegmentFeed, position: float,
                        time: float) -> SpeedPlannerAdvice:
    """Latency-delayed advisory speeds at ego, +200, +500 and +1000 m.

    Uses only snapshots aggregated at or before time - latency; a cold
    feed yields the documented default advice (all 30 m/s, flagged).
    """
    means = feed.latest_before(time - feed.latency)
    if means is None:
        return DEFAULT_ADVICE
    values = []
    for offset in (0.0,) + LOOKAHEADS:
        idx = feed.segment_index(position + offset)
        v = _smoothed_segment_speed(means, idx)
        values.append(min(max(v, 0.0), ADVICE_SPEED_CAP))
    return SpeedPlannerAdvice(*values, max_headway_flag=feed.max_headway_flag,
                              is_default=False)
