"""Deployment-side logic around a raw policy output: the gap-closing and
failsafe overrides with their inflated-TTC trigger, the speed-setting
clip used on the ACC side, and the sliding-window acceleration estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistory, RangeError

ACTION_MIN = -3.0   # raw acceleration action bounds [m/s^2]
ACTION_MAX = 1.5
SPEED_LIMIT = 35.0  # controlled AVs stay within [0, 35] m/s
TTC_TRIGGER = 6.0   # seconds

# Inflation applied to ego speed inside the closing-speed surrogate:
# v_diff = v*(30 + SURGE)/30 + OFFSET - v_lead. Both were chosen
# empirically in the source control design; override with care.
VDIFF_SURGE = 4.0
VDIFF_OFFSET = 1.0

FLAG_PASS = "pass"
FLAG_FAILSAFE = "failsafe"
FLAG_GAP_CLOSE = "gap_close"


def speed_diff(v: float, v_lead: float, surge: float = VDIFF_SURGE,
               offset: float = VDIFF_OFFSET) -> float:
    """Inflated closing speed: [v*(30+surge)/30 + offset] - v_lead."""
    return (v * (30.0 + surge)) / 30.0 + offset - v_lead


def gap_closing_threshold(v: float) -> float:
    """Gap above which the vehicle is forced to accelerate: max(120, 6 v)."""
    if v < 0:
        raise RangeError("speed must be non-negative")
    return max(120.0, 6.0 * v)


def failsafe_threshold(v: float, v_lead: float, surge: float = VDIFF_SURGE,
                       offset: float = VDIFF_OFFSET) -> float:
    """Gap below which the vehicle is forced to brake: 6 * speed_diff.

    May be negative (then the failsafe can never trigger).
    """
    if v < 0 or v_lead < 0:
        raise RangeError("speeds must be non-negative")
    return TTC_TRIGGER * speed_diff(v, v_lead, surge, offset)


def ttc(v: float, v_lead: float, h: float, surge: float = VDIFF_SURGE,
        offset: float = VDIFF_OFFSET) -> float:
    """Time to collision under the inflated closing speed; +inf when the
    gap is opening."""
    if h <= 0:
        raise RangeError("space gap must be positive")
    vd = speed_diff(v, v_lead, surge, offset)
    return h / vd if vd > 0 else float("inf")


def wrap_acceleration(a_raw: float, v: float, v_lead: float, h: float,
                      dt: float = 0.1) -> tuple[float, str]:
    """Apply the failsafe / gap-closing case law to a raw action, then
    clip so the post-step speed stays within [0, 35] m/s.

    Returns (acceleration, flag) with exactly one flag per call;
    the failsafe strictly dominates gap closing.
    """
    if not ACTION_MIN <= a_raw <= ACTION_MAX:
        raise RangeError(
            f"raw action {a_raw} outside [{ACTION_MIN}, {ACTION_MAX}]")
    if ttc(v, v_lead, h) <= TTC_TRIGGER:
        a, flag = ACTION_MIN, FLAG_FAILSAFE
    elif h >= gap_closing_threshold(v):
        a, flag = ACTION_MAX, FLAG_GAP_CLOSE
    else:
        a, flag = a_raw, FLAG_PASS
    # speed-limit clip applied last (conservative for the braking case)
    a = min(a, (SPEED_LIMIT - v) / dt)
    a = max(a, (0.0 - v) / dt)
    return a, flag


@dataclass(frozen=True)
class WrapperThresholds:
    """Snapshot of the override thresholds for a given kinematic state."""

    h_min: float
    h_max: float
    ttc: float

    @classmethod
    def from_state(cls, v: float, v_lead: float, h: float):
        return cls(failsafe_threshold(v, v_lead),
                   gap_closing_threshold(v),
                   ttc(v, v_lead, h))


SPEED_SETTING_MIN = 20.0  # mph
SPEED_SETTING_MAX = 73.0  # mph
CLIP_BELOW_MEAN = 15.0    # mph
CLIP_ABOVE_MEAN = 5.0     # mph
CLIP_HISTORY = 10         # samples (one second at 10 Hz)


def clip_speed_setting(raw_mph: float, speed_history_mph) -> float:
    """Clamp a requested speed setting to mean(last second) -15/+5 mph,
    then to the global [20, 73] mph band.

    A short history is padded by replicating its most recent sample;
    an empty history raises InsufficientHistory.
    """
    hist = list(speed_history_mph)
    if not hist:
        raise InsufficientHistory("need at least one speed sample")
    if len(hist) < CLIP_HISTORY:
        hist = hist + [hist[-1]] * (CLIP_HISTORY - len(hist))
    m = sum(hist[-CLIP_HISTORY:]) / CLIP_HISTORY
    s = min(max(raw_mph, m - CLIP_BELOW_MEAN), m + CLIP_ABOVE_MEAN)
    return min(max(s, SPEED_SETTING_MIN), SPEED_SETTING_MAX)


ACCEL_WINDOW = 4  # noisy first differences averaged together


def estimate_accel(speed_history, dt: float = 0.1) -> float:
    """Average of the last four first-difference acceleration estimates.

    Needs at least five speed samples at fixed dt spacing.
    """
    v = np.asarray(list(speed_history), dtype=float)
    if len(v) < ACCEL_WINDOW + 1:
        raise InsufficientHistory(
            f"need {ACCEL_WINDOW + 1} samples, got {len(v)}")
    diffs = np.diff(v[-(ACCEL_WINDOW + 1):])
    return float(np.mean(diffs) / dt)
