"""Observation vectors for the two controller families.

Every component is min-max rescaled to [-1, 1] and clipped there, using
the fixed constants below. Histories shorter than their slot are padded
by replicating the current value, so a vehicle at episode start sees a
constant history.
"""

from __future__ import annotations

import numpy as np

from ..planner import SpeedPlannerAdvice

# (lo, hi) scaling ranges per quantity
SPEED_RANGE = (0.0, 35.0)          # m/s
GAP_RANGE = (0.0, 500.0)           # m
H_MIN_RANGE = (-300.0, 300.0)      # m (failsafe threshold can be negative)
H_MAX_RANGE = (0.0, 300.0)         # m
ACCEL_RANGE = (-3.0, 1.5)          # m/s^2
SETTING_RANGE = (20.0, 73.0)       # mph
LEADER_FLAG_RANGE = 80.0           # m; leader "present" within this gap

EGO_SPEED_HISTORY = 5       # samples (0.5 s)
ACC_SPEED_HISTORY = 10
ACC_REQUEST_HISTORY = 10
ACC_ACCEL_HISTORY_LOW = 5
ACC_ACCEL_HISTORY_HIGH = 6

OBS_DIM_ACCEL = 14
OBS_DIM_ACC_LOW = 34
OBS_DIM_ACC_HIGH = 12


def scale(x, lo: float, hi: float):
    """Min-max map onto [-1, 1], clipped (clamp after scale)."""
    return np.clip(2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0,
                   -1.0, 1.0)


def pad_history(values, n: int, fill: float) -> np.ndarray:
    """Left-pad (oldest side) with the fill value to length n; keeps the
    most recent n entries otherwise."""
    vals = list(values)[-n:]
    return np.array([fill] * (n - len(vals)) + vals, dtype=float)


def build_obs_accel(v: float, v_lead: float, h: float, h_min: float,
                    h_max: float, speed_history,
                    advice: SpeedPlannerAdvice) -> np.ndarray:
    """Layout: [v, v_lead, h, h_min, h_max, 5 ego speeds (old->new),
    v_sp, v_200, v_500, v_1000]."""
    hist = pad_history(speed_history, EGO_SPEED_HISTORY, v)
    obs = np.concatenate([
        [scale(v, *SPEED_RANGE),
         scale(v_lead, *SPEED_RANGE),
         scale(h, *GAP_RANGE),
         scale(h_min, *H_MIN_RANGE),
         scale(h_max, *H_MAX_RANGE)],
        scale(hist, *SPEED_RANGE),
        scale(np.asarray(advice.as_tuple()), *SPEED_RANGE),
    ])
    assert obs.shape == (OBS_DIM_ACCEL,)
    return obs


def build_obs_acc(v: float, h: float, settings_mph: float, gap_bar: int,
                  advice: SpeedPlannerAdvice, variant: str,
                  accel_history=(), speed_history=(),
                  request_history_mph=()) -> np.ndarray:
    """ACC observation, low- or high-speed variant.

    Base layout: [v, v_sp, max-headway flag, leader flag (80 m rule),
    speed setting, gap bar]. The low-speed variant appends the three
    downstream targets, 5 accelerations, 10 speeds and 10 requested
    speeds; the high-speed variant appends 6 accelerations.
    """
    leader_flag = 1.0 if h <= LEADER_FLAG_RANGE else 0.0
    base = [
        scale(v, *SPEED_RANGE),
        scale(advice.v_sp, *SPEED_RANGE),
        1.0 if advice.max_headway_flag else 0.0,
        leader_flag,
        scale(settings_mph, *SETTING_RANGE),
        float(gap_bar) - 2.0,   # bars {1,2,3} -> {-1, 0, 1}
    ]
    if variant == "low":
        parts = [
            base,
            scale(np.array([advice.v_200, advice.v_500, advice.v_1000]),
                  *SPEED_RANGE),
            scale(pad_history(accel_history, ACC_ACCEL_HISTORY_LOW, 0.0),
                  *ACCEL_RANGE),
            scale(pad_history(speed_history, ACC_SPEED_HISTORY, v),
                  *SPEED_RANGE),
            scale(pad_history(request_history_mph, ACC_REQUEST_HISTORY,
                              settings_mph), *SETTING_RANGE),
        ]
        obs = np.concatenate(parts)
        assert obs.shape == (OBS_DIM_ACC_LOW,)
    elif variant == "high":
        obs = np.concatenate([
            base,
            scale(pad_history(accel_history, ACC_ACCEL_HISTORY_HIGH, 0.0),
                  *ACCEL_RANGE),
        ])
        assert obs.shape == (OBS_DIM_ACC_HIGH,)
    else:
        raise ValueError(f"unknown ACC variant {variant!r}")
    return obs
