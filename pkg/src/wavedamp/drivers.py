"""Closed-form longitudinal controllers.

Three families live here:
  * the Intelligent Driver Model (IDM) used for human vehicles, with
    string-unstable defaults so platoons propagate stop-and-go waves;
  * FollowerStopper, a classical velocity-command smoother with a
    stopping region, two adaptation bands and a free region;
  * a linear set-point plant that mimics a stock adaptive cruise
    control unit executing (speed setting, gap bar) commands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .units import mph_to_mps

# Hard deceleration floor applied to every controller output; stands in
# for the unspecified "acceleration bounds" safety measure.
ACCEL_FLOOR = -6.0


@dataclass(frozen=True)
class IdmParams:
    """IDM parameters. Defaults are deliberately string-unstable."""

    v0: float = 35.0       # desired speed [m/s]
    T: float = 1.24        # time headway [s]
    a: float = 1.3         # max accel [m/s^2]
    b: float = 2.0         # comfortable decel [m/s^2]
    delta: float = 4.0     # free-road exponent
    s0: float = 2.0        # jam gap [m]
    noise_sigma: float = 0.0  # accel noise std [m/s^2]

    def __post_init__(self):
        for name in ("v0", "T", "a", "b", "delta", "s0"):
            if getattr(self, name) <= 0:
                raise DomainError(f"IdmParams.{name} must be positive")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")


def idm_accel(p: IdmParams, v: float, v_lead: float, s: float,
              rng=None) -> float:
    """IDM acceleration for ego speed v, leader speed v_lead, space gap s.

    Returns a * [1 - (v/v0)^delta - (s*/s)^2] (+ optional Gaussian noise),
    clipped to [-6, p.a].
    """
    if s <= 0:
        raise DomainError(f"space gap must be positive, got {s}")
    if v < 0 or v_lead < 0:
        raise DomainError("speeds must be non-negative")
    dv = v - v_lead
    s_star = p.s0 + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a * p.b)))
    accel = p.a * (1.0 - (v / p.v0) ** p.delta - (s_star / s) ** 2)
    if p.noise_sigma > 0 and rng is not None:
        accel += rng.normal(0.0, p.noise_sigma)
    return min(max(accel, ACCEL_FLOOR), p.a)


def idm_accel_array(p: IdmParams, v, v_lead, s, rng=None):
    """Vectorized idm_accel over aligned arrays (used for human platoons)."""
    v = np.asarray(v, dtype=float)
    v_lead = np.asarray(v_lead, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("space gap must be positive")
    s_star = p.s0 + np.maximum(
        0.0, v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a * p.b)))
    accel = p.a * (1.0 - (v / p.v0) ** p.delta - (s_star / s) ** 2)
    if p.noise_sigma > 0 and rng is not None:
        accel = accel + rng.normal(0.0, p.noise_sigma, size=accel.shape)
    return np.clip(accel, ACCEL_FLOOR, p.a)


def idm_equilibrium_gap(p: IdmParams, v: float) -> float:
    """Gap at which idm_accel(v, v, gap) = 0: (s0 + v T) / sqrt(1 - (v/v0)^d).

    Only defined for 0 <= v < v0.
    """
    if not 0 <= v < p.v0:
        raise DomainError(f"equilibrium requires 0 <= v < v0, got v={v}")
    return (p.s0 + v * p.T) / math.sqrt(1.0 - (v / p.v0) ** p.delta)


@dataclass(frozen=True)
class FsParams:
    """FollowerStopper parameters: desired speed, base band thresholds
    (strictly increasing) and per-band deceleration rates (strictly
    decreasing)."""

    v_des: float = 15.0
    dx0: tuple = (4.5, 5.25, 6.0)   # base thresholds [m]
    d: tuple = (1.5, 1.0, 0.5)      # band decel rates [m/s^2]

    def __post_init__(self):
        if len(self.dx0) != 3 or len(self.d) != 3:
            raise DomainError("dx0 and d must have 3 entries")
        if not (0 < self.dx0[0] < self.dx0[1] < self.dx0[2]):
            raise DomainError("dx0 must be positive and strictly increasing")
        if not (self.d[0] > self.d[1] > self.d[2] > 0):
            raise DomainError("d must be positive and strictly decreasing")
        if self.v_des < 0:
            raise DomainError("v_des must be >= 0")


def fs_thresholds(p: FsParams, v: float, v_lead: float):
    """Band boundaries, widened quadratically when closing on the leader."""
    closing = min(v_lead - v, 0.0)
    return tuple(dx0 + closing * closing / (2.0 * d)
                 for dx0, d in zip(p.dx0, p.d))


def follower_stopper_cmd(p: FsParams, v: float, v_lead: float,
                         dx: float) -> float:
    """Velocity command: 0 below the first threshold, blends through the
    two adaptation bands, v_des in the free region. Continuous in dx."""
    if dx <= 0:
        raise DomainError("space gap must be positive")
    if v < 0 or v_lead < 0:
        raise DomainError("speeds must be non-negative")
    dx1, dx2, dx3 = fs_thresholds(p, v, v_lead)
    u = min(max(v_lead, 0.0), p.v_des)
    if dx <= dx1:
        return 0.0
    if dx <= dx2:
        return u * (dx - dx1) / (dx2 - dx1)
    if dx <= dx3:
        return u + (p.v_des - u) * (dx - dx2) / (dx3 - dx2)
    return p.v_des


# ACC gap bars map to constant time gaps.
GAP_BAR_TIME = {1: 1.2, 2: 1.5, 3: 2.0}
SPEED_SETTING_MIN_MPH = 20.0
SPEED_SETTING_MAX_MPH = 73.0


@dataclass(frozen=True)
class AccSettings:
    """ACC set points: a speed setting (stored in m/s) and a gap bar."""

    speed_setting: float = mph_to_mps(60.0)
    gap_setting: int = 2

    def __post_init__(self):
        lo = mph_to_mps(SPEED_SETTING_MIN_MPH)
        hi = mph_to_mps(SPEED_SETTING_MAX_MPH)
        if not lo - 1e-9 <= self.speed_setting <= hi + 1e-9:
            raise DomainError(
                f"speed setting {self.speed_setting:.2f} m/s outside "
                f"[{lo:.2f}, {hi:.2f}] ([20, 73] mph)")
        if self.gap_setting not in GAP_BAR_TIME:
            raise DomainError("gap setting must be 1, 2 or 3 bars")

    @classmethod
    def from_mph(cls, mph: float, gap_setting: int = 2) -> "AccSettings":
        return cls(mph_to_mps(mph), gap_setting)

    @property
    def time_gap(self) -> float:
        return GAP_BAR_TIME[self.gap_setting]


@dataclass(frozen=True)
class AccPlantParams:
    """Linear stand-in for a stock ACC unit. The true transfer function is
    proprietary; gains here are config-exposed."""

    k_gap: float = 0.1       # gain on gap error [1/s^2]
    k_speed: float = 0.5     # gain on relative speed [1/s]
    k_free: float = 0.3      # gain toward set speed [1/s]
    accel_bounds: tuple = (-3.0, 1.5)
    actuation_delay: int = 2  # steps before a new setting takes effect
    leader_range: float = 80.0  # leader considered present within this gap

    def __post_init__(self):
        if min(self.k_gap, self.k_speed, self.k_free) <= 0:
            raise DomainError("plant gains must be positive")
        if self.actuation_delay < 0:
            raise DomainError("actuation delay must be >= 0")


def acc_plant_accel(p: AccPlantParams, settings: AccSettings, v: float,
                    v_lead: float | None, h: float | None) -> float:
    """Acceleration produced by the ACC plant.

    With a leader within range: follow law k_gap*(h - tau*v) +
    k_speed*(v_lead - v), saturated by the set-speed law so the vehicle
    never pulls past its speed setting. Without a leader: pure set-speed
    tracking. Output clipped to the plant's comfort bounds.
    """
    a_free = p.k_free * (settings.speed_setting - v)
    if h is not None and h <= 0:
        raise DomainError("space gap must be positive")
    if h is not None and v_lead is not None and h <= p.leader_range:
        a_follow = p.k_gap * (h - settings.time_gap * v) \
            + p.k_speed * (v_lead - v)
        a = min(a_follow, a_free)
    else:
        a = a_free
    return min(max(a, p.accel_bounds[0]), p.accel_bounds[1])
