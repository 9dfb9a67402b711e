"""Per-step reward functions for the two controller families.

Both are exact closed forms over the step's kinematics and the platoon's
instantaneous fuel rates; indicator semantics follow the formulas
literally. Fuel units are whatever the caller passes (the trainer uses
gal/hr so the default coefficients balance against the other terms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError


@dataclass(frozen=True)
class RewardCoefficients:
    """Nonnegative weights c1..c4 and the platoon size n the fuel mean
    runs over."""

    c1: float
    c2: float
    c3: float
    c4: float
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("platoon size n must be >= 1")
        for name in ("c1", "c2", "c3", "c4"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise DomainError(f"{name} must be finite and >= 0")


# Defaults chosen so each term's typical magnitude on the shockwave
# preset sits within an order of the fuel term (fuel fed in gal/hr).
ACCEL_COEFFS = RewardCoefficients(c1=1.0, c2=0.2, c3=2.0, c4=0.05, n=10)
ACC_COEFFS = RewardCoefficients(c1=0.02, c2=0.002, c3=1.0, c4=1.0, n=10)


def reward_accel(coeffs: RewardCoefficients, fuel_rates, a_out: float,
                 h: float, v: float, h_min: float, h_max: float) -> float:
    """r = -c1*mean(E) - c2*a^2 - c3*1[h outside [h_min, h_max]]
           - c4*(h/v)*1[h > 10 and v > 1]"""
    e = np.asarray(fuel_rates, dtype=float)
    if e.size < 1:
        raise DomainError("need at least one fuel rate")
    r = -coeffs.c1 * float(np.mean(e))
    r -= coeffs.c2 * a_out * a_out
    if not h_min <= h <= h_max:
        r -= coeffs.c3
    if h > 10.0 and v > 1.0:
        r -= coeffs.c4 * h / v
    return r


def reward_acc(coeffs: RewardCoefficients, a: float, v: float, v_sp: float,
               fuel_rates, h: float, h_min: float, h_max: float) -> float:
    """r = 1 - c1*a^2 - c2*(v - v_sp)^2 - (c3/n)*sum(E)
           - c4*1[h <= h_min or h >= h_max]"""
    e = np.asarray(fuel_rates, dtype=float)
    if e.size < 1:
        raise DomainError("need at least one fuel rate")
    r = 1.0
    r -= coeffs.c1 * a * a
    r -= coeffs.c2 * (v - v_sp) ** 2
    r -= (coeffs.c3 / coeffs.n) * float(np.sum(e))
    if h <= h_min or h >= h_max:
        r -= coeffs.c4
    return r
