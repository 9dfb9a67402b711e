"""Optimization-friendly fuel-rate models f(v, a, grade).

The shipped default is a mid-size SUV fitted from a road-load physics
baseline: wheel power = inertial + rolling + aero + grade terms run
through a flat 0.3 drivetrain efficiency, with an idle floor and full
fuel cut under engine braking. The resulting rate is convex in the
acceleration direction, and rate/speed is convex in speed away from the
fuel-cut boundary, which makes steady driving fuel-optimal; those two
properties are what the trainer's reward relies on, and
``check_convexity`` asserts them numerically for any model file.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .units import METERS_PER_MILE

V_DOMAIN = (0.0, 45.0)
A_DOMAIN = (-6.0, 4.0)

# Road-load constants for the default mid-size SUV.
_MASS = 1800.0          # kg
_G = 9.81               # m/s^2
_C_ROLL = 0.015
_HALF_RHO_CDA = 0.5 * 1.225 * 1.08   # kg/m
_EFFICIENCY = 0.3
_FUEL_ENERGY = 121.3e6  # J/gal (gasoline)
_IDLE_RATE = 1.1e-4     # gal/s


@dataclass(frozen=True)
class EnergyModel:
    """Fuel-rate model: idle floor plus efficiency-scaled positive wheel
    power, where power is a polynomial in (v, a, grade).

    power_terms entries are (v_exp, a_exp, grade_exp, coeff) with the
    sum giving wheel power in watts. fuel_cut_threshold is the
    deceleration at or below which the rate is pinned to the idle floor
    for any in-domain speed.
    """

    vehicle_class: str = "midsize_suv"
    power_terms: tuple = (
        (1, 1, 0, _MASS),                 # inertial: m * a * v
        (1, 0, 0, _MASS * _G * _C_ROLL),  # rolling resistance
        (3, 0, 0, _HALF_RHO_CDA),         # aerodynamic drag
        (1, 0, 1, _MASS * _G),            # grade: m * g * theta * v
    )
    efficiency: float = _EFFICIENCY
    fuel_energy: float = _FUEL_ENERGY    # J/gal
    idle_rate: float = _IDLE_RATE        # gal/s
    fuel_cut_threshold: float = -1.0     # m/s^2

    def __post_init__(self):
        if self.idle_rate <= 0:
            raise DomainError("idle_rate must be positive")
        if self.efficiency <= 0 or self.fuel_energy <= 0:
            raise DomainError("efficiency and fuel_energy must be positive")

    def wheel_power(self, v, a, grade=0.0):
        v = np.asarray(v, dtype=float)
        a = np.asarray(a, dtype=float)
        grade = np.asarray(grade, dtype=float)
        p = np.zeros(np.broadcast(v, a, grade).shape)
        for vi, ai, gi, c in self.power_terms:
            term = c * np.ones_like(p)
            if vi:
                term = term * v ** vi
            if ai:
                term = term * a ** ai
            if gi:
                term = term * grade ** gi
            p = p + term
        return p


def fuel_rate(model: EnergyModel, v, a, grade=0.0):
    """Fuel consumption rate in gal/s; scalar in, scalar out.

    Domain: v in [0, 45] m/s, a in [-6, 4] m/s^2. Smooth except at the
    fuel-cut boundary where positive demand power first appears.
    """
    v_arr = np.asarray(v, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    if np.any(v_arr < V_DOMAIN[0]) or np.any(v_arr > V_DOMAIN[1]):
        raise DomainError(f"speed outside {V_DOMAIN}")
    if np.any(a_arr < A_DOMAIN[0]) or np.any(a_arr > A_DOMAIN[1]):
        raise DomainError(f"acceleration outside {A_DOMAIN}")
    power = model.wheel_power(v_arr, a_arr, grade)
    rate = model.idle_rate + np.maximum(0.0, power) / (
        model.efficiency * model.fuel_energy)
    rate = np.where(a_arr <= model.fuel_cut_threshold, model.idle_rate, rate)
    if np.ndim(v) == 0 and np.ndim(a) == 0:
        return float(rate)
    return rate


def mpg(distance_m: float, fuel_gal: float) -> float:
    """Miles driven per gallon consumed. Zero distance yields 0; zero
    fuel with positive distance yields +inf with a warning."""
    if fuel_gal < 0:
        raise DomainError("fuel must be non-negative")
    if distance_m == 0:
        return 0.0
    if fuel_gal == 0:
        warnings.warn("mpg of a zero-fuel drive: returning +inf")
        return float("inf")
    return (distance_m / METERS_PER_MILE) / fuel_gal


def profile_fuel(model: EnergyModel, speeds, dt: float = 0.1,
                 grade: float = 0.0) -> tuple[float, float]:
    """Integrate a speed profile: returns (distance_m, fuel_gal).

    Acceleration over each step is the forward difference; the step's
    fuel burns at the rate implied by its starting speed.
    """
    v = np.asarray(speeds, dtype=float)
    if len(v) < 2:
        raise DomainError("need at least two samples")
    a = np.diff(v) / dt
    rates = fuel_rate(model, v[:-1], np.clip(a, *A_DOMAIN), grade)
    distance = float(np.sum(v[1:] * dt))
    fuel = float(np.sum(rates * dt))
    return distance, fuel


@dataclass(frozen=True)
class ConvexityReport:
    violations: tuple
    n_checked: int
    n_skipped_boundary: int

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def check_convexity(model: EnergyModel,
                    v_grid: Sequence[float] | None = None,
                    a_grid: Sequence[float] | None = None,
                    grade: float = 0.0,
                    tol: float = -1e-9) -> ConvexityReport:
    """Verify the two shape properties by central second differences:
    f convex along a at fixed v, and f/v convex along v at fixed a.

    Stencils straddling the fuel-cut boundary (sign change of demand
    power, or the fuel-cut deceleration) are excluded and counted.
    """
    if v_grid is None:
        v_grid = np.round(np.arange(1.0, 35.0 + 1e-9, 0.5), 6)
    if a_grid is None:
        a_grid = np.round(np.arange(-3.0, 1.5 + 1e-9, 0.1), 6)
    v_grid = np.asarray(v_grid, dtype=float)
    a_grid = np.asarray(a_grid, dtype=float)

    violations = []
    n_checked = 0
    n_skipped = 0

    def near_boundary(vs, accs):
        p = model.wheel_power(np.asarray(vs), np.asarray(accs), grade)
        if p.min() < 0.0 < p.max():
            return True
        cut = model.fuel_cut_threshold
        return min(accs) <= cut < max(accs)

    # f(v, a) convex in a for each fixed v
    for v in v_grid:
        f = fuel_rate(model, np.full_like(a_grid, v), a_grid, grade)
        for k in range(1, len(a_grid) - 1):
            stencil_a = a_grid[k - 1:k + 2]
            if near_boundary([v] * 3, stencil_a):
                n_skipped += 1
                continue
            d2 = f[k - 1] - 2.0 * f[k] + f[k + 1]
            n_checked += 1
            if d2 < tol:
                violations.append(("f_aa", float(v), float(a_grid[k]),
                                   float(d2)))

    # f(v, a)/v convex in v for each fixed a
    for a in a_grid:
        f_over_v = fuel_rate(model, v_grid, np.full_like(v_grid, a),
                             grade) / v_grid
        for k in range(1, len(v_grid) - 1):
            stencil_v = v_grid[k - 1:k + 2]
            if near_boundary(stencil_v, [a] * 3):
                n_skipped += 1
                continue
            d2 = f_over_v[k - 1] - 2.0 * f_over_v[k] + f_over_v[k + 1]
            n_checked += 1
            if d2 < tol:
                violations.append(("fv_vv", float(v_grid[k]), float(a),
                                   float(d2)))

    return ConvexityReport(tuple(violations), n_checked, n_skipped)


def save_model(model: EnergyModel, path) -> None:
    """Plain-text coefficient table; one named value or power term per line."""
    with open(path, "w") as f:
        f.write("# wavedamp energy model v1\n")
        f.write(f"vehicle_class {model.vehicle_class}\n")
        f.write(f"efficiency {model.efficiency!r}\n")
        f.write(f"fuel_energy_j_per_gal {model.fuel_energy!r}\n")
        f.write(f"idle_rate_gal_per_s {model.idle_rate!r}\n")
        f.write(f"fuel_cut_threshold_mps2 {model.fuel_cut_threshold!r}\n")
        for vi, ai, gi, c in model.power_terms:
            f.write(f"power_term {vi} {ai} {gi} {c!r}\n")


def load_model(path) -> EnergyModel:
    fields = {}
    terms = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "power_term":
                vi, ai, gi = (int(x) for x in parts[1:4])
                terms.append((vi, ai, gi, float(parts[4])))
            else:
                fields[parts[0]] = parts[1]
    try:
        return EnergyModel(
            vehicle_class=fields.get("vehicle_class", "custom"),
            power_terms=tuple(terms),
            efficiency=float(fields["efficiency"]),
            fuel_energy=float(fields["fuel_energy_j_per_gal"]),
            idle_rate=float(fields["idle_rate_gal_per_s"]),
            fuel_cut_threshold=float(fields["fuel_cut_threshold_mps2"]),
        )
    except KeyError as e:
        raise DomainError(f"model file missing field {e}") from e


DEFAULT_MODEL = EnergyModel()
