"""Leader speed profiles: replayable timestamped trajectories plus
synthetic generators for freeflow / shockwave / bottleneck scenarios.

A trajectory is a (time, speed) series on a uniform 0.1 s grid. Real
drive data can be loaded from CSV (header ``time_s,speed_mps``);
synthetic profiles stand in when no dataset is available.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TrajectoryExhausted

DT = 0.1
SPEED_MAX = 45.0


@dataclass(frozen=True)
class LeaderTrajectory:
    """Timestamped speed profile replayed by the platoon leader.

    Invariants: times strictly increasing on a uniform 0.1 s grid after
    resampling; speeds within [0, 45] m/s.
    """

    times: np.ndarray
    speeds: np.ndarray
    source_id: str = "unnamed"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        speeds = np.asarray(self.speeds, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "speeds", speeds)
        if times.ndim != 1 or times.shape != speeds.shape:
            raise DomainError("times and speeds must be 1-d and equal length")
        if len(times) < 2:
            raise DomainError("trajectory needs at least two samples")
        if np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing")
        if np.any(speeds < 0) or np.any(speeds > SPEED_MAX):
            raise DomainError(f"speeds must lie in [0, {SPEED_MAX}] m/s")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def resample(self, dt: float = DT) -> "LeaderTrajectory":
        """Linear interpolation onto a uniform dt grid starting at t=0."""
        n = int(np.floor((self.times[-1] - self.times[0]) / dt)) + 1
        t = self.times[0] + dt * np.arange(n)
        v = np.interp(t, self.times, self.speeds)
        return LeaderTrajectory(t - self.times[0], v, self.source_id)

    def speed_at(self, t: float) -> float:
        """Speed at time t; raises TrajectoryExhausted past the last sample."""
        if t < self.times[0] - 1e-9 or t > self.times[-1] + 1e-9:
            raise TrajectoryExhausted(
                f"t={t:.3f}s outside trajectory [{self.times[0]:.3f}, "
                f"{self.times[-1]:.3f}] ({self.source_id})"
            )
        return float(np.interp(t, self.times, self.speeds))

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["time_s", "speed_mps"])
            for t, v in zip(self.times, self.speeds):
                w.writerow([f"{t:.12g}", f"{v:.12g}"])

    @classmethod
    def from_csv(cls, path, source_id=None) -> "LeaderTrajectory":
        times, speeds = [], []
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if [h.strip() for h in header[:2]] != ["time_s", "speed_mps"]:
                raise DomainError(f"bad trajectory header {header!r}")
            for row in r:
                if not row:
                    continue
                times.append(float(row[0]))
                speeds.append(float(row[1]))
        return cls(np.array(times), np.array(speeds),
                   source_id or str(path)).resample()


def _smooth(x: np.ndarray, half_width: int) -> np.ndarray:
    """Moving average with reflected edges; keeps profiles drivable."""
    if half_width <= 0:
        return x
    k = 2 * half_width + 1
    pad = np.concatenate([x[half_width:0:-1], x, x[-2:-half_width - 2:-1]])
    return np.convolve(pad, np.ones(k) / k, mode="valid")


def synth_trajectory(kind: str, duration: float, seed: int = 0,
                     dt: float = DT) -> LeaderTrajectory:
    """Generate a synthetic leader profile.

    kind:
        freeflow   -- constant ~30 m/s with small jitter (never below 28)
        shockwave  -- oscillation between ~5 and ~25 m/s with one full
                      stop at a wave trough
        bottleneck -- cruise, decay to a ~5 m/s plateau (>= 60 s), recovery
    """
    if duration < 60:
        raise DomainError("duration must be at least 60 s")
    rng = np.random.default_rng(seed)
    n = int(round(duration / dt)) + 1
    t = dt * np.arange(n)

    if kind == "freeflow":
        jitter = _smooth(rng.normal(0.0, 1.2, n), 40)
        v = 30.0 + np.clip(jitter, -1.8, 1.8)
        v = np.clip(v, 28.2, 32.0)
    elif kind == "shockwave":
        v = _shockwave_profile(t, rng)
    elif kind == "bottleneck":
        v = _bottleneck_profile(t, rng)
    else:
        raise DomainError(f"unknown trajectory kind {kind!r}")

    v = np.clip(v, 0.0, SPEED_MAX)
    return LeaderTrajectory(t, v, f"synth:{kind}:{seed}")


def _shockwave_profile(t: np.ndarray, rng) -> np.ndarray:
    """Stop-and-go waves oscillating between roughly 5 and 25 m/s, with
    per-cycle amplitude jitter and the second trough deepened into a
    brief full stop."""
    n = len(t)
    duration = t[-1]
    mean = 15.0
    period = rng.uniform(45.0, 65.0)
    n_cycles = max(2, int(np.ceil(duration / period)) + 1)
    amps = rng.uniform(6.0, 10.0, n_cycles)
    amps[1] = 10.0  # the stop cycle swings wide before the full stop

    phase = 2 * np.pi * t / period
    cycle_idx = np.minimum((t / period).astype(int), n_cycles - 1)
    v = mean - amps[cycle_idx] * np.sin(phase)  # first trough at period/4
    v += _smooth(rng.normal(0, 0.7, n), 30)
    v = np.clip(v, 4.0, 26.0)

    # Deepen the second trough (at 1.25 periods) into a momentary stop:
    # hold 0 m/s for ~3 s, tapering in and out over 5 s on each side.
    t_stop = period * 1.25
    if t_stop + 10 < duration:
        ramp = np.clip((np.abs(t - t_stop) - 1.5) / 5.0, 0.0, 1.0)
        v = v * np.where(np.abs(t - t_stop) < 6.5, ramp, 1.0)

    return v


def _bottleneck_profile(t: np.ndarray, rng) -> np.ndarray:
    """Cruise, decay into a slow plateau, recover."""
    duration = t[-1]
    t_decay = 0.3 * duration
    plateau_len = max(80.0, 0.25 * duration)
    t_recover = t_decay + plateau_len
    cruise, slow = 29.0, 5.0

    v = np.full_like(t, cruise)
    decay = (t >= t_decay) & (t < t_decay + 40.0)
    v[decay] = cruise + (slow - cruise) * (t[decay] - t_decay) / 40.0
    plateau = (t >= t_decay + 40.0) & (t < t_recover + 40.0)
    v[plateau] = slow
    rec = (t >= t_recover + 40.0) & (t < t_recover + 100.0)
    v[rec] = slow + (cruise - slow) * (t[rec] - t_recover - 40.0) / 60.0
    v[t >= t_recover + 100.0] = cruise

    v += _smooth(rng.normal(0, 0.5, len(t)), 30)
    return np.clip(v, 0.0, 32.0)
