"""World state, the fixed-step integration engine, lane-change event
injection, and the per-step trace container.

Vehicles are ordered front to back (index 0 is the trajectory leader,
which holds the largest position). Integration is semi-implicit Euler
at 10 Hz: speeds update first (clamped at zero), then positions advance
with the post-clamp speed. The engine re-records each vehicle's
acceleration as the clamp-adjusted effective value so that
``v[t+1] - v[t] == accel[t] * dt`` holds exactly in every trace.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .drivers import (ACCEL_FLOOR, AccPlantParams, AccSettings, FsParams,
                      IdmParams, acc_plant_accel, follower_stopper_cmd,
                      idm_accel_array)
from .errors import CollisionError, DomainError
from .trajectory import LeaderTrajectory

NO_LEADER_GAP = 1e6   # "arbitrarily large" gap when nothing is ahead
FLOOR_BRAKE_GAP = 1.0  # below this gap a -6 m/s^2 override kicks in
VEHICLE_LENGTH = 5.0

FLAG_PASS = 0
FLAG_FAILSAFE = 1
FLAG_GAP_CLOSE = 2
FLAG_FLOOR_BRAKE = 3


@dataclass
class VehicleState:
    """Kinematic state plus controller attachment for one vehicle."""

    position: float
    speed: float
    accel: float = 0.0
    length: float = VEHICLE_LENGTH
    controller_id: str = "idm"
    is_av: bool = False
    engaged: bool = False
    vehicle_id: int | None = None

    def __post_init__(self):
        if self.speed < 0:
            raise DomainError("speed must be non-negative")
        if self.length <= 0:
            raise DomainError("length must be positive")


class WorldState:
    """Array-backed state of every vehicle at one instant.

    Use :func:`make_world` to construct one; ``vehicle(i)`` returns a
    per-vehicle snapshot view.
    """

    def __init__(self, ids, pos, speed, accel, length, is_av, engaged,
                 controller_ids, dt=0.1, seed=0, grade=0.0):
        self.ids = np.asarray(ids, dtype=int)
        self.pos = np.asarray(pos, dtype=float)
        self.speed = np.asarray(speed, dtype=float)
        self.accel = np.asarray(accel, dtype=float)
        self.length = np.asarray(length, dtype=float)
        self.is_av = np.asarray(is_av, dtype=bool)
        self.engaged = np.asarray(engaged, dtype=bool)
        self.controller_ids = list(controller_ids)
        self.dt = float(dt)
        self.rng_seed = int(seed)
        self.rng = np.random.default_rng(seed)
        self.grade = float(grade)
        self.time = 0.0
        self.next_id = int(self.ids.max()) + 1 if len(self.ids) else 0
        self.last_flags = np.zeros(len(self.pos), dtype=np.int8)

    def __len__(self):
        return len(self.pos)

    def gaps(self) -> np.ndarray:
        """Bumper-to-bumper gap to the vehicle ahead; leader gets the
        no-leader sentinel."""
        g = np.empty(len(self))
        g[0] = NO_LEADER_GAP
        g[1:] = self.pos[:-1] - self.pos[1:] - self.length[:-1]
        return g

    def vehicle(self, i: int) -> VehicleState:
        return VehicleState(position=float(self.pos[i]),
                            speed=float(self.speed[i]),
                            accel=float(self.accel[i]),
                            length=float(self.length[i]),
                            controller_id=self.controller_ids[i],
                            is_av=bool(self.is_av[i]),
                            engaged=bool(self.engaged[i]),
                            vehicle_id=int(self.ids[i]))


def make_world(vehicles, dt: float = 0.1, seed: int = 0,
               grade: float = 0.0) -> WorldState:
    """Build a world from front-to-back vehicle states and validate the
    ordering / no-overlap invariants."""
    if not vehicles:
        raise DomainError("need at least one vehicle")
    ids = [v.vehicle_id if v.vehicle_id is not None else k
           for k, v in enumerate(vehicles)]
    if len(set(ids)) != len(ids):
        raise DomainError("vehicle ids must be unique")
    world = WorldState(
        ids=ids,
        pos=[v.position for v in vehicles],
        speed=[v.speed for v in vehicles],
        accel=[v.accel for v in vehicles],
        length=[v.length for v in vehicles],
        is_av=[v.is_av for v in vehicles],
        engaged=[v.engaged for v in vehicles],
        controller_ids=[v.controller_id for v in vehicles],
        dt=dt, seed=seed, grade=grade,
    )
    if np.any(world.gaps()[1:] <= 0):
        raise DomainError("initial vehicle positions overlap")
    return world


class LeaderReplayController:
    """Pins vehicle 0 to a replayed speed profile."""

    def __init__(self, trajectory: LeaderTrajectory):
        self.trajectory = trajectory

    def accel(self, world: WorldState, i: int):
        target = self.trajectory.speed_at(world.time + world.dt)
        return (target - world.speed[i]) / world.dt, FLAG_PASS


class IdmController:
    """Shared, stateless IDM driver; the engine vectorizes all vehicles
    attached to one instance."""

    def __init__(self, params: IdmParams = IdmParams()):
        self.params = params

    def accel_batch(self, world: WorldState, idx: np.ndarray):
        gaps = world.gaps()
        rng = world.rng if self.params.noise_sigma > 0 else None
        return idm_accel_array(self.params, world.speed[idx],
                               world.speed[idx - 1], gaps[idx], rng)


class FollowerStopperController:
    """Velocity-command smoother executed through a comfort-bounded
    acceleration step."""

    def __init__(self, params: FsParams, accel_bounds=(-3.0, 1.5)):
        self.params = params
        self.accel_bounds = accel_bounds

    def accel(self, world: WorldState, i: int):
        gap = world.gaps()[i]
        v_cmd = follower_stopper_cmd(self.params, world.speed[i],
                                     world.speed[i - 1], gap)
        a = (v_cmd - world.speed[i]) / world.dt
        a = min(max(a, self.accel_bounds[0]), self.accel_bounds[1])
        return a, FLAG_PASS


class StockAccController:
    """ACC plant at fixed set points (the stock-ACC baseline)."""

    def __init__(self, settings: AccSettings = AccSettings(),
                 plant: AccPlantParams = AccPlantParams()):
        self.settings = settings
        self.plant = plant

    def accel(self, world: WorldState, i: int):
        gap = world.gaps()[i]
        a = acc_plant_accel(self.plant, self.settings, world.speed[i],
                            world.speed[i - 1], gap)
        return a, FLAG_PASS


class ExternalAccelController:
    """Accepts an externally chosen acceleration each step (used by the
    RL training loop, which wraps and injects actions itself)."""

    def __init__(self):
        self.pending = 0.0
        self.pending_flag = FLAG_PASS

    def accel(self, world: WorldState, i: int):
        return self.pending, self.pending_flag


def step(world: WorldState, controllers: dict) -> WorldState:
    """Advance one dt: controller accelerations from the pre-step state,
    floor-brake override, speed update clamped at zero, ballistic
    position update with the post-clamp speed, collision check.
    """
    n = len(world)
    accel = np.zeros(n)
    flags = np.zeros(n, dtype=np.int8)
    gaps = world.gaps()

    # vectorized fast path: group vehicles sharing an IdmController
    idm_groups: dict[int, list[int]] = {}
    for i in range(n):
        ctrl = controllers.get(world.controller_ids[i])
        if ctrl is None:
            raise DomainError(
                f"vehicle {world.ids[i]} has no controller "
                f"{world.controller_ids[i]!r}")
        if isinstance(ctrl, IdmController) and i > 0:
            idm_groups.setdefault(id(ctrl), []).append(i)
        else:
            a, fl = ctrl.accel(world, i)
            accel[i] = a
            flags[i] = fl
    for key, members in idm_groups.items():
        idx = np.asarray(members)
        ctrl = controllers[world.controller_ids[members[0]]]
        accel[idx] = ctrl.accel_batch(world, idx)

    # supplemental brake: anything nearly touching its leader
    close = (gaps < FLOOR_BRAKE_GAP) & (np.arange(n) > 0)
    accel[close] = ACCEL_FLOOR
    flags[close] = FLAG_FLOOR_BRAKE

    v_new = np.maximum(world.speed + accel * world.dt, 0.0)
    a_eff = (v_new - world.speed) / world.dt
    world.pos = world.pos + v_new * world.dt
    world.speed = v_new
    world.accel = a_eff
    world.last_flags = flags
    world.time += world.dt

    new_gaps = world.gaps()
    bad = np.where(new_gaps[1:] <= 0)[0]
    if len(bad):
        i = int(bad[0]) + 1
        raise CollisionError(
            f"vehicle {world.ids[i]} overlapped its leader at "
            f"t={world.time:.1f}s (gap {new_gaps[i]:.3f} m)",
            time=world.time, vehicle_id=int(world.ids[i]))
    return world


MIN_INSERT_GAP = 2.0


def inject_lane_change(world: WorldState, rate: float,
                       rng: np.random.Generator,
                       length: float = VEHICLE_LENGTH,
                       controller_id: str = "idm") -> WorldState:
    """Poisson cut-in / cut-out stand-in. rate is events per vehicle per
    hour; at most one event fires per call. Cut-ins land mid-gap at the
    local mean speed and never create a gap below 2 m; cut-outs remove a
    random non-AV follower. Skips silently when no slot is legal."""
    if rate < 0:
        raise DomainError("rate must be >= 0")
    if rate == 0 or len(world) < 2:
        return world
    p_event = rate * len(world) * world.dt / 3600.0
    if rng.random() >= p_event:
        return world

    if rng.random() < 0.5:  # cut-in
        gaps = world.gaps()
        eligible = [i for i in range(1, len(world))
                    if gaps[i] >= 2 * MIN_INSERT_GAP + length]
        if not eligible:
            return world
        i = int(eligible[rng.integers(len(eligible))])
        front_gap = (gaps[i] - length) / 2.0
        new_pos = world.pos[i - 1] - world.length[i - 1] - front_gap
        new_speed = 0.5 * (world.speed[i - 1] + world.speed[i])
        _insert_vehicle(world, i, new_pos, new_speed, length, controller_id)
    else:  # cut-out
        eligible = [i for i in range(1, len(world)) if not world.is_av[i]]
        if not eligible:
            return world
        i = int(eligible[rng.integers(len(eligible))])
        _remove_vehicle(world, i)
    return world


def _insert_vehicle(world, i, pos, speed, length, controller_id):
    world.ids = np.insert(world.ids, i, world.next_id)
    world.next_id += 1
    world.pos = np.insert(world.pos, i, pos)
    world.speed = np.insert(world.speed, i, speed)
    world.accel = np.insert(world.accel, i, 0.0)
    world.length = np.insert(world.length, i, length)
    world.is_av = np.insert(world.is_av, i, False)
    world.engaged = np.insert(world.engaged, i, False)
    world.controller_ids.insert(i, controller_id)
    world.last_flags = np.insert(world.last_flags, i, FLAG_PASS)


def _remove_vehicle(world, i):
    world.ids = np.delete(world.ids, i)
    world.pos = np.delete(world.pos, i)
    world.speed = np.delete(world.speed, i)
    world.accel = np.delete(world.accel, i)
    world.length = np.delete(world.length, i)
    world.is_av = np.delete(world.is_av, i)
    world.engaged = np.delete(world.engaged, i)
    del world.controller_ids[i]
    world.last_flags = np.delete(world.last_flags, i)


TRACE_HEADER = ["t", "veh_id", "is_av", "pos_m", "speed_mps", "accel_mps2",
                "gap_m", "fuel_gps", "wrapper_flag"]


@dataclass
class SimulationTrace:
    """Per-step record of every vehicle. 2-d arrays are (step, vehicle)
    with NaN marking steps where a vehicle was absent (lane changes)."""

    times: np.ndarray
    ids: np.ndarray
    is_av: np.ndarray
    engaged: np.ndarray
    pos: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    gap: np.ndarray
    fuel: np.ndarray
    wrapper: np.ndarray
    dt: float = 0.1
    seed: int = 0
    aborted: str | None = None

    @property
    def n_steps(self) -> int:
        return len(self.times)

    @property
    def n_vehicles(self) -> int:
        return len(self.ids)

    def vehicle_distance(self) -> np.ndarray:
        """Meters covered per vehicle while present."""
        out = np.zeros(self.n_vehicles)
        for j in range(self.n_vehicles):
            p = self.pos[:, j]
            fin = np.isfinite(p)
            if fin.any():
                idx = np.where(fin)[0]
                # positions are pre-step; add the final step's advance
                out[j] = p[idx[-1]] - p[idx[0]] \
                    + (self.speed[idx[-1], j]
                       + self.accel[idx[-1], j] * self.dt) * self.dt
        return out

    def vehicle_fuel(self) -> np.ndarray:
        return np.nansum(self.fuel, axis=0) * self.dt

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(TRACE_HEADER)
            for k in range(self.n_steps):
                t = self.times[k]
                for j in range(self.n_vehicles):
                    if not np.isfinite(self.pos[k, j]):
                        continue
                    w.writerow([
                        f"{t:.12g}", int(self.ids[j]), int(self.is_av[j]),
                        f"{self.pos[k, j]:.12g}", f"{self.speed[k, j]:.12g}",
                        f"{self.accel[k, j]:.12g}", f"{self.gap[k, j]:.12g}",
                        f"{self.fuel[k, j]:.12g}", int(self.wrapper[k, j]),
                    ])

    @classmethod
    def from_csv(cls, path, dt: float = 0.1) -> "SimulationTrace":
        rows = []
        with open(path, newline="") as f:
            r = csv.reader(f)
            header = next(r)
            if header != TRACE_HEADER:
                raise DomainError(f"bad trace header {header!r}")
            for row in r:
                rows.append((float(row[0]), int(row[1]), int(row[2]),
                             float(row[3]), float(row[4]), float(row[5]),
                             float(row[6]), float(row[7]), int(row[8])))
        if not rows:
            raise DomainError("empty trace file")
        times = sorted({r[0] for r in rows})
        ids = sorted({r[1] for r in rows})
        t_index = {t: k for k, t in enumerate(times)}
        id_index = {v: j for j, v in enumerate(ids)}
        shape = (len(times), len(ids))
        pos = np.full(shape, np.nan)
        speed = np.full(shape, np.nan)
        accel = np.full(shape, np.nan)
        gap = np.full(shape, np.nan)
        fuel = np.full(shape, np.nan)
        wrapper = np.full(shape, -1, dtype=np.int8)
        is_av = np.zeros(len(ids), dtype=bool)
        for (t, vid, av, p, v, a, g, fu, fl) in rows:
            k, j = t_index[t], id_index[vid]
            pos[k, j], speed[k, j], accel[k, j] = p, v, a
            gap[k, j], fuel[k, j], wrapper[k, j] = g, fu, fl
            is_av[j] = bool(av)
        return cls(np.asarray(times), np.asarray(ids), is_av,
                   is_av.copy(), pos, speed, accel, gap, fuel, wrapper,
                   dt=dt)
