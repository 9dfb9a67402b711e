"""Scenario assembly: platoon construction, controller attachment and
the full simulation driver producing traces.

A scenario is a leader trajectory followed by ``n_platoons`` platoons,
each one AV ahead of ``humans_per_platoon`` IDM vehicles. Vehicles
start at the IDM equilibrium spacing for the leader's initial speed, so
a constant-speed leader produces a quiescent platoon.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .drivers import (AccPlantParams, AccSettings, FsParams, IdmParams,
                      acc_plant_accel, idm_equilibrium_gap)
from .energy import DEFAULT_MODEL, EnergyModel, fuel_rate
from .errors import CollisionError, DomainError
from .planner import DEFAULT_ADVICE, SegmentFeed, speed_planner_query
from .rl.observations import build_obs_accel, build_obs_acc
from .rl.policy import CompositeAccPolicy, Policy
from .simulation import (FLAG_FAILSAFE, FLAG_GAP_CLOSE, FLAG_PASS,
                         FollowerStopperController, IdmController,
                         LeaderReplayController, SimulationTrace,
                         StockAccController, VehicleState, WorldState,
                         inject_lane_change, make_world, step)
from .trajectory import LeaderTrajectory
from .units import mps_to_mph
from .wrappers import (FLAG_FAILSAFE as WRAP_FAILSAFE,
                       FLAG_GAP_CLOSE as WRAP_GAP_CLOSE,
                       clip_speed_setting, estimate_accel,
                       failsafe_threshold, gap_closing_threshold,
                       wrap_acceleration)

CONTROLLER_KINDS = ("idm", "follower_stopper", "rl_accel", "rl_acc",
                    "stock_acc")
_WRAP_FLAG_CODES = {
    "pass": FLAG_PASS,
    WRAP_FAILSAFE: FLAG_FAILSAFE,
    WRAP_GAP_CLOSE: FLAG_GAP_CLOSE,
}


@dataclass(frozen=True)
class ControllerSpec:
    """Tagged union over the AV controller families."""

    kind: str = "idm"
    idm: IdmParams = field(default_factory=IdmParams)
    fs: FsParams = field(default_factory=FsParams)
    acc_settings: AccSettings = field(default_factory=AccSettings)
    acc_plant: AccPlantParams = field(default_factory=AccPlantParams)
    policy: object = None

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise DomainError(f"unknown controller kind {self.kind!r}")
        if self.kind == "rl_accel" and not isinstance(self.policy, Policy):
            raise DomainError("rl_accel needs a Policy")
        if self.kind == "rl_acc" and not isinstance(self.policy,
                                                    CompositeAccPolicy):
            raise DomainError("rl_acc needs a CompositeAccPolicy")

    @property
    def engages(self) -> bool:
        return self.kind != "idm"


class AccelPolicyController:
    """Evaluation-time acceleration policy: observation build, greedy
    action, failsafe / gap-closing wrapper."""

    def __init__(self, policy: Policy, feed: SegmentFeed | None = None):
        self.policy = policy
        self.feed = feed
        self._speed_hist: list[float] = []

    def accel(self, world: WorldState, i: int):
        v = float(world.speed[i])
        v_lead = float(world.speed[i - 1])
        h = float(world.gaps()[i])
        self._speed_hist.append(v)
        self._speed_hist = self._speed_hist[-5:]
        advice = (speed_planner_query(self.feed, float(world.pos[i]),
                                      world.time)
                  if self.feed is not None else DEFAULT_ADVICE)
        obs = build_obs_accel(v, v_lead, h, failsafe_threshold(v, v_lead),
                              gap_closing_threshold(v), self._speed_hist,
                              advice)
        a_raw = self.policy.mean_action(obs)
        a, flag = wrap_acceleration(a_raw, v, v_lead, h, world.dt)
        return a, _WRAP_FLAG_CODES[flag]


class AccPolicyController:
    """Evaluation-time ACC set-point policy: the low/high composite picks
    a speed setting (clipped against the last second of travel) and a
    gap bar, executed through the delayed linear plant."""

    def __init__(self, composite: CompositeAccPolicy,
                 plant: AccPlantParams = AccPlantParams(),
                 initial: AccSettings = AccSettings(),
                 feed: SegmentFeed | None = None):
        self.composite = composite
        self.plant = plant
        self.settings = initial
        self.feed = feed
        self._pending: list[AccSettings] = []
        self._speed_hist: list[float] = []
        self._mph_hist: list[float] = []
        self._request_hist: list[float] = []
        self._accel_hist: list[float] = []

    def accel(self, world: WorldState, i: int):
        v = float(world.speed[i])
        v_lead = float(world.speed[i - 1])
        h = float(world.gaps()[i])
        self._speed_hist.append(v)
        self._speed_hist = self._speed_hist[-10:]
        self._mph_hist.append(mps_to_mph(v))
        self._mph_hist = self._mph_hist[-10:]
        if len(self._speed_hist) >= 5:
            self._accel_hist.append(estimate_accel(self._speed_hist,
                                                   world.dt))
        else:
            self._accel_hist.append(0.0)
        self._accel_hist = self._accel_hist[-6:]

        advice = (speed_planner_query(self.feed, float(world.pos[i]),
                                      world.time)
                  if self.feed is not None else DEFAULT_ADVICE)
        variant = self.composite.select(v)
        policy = self.composite.active(v)
        obs = build_obs_acc(v, h, mps_to_mph(self.settings.speed_setting),
                            self.settings.gap_setting, advice, variant,
                            self._accel_hist, self._speed_hist,
                            self._request_hist or [mps_to_mph(v)])
        raw_mph, bar = policy.mean_action(obs)
        req_mph = clip_speed_setting(raw_mph, self._mph_hist)
        self._request_hist.append(req_mph)
        self._request_hist = self._request_hist[-10:]

        self._pending.append(AccSettings.from_mph(req_mph, bar))
        if len(self._pending) > self.plant.actuation_delay:
            self.settings = self._pending.pop(0)

        a = acc_plant_accel(self.plant, self.settings, v, v_lead, h)
        return a, FLAG_PASS


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one run."""

    leader: LeaderTrajectory
    n_platoons: int = 1
    humans_per_platoon: int = 19
    av_controller: ControllerSpec = field(default_factory=ControllerSpec)
    idm_noise_sigma: float = 0.0
    lane_change_rate: float = 0.0   # events / vehicle / hour
    seed: int = 0
    grade: float = 0.0
    use_planner_feed: bool = False
    energy_model: EnergyModel = DEFAULT_MODEL
    duration: float | None = None

    def __post_init__(self):
        if self.n_platoons < 1:
            raise DomainError("need at least one platoon")
        if self.humans_per_platoon < 0:
            raise DomainError("humans_per_platoon must be >= 0")

    @property
    def penetration(self) -> float:
        return self.n_platoons / (
            self.n_platoons * (1 + self.humans_per_platoon))


def build_platoon(cfg: ScenarioConfig, idm: IdmParams) -> list[VehicleState]:
    """Leader plus n_platoons x (1 AV + humans), spaced at the IDM
    equilibrium gap for the leader's initial speed."""
    traj = cfg.leader
    v0 = float(traj.speeds[0])
    eq_speed = min(v0, 0.93 * idm.v0)
    gap = idm_equilibrium_gap(idm, eq_speed)
    vehicles = [VehicleState(position=0.0, speed=v0,
                             controller_id="leader", vehicle_id=0)]
    vid = 1
    av_engages = cfg.av_controller.engages
    for _ in range(cfg.n_platoons):
        for member in range(1 + cfg.humans_per_platoon):
            prev = vehicles[-1]
            pos = prev.position - prev.length - gap
            is_av = member == 0
            if is_av and cfg.av_controller.kind != "idm":
                cid = f"av{vid}" if cfg.av_controller.kind.startswith("rl") \
                    else "av"
            else:
                cid = "idm"
            vehicles.append(VehicleState(
                position=pos, speed=v0, controller_id=cid, is_av=is_av,
                engaged=is_av and av_engages, vehicle_id=vid))
            vid += 1
    return vehicles


def _build_bank(cfg: ScenarioConfig, vehicles, traj, idm, feed):
    bank = {"leader": LeaderReplayController(traj),
            "idm": IdmController(idm)}
    spec = cfg.av_controller
    if spec.kind == "follower_stopper":
        bank["av"] = FollowerStopperController(spec.fs)
    elif spec.kind == "stock_acc":
        bank["av"] = StockAccController(spec.acc_settings, spec.acc_plant)
    elif spec.kind == "rl_accel":
        for v in vehicles:
            if v.is_av:
                bank[v.controller_id] = AccelPolicyController(spec.policy,
                                                              feed)
    elif spec.kind == "rl_acc":
        for v in vehicles:
            if v.is_av:
                bank[v.controller_id] = AccPolicyController(
                    spec.policy, spec.acc_plant, spec.acc_settings, feed)
    return bank


class _FeedAggregator:
    """Accumulates per-segment speed sums over the aggregation window and
    appends snapshots to the feed."""

    def __init__(self, feed: SegmentFeed, dt: float):
        self.feed = feed
        self.steps_per_window = max(1, int(round(
            feed.aggregation_window / dt)))
        self._sums = np.zeros(feed.n_segments)
        self._counts = np.zeros(feed.n_segments)
        self._k = 0

    def update(self, time: float, positions, speeds):
        seg = np.floor((positions - self.feed.x0)
                       / self.feed.segment_length).astype(int)
        ok = (seg >= 0) & (seg < self.feed.n_segments)
        np.add.at(self._sums, seg[ok], speeds[ok])
        np.add.at(self._counts, seg[ok], 1.0)
        self._k += 1
        if self._k % self.steps_per_window == 0:
            with np.errstate(invalid="ignore"):
                means = np.where(self._counts > 0,
                                 self._sums / np.maximum(self._counts, 1.0),
                                 np.nan)
            self.feed.append(time, means)
            self._sums[:] = 0.0
            self._counts[:] = 0.0


def make_feed_for(traj: LeaderTrajectory, vehicles,
                  segment_length: float = 650.0) -> SegmentFeed:
    x_lo = min(v.position for v in vehicles) - 2 * segment_length
    x_hi = max(traj.speeds.max(), 1.0) * traj.duration + 2 * segment_length
    n = int(np.ceil((x_hi - x_lo) / segment_length))
    return SegmentFeed(x_lo, n, segment_length)


def run_scenario(cfg: ScenarioConfig) -> SimulationTrace:
    """Simulate the full scenario and return the per-step trace.

    Deterministic for a given config and seed. On collision the partial
    trace is attached to the raised CollisionError as ``.trace``.
    """
    traj = cfg.leader.resample()
    duration = traj.duration if cfg.duration is None \
        else min(cfg.duration, traj.duration)
    dt = 0.1
    n_steps = int(round(duration / dt))
    if n_steps < 1:
        raise DomainError("scenario too short")

    idm = replace(IdmParams(), noise_sigma=cfg.idm_noise_sigma)
    vehicles = build_platoon(cfg, idm)
    feed = make_feed_for(traj, vehicles) if cfg.use_planner_feed else None
    bank = _build_bank(cfg, vehicles, traj, idm, feed)
    world = make_world(vehicles, dt=dt, seed=cfg.seed, grade=cfg.grade)
    lane_rng = np.random.default_rng([cfg.seed, 0xC0FFEE])
    agg = _FeedAggregator(feed, dt) if feed is not None else None

    recorder = _TraceRecorder(world, dt, cfg.seed,
                              dynamic=cfg.lane_change_rate > 0)
    model = cfg.energy_model
    try:
        for _ in range(n_steps):
            pre_pos = world.pos.copy()
            pre_speed = world.speed.copy()
            pre_gaps = world.gaps()
            pre_ids = world.ids.copy()
            t = world.time
            step(world, bank)
            rates = fuel_rate(model, np.clip(pre_speed, 0.0, 45.0),
                              np.clip(world.accel, -6.0, 4.0), cfg.grade)
            recorder.record(t, pre_ids, pre_pos, pre_speed, world.accel,
                            pre_gaps, np.asarray(rates), world.last_flags,
                            world)
            if agg is not None:
                agg.update(world.time, pre_pos, pre_speed)
            if cfg.lane_change_rate > 0:
                inject_lane_change(world, cfg.lane_change_rate, lane_rng)
    except CollisionError as e:
        partial = recorder.finalize(aborted=str(e))
        e.trace = partial
        raise
    trace = recorder.finalize()
    trace.feed = feed
    return trace


class _TraceRecorder:
    def __init__(self, world: WorldState, dt: float, seed: int,
                 dynamic: bool):
        self.dt = dt
        self.seed = seed
        self.dynamic = dynamic
        self._meta = {int(vid): (bool(av), bool(eng))
                      for vid, av, eng in zip(world.ids, world.is_av,
                                              world.engaged)}
        if dynamic:
            self._rows = []
        else:
            self._ids = world.ids.copy()
            self._steps = []
        self._times = []

    def record(self, t, ids, pos, speed, accel, gaps, fuel, flags, world):
        self._times.append(t)
        for vid, av, eng in zip(world.ids, world.is_av, world.engaged):
            self._meta.setdefault(int(vid), (bool(av), bool(eng)))
        if self.dynamic:
            self._rows.append((ids, pos, speed, accel.copy(), gaps, fuel,
                               flags.copy()))
        else:
            self._steps.append((pos, speed, accel.copy(), gaps, fuel,
                                flags.copy()))

    def finalize(self, aborted=None) -> SimulationTrace:
        times = np.asarray(self._times)
        if self.dynamic:
            all_ids = sorted({int(v) for row in self._rows for v in row[0]})
            col = {vid: j for j, vid in enumerate(all_ids)}
            shape = (len(times), len(all_ids))
            arrays = [np.full(shape, np.nan) for _ in range(5)]
            wrapper = np.full(shape, -1, dtype=np.int8)
            for k, (ids, pos, speed, accel, gaps, fuel, flags) in \
                    enumerate(self._rows):
                jj = [col[int(v)] for v in ids]
                for arr, vals in zip(arrays, (pos, speed, accel, gaps,
                                              fuel)):
                    arr[k, jj] = vals
                wrapper[k, jj] = flags
            ids = np.asarray(all_ids)
        else:
            ids = self._ids
            stack = [np.stack([s[m] for s in self._steps])
                     for m in range(5)]
            arrays = stack
            wrapper = np.stack([s[5] for s in self._steps]).astype(np.int8)
        is_av = np.array([self._meta[int(v)][0] for v in ids])
        engaged = np.array([self._meta[int(v)][1] for v in ids])
        return SimulationTrace(times, ids, is_av, engaged, arrays[0],
                               arrays[1], arrays[2], arrays[3], arrays[4],
                               wrapper, dt=self.dt, seed=self.seed,
                               aborted=aborted)
