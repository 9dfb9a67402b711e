"""Desk-scale PPO: generalized advantage estimation, a clipped-surrogate
update with hand-derived gradients, and a single-platoon training loop
over synthetic leader trajectories.

The critic receives the platoon-mean fuel rate as an extra privileged
input on top of the policy observation. Training is deterministic for a
given config and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..drivers import IdmParams, idm_equilibrium_gap
from ..energy import DEFAULT_MODEL, fuel_rate, mpg
from ..errors import CollisionError, DomainError, NumericalError
from ..planner import DEFAULT_ADVICE
from ..simulation import (ExternalAccelController, IdmController,
                          LeaderReplayController, VehicleState,
                          make_world, step)
from ..trajectory import LeaderTrajectory, synth_trajectory
from ..wrappers import (failsafe_threshold, gap_closing_threshold,
                        wrap_acceleration, clip_speed_setting)
from .observations import (OBS_DIM_ACCEL, OBS_DIM_ACC_HIGH, OBS_DIM_ACC_LOW,
                           EGO_SPEED_HISTORY, build_obs_accel, build_obs_acc)
from .policy import Policy, init_policy, unsquash, squash
from .rewards import (ACCEL_COEFFS, ACC_COEFFS, RewardCoefficients,
                      reward_accel, reward_acc)

FUEL_UNIT_SCALE = 3600.0  # rewards see fuel in gal/hr


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    variant: str = "accel"            # "accel" | "acc_low" | "acc_high"
    scenario: str = "shockwave"
    trajectory_seed: int = 100
    duration: float = 600.0
    horizon: int = 900                # steps per episode
    platoon_humans: int = 9
    gamma: float = 0.995
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 5e-4
    value_lr: float = 3e-3
    n_iterations: int = 80
    steps_per_iter: int = 6000
    epochs: int = 4
    minibatch: int = 512
    entropy_coef: float = 0.005
    crash_penalty: float = 50.0
    reward_scale: float = 0.01        # scales rewards for GAE/value targets
    n_eval_windows: int = 4           # fixed probe windows for the curve
    dist_frac: float = 0.9            # episode ends at this fraction of the
                                      # leader's travel (fixed-road reward)
    lr_decay: float = 1.0             # lr multiplier applied per iteration
    sigma_init: float = 0.5           # initial action noise (latent std)
    speed_switch_mph: float = 60.0    # ACC composite transition
    coeffs: RewardCoefficients | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError("gamma must lie in (0, 1]")
        if self.horizon < 1:
            raise DomainError("horizon must be >= 1")
        if self.variant not in ("accel", "acc_low", "acc_high"):
            raise DomainError(f"unknown variant {self.variant!r}")

    def reward_coeffs(self) -> RewardCoefficients:
        if self.coeffs is not None:
            return self.coeffs
        base = ACCEL_COEFFS if self.variant == "accel" else ACC_COEFFS
        return replace(base, n=self.platoon_humans + 1)


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """G_t = sum_i gamma^i r_{t+i}, computed backward."""
    r = np.asarray(rewards, dtype=float)
    out = np.zeros_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def gae(rewards, values, last_value: float, gamma: float,
        lam: float) -> tuple[np.ndarray, np.ndarray]:
    """One-episode generalized advantages and value targets."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    v_next = np.append(v[1:], last_value)
    deltas = r + gamma * v_next - v
    adv = np.zeros_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + v


class Adam:
    """Adam over a dict of arrays; ``ascend`` adds the step, so callers
    pass objective gradients directly."""

    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def ascend(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads.get(k)
            if g is None:
                out[k] = p.copy()
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            out[k] = p + self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


class ValueNet:
    """Two-hidden-layer critic; input is the policy observation plus any
    privileged extras."""

    def __init__(self, in_dim: int, seed: int = 0, hidden: int = 64):
        rng = np.random.default_rng(seed)
        self.in_dim = in_dim
        self.hidden = hidden
        self.params = {
            "W1": rng.standard_normal((hidden, in_dim)) / np.sqrt(in_dim),
            "b1": np.zeros(hidden),
            "W2": rng.standard_normal((hidden, hidden)) / np.sqrt(hidden),
            "b2": np.zeros(hidden),
            "W_v": rng.standard_normal((1, hidden)) * 0.01 / np.sqrt(hidden),
            "b_v": np.zeros(1),
        }

    def _trunk(self, X):
        p = self.params
        H1 = np.tanh(X @ p["W1"].T + p["b1"])
        H2 = np.tanh(H1 @ p["W2"].T + p["b2"])
        return H1, H2

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        _, H2 = self._trunk(X)
        return (H2 @ self.params["W_v"].T + self.params["b_v"])[:, 0]

    def grad_mse(self, X: np.ndarray, targets: np.ndarray):
        """Loss 0.5*mean((V-R)^2) and its gradients (descent direction
        is the negative of these)."""
        p = self.params
        X = np.atleast_2d(np.asarray(X, dtype=float))
        H1, H2 = self._trunk(X)
        V = (H2 @ p["W_v"].T + p["b_v"])[:, 0]
        err = (V - np.asarray(targets, dtype=float)) / len(V)
        loss = 0.5 * float(np.sum(err * (V - targets)))
        dV = err[:, None]
        g = {"W_v": dV.T @ H2, "b_v": dV.sum(axis=0)}
        dH2 = dV @ p["W_v"]
        dZ2 = dH2 * (1.0 - H2 ** 2)
        g["W2"] = dZ2.T @ H1
        g["b2"] = dZ2.sum(axis=0)
        dH1 = dZ2 @ p["W2"]
        dZ1 = dH1 * (1.0 - H1 ** 2)
        g["W1"] = dZ1.T @ X
        g["b1"] = dZ1.sum(axis=0)
        return loss, g


@dataclass
class RolloutBatch:
    """Flattened (obs, action, log-prob, advantage, return) tuples plus
    the critic's augmented observations."""

    obs: np.ndarray
    latent: np.ndarray
    bars: np.ndarray | None
    logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    critic_obs: np.ndarray

    def __len__(self):
        return len(self.obs)


def ppo_update(rollouts: RolloutBatch, policy: Policy, cfg: TrainConfig,
               value_net: ValueNet | None = None,
               rng: np.random.Generator | None = None,
               lr_scale: float = 1.0):
    """One PPO update: clipped-surrogate ascent on the policy, value
    regression on the critic. Raises NumericalError (leaving the inputs
    untouched) if anything non-finite appears."""
    rng = rng or np.random.default_rng(0)
    n = len(rollouts)
    params = {k: v.copy() for k, v in policy.params.items()}
    pol = policy.with_params(params)
    opt = Adam(params, cfg.lr * lr_scale)
    vopt = Adam(value_net.params, cfg.value_lr) if value_net else None

    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            X = rollouts.obs[idx]
            U = rollouts.latent[idx]
            bars = rollouts.bars[idx] if rollouts.bars is not None else None
            A = rollouts.advantages[idx]
            logp_old = rollouts.logp[idx]

            logp_new = pol.log_prob(X, U, bars)
            ratio = np.exp(logp_new - logp_old)
            surr = np.minimum(ratio * A,
                              np.clip(ratio, 1 - cfg.clip_eps,
                                      1 + cfg.clip_eps) * A)
            if not np.all(np.isfinite(surr)):
                raise NumericalError("non-finite PPO surrogate")
            # gradient flows only where the unclipped branch is active
            active = np.where(A >= 0, ratio <= 1 + cfg.clip_eps,
                              ratio >= 1 - cfg.clip_eps)
            w = active * A * ratio / len(idx)
            grads = pol.grad_weighted_logp(X, U, w, bars)
            if cfg.entropy_coef:
                grads["log_std"] = grads["log_std"] + cfg.entropy_coef
            if any(not np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericalError("non-finite policy gradient")
            params = opt.ascend(params, grads)
            pol = pol.with_params(params)

            if value_net is not None:
                vloss, vgrads = value_net.grad_mse(rollouts.critic_obs[idx],
                                                   rollouts.returns[idx])
                if not np.isfinite(vloss):
                    raise NumericalError("non-finite value loss")
                neg = {k: -g for k, g in vgrads.items()}
                value_net.params = vopt.ascend(value_net.params, neg)
    return pol


class AccelTrainingEnv:
    """Single platoon (1 AV + n humans) behind a replayed leader window.

    Actions arrive in latent space; the env squashes them onto the raw
    acceleration bounds, applies the failsafe / gap-closing wrapper and
    advances the shared integration engine. The reward runs over the
    AV's platoon with fuel expressed in gal/hr.
    """

    dt = 0.1

    def __init__(self, traj: LeaderTrajectory, humans: int,
                 coeffs: RewardCoefficients, horizon: int,
                 rng: np.random.Generator, crash_penalty: float = 50.0,
                 energy_model=DEFAULT_MODEL, idm: IdmParams = IdmParams(),
                 dist_frac: float = 0.9):
        self.traj = traj.resample(self.dt)
        self.humans = humans
        self.coeffs = coeffs
        self.horizon = horizon
        self.rng = rng
        self.crash_penalty = crash_penalty
        self.energy = energy_model
        self.idm = idm
        self.dist_frac = dist_frac
        self.obs_dim = OBS_DIM_ACCEL
        self.av_index = 1
        self._ext = None
        self.world = None
        self.bank = None
        self._speed_hist = []
        # per-episode fuel/distance accounting for the learning curve
        self.episode_fuel = 0.0
        self.episode_distance = 0.0

    @property
    def max_window_start(self) -> int:
        return max(1, len(self.traj.times) - self.horizon - 2)

    def _window(self, start: int | None) -> LeaderTrajectory:
        if start is None:
            start = int(self.rng.integers(0, self.max_window_start))
        sl = slice(start, start + self.horizon + 2)
        times = self.traj.times[sl]
        return LeaderTrajectory(times - times[0], self.traj.speeds[sl],
                                f"{self.traj.source_id}[{start}]")

    def reset(self, window_start: int | None = None) -> np.ndarray:
        window = self._window(window_start)
        v0 = float(window.speeds[0])
        eq_v = min(v0, 0.93 * self.idm.v0)
        gap = idm_equilibrium_gap(self.idm, eq_v)
        vehicles = [VehicleState(position=0.0, speed=v0, length=5.0,
                                 controller_id="leader")]
        pos = 0.0
        for i in range(1 + self.humans):
            pos -= vehicles[-1].length + gap
            cid = "av" if i == 0 else "idm"
            vehicles.append(VehicleState(position=pos, speed=v0, length=5.0,
                                         controller_id=cid,
                                         is_av=(i == 0), engaged=(i == 0)))
        self._ext = ExternalAccelController()
        self.bank = {
            "leader": LeaderReplayController(window),
            "av": self._ext,
            "idm": IdmController(self.idm),
        }
        self.world = make_world(vehicles, dt=self.dt, seed=0)
        self._speed_hist = [v0]
        self._steps = 0
        self.episode_fuel = 0.0
        self.episode_distance = 0.0
        # the episode covers a fixed stretch of road: it ends once the AV
        # has traveled dist_frac of the leader's displacement
        leader_travel = float(np.sum(window.speeds[1:]) * self.dt)
        self._x_done = (self.world.pos[self.av_index]
                        + self.dist_frac * leader_travel)
        # privileged critic input: platoon-mean fuel over the step ending
        # now (a state quantity; at reset, the coasting rate)
        rates0 = fuel_rate(self.energy, self.world.speed[self.av_index:],
                           np.zeros(1 + self.humans))
        self.last_mean_fuel_hr = float(np.mean(rates0)) * FUEL_UNIT_SCALE
        return self._obs()

    def _kinematics(self):
        w = self.world
        i = self.av_index
        v = w.speed[i]
        v_lead = w.speed[i - 1]
        h = w.pos[i - 1] - w.pos[i] - w.length[i - 1]
        return v, v_lead, h

    def _obs(self) -> np.ndarray:
        v, v_lead, h = self._kinematics()
        return build_obs_accel(v, v_lead, h,
                               failsafe_threshold(v, v_lead),
                               gap_closing_threshold(v),
                               self._speed_hist, DEFAULT_ADVICE)

    def step(self, latent_u: np.ndarray):
        v, v_lead, h = self._kinematics()
        a_raw = float(squash(np.asarray(latent_u, dtype=float)[None, :],
                             ((-3.0, 1.5),))[0, 0])
        a_cmd, flag = wrap_acceleration(a_raw, v, v_lead, h, self.dt)
        self._ext.pending = a_cmd
        h_min = failsafe_threshold(v, v_lead)
        h_max = gap_closing_threshold(v)

        pre_speeds = self.world.speed[self.av_index:].copy()
        crashed = False
        try:
            step(self.world, self.bank)
        except CollisionError:
            crashed = True

        if crashed:
            reward = -self.crash_penalty
            fuel_hr = np.zeros(1 + self.humans)
        else:
            accels = self.world.accel[self.av_index:]
            rates = fuel_rate(self.energy, pre_speeds,
                              np.clip(accels, -6.0, 4.0))
            fuel_hr = rates * FUEL_UNIT_SCALE
            a_out = float(self.world.accel[self.av_index])
            reward = reward_accel(self.coeffs, fuel_hr, a_out, h, v,
                                  h_min, h_max)
            self.episode_fuel += float(np.sum(rates)) * self.dt
            self.episode_distance += float(
                np.sum(self.world.speed[self.av_index:])) * self.dt
            self._speed_hist.append(float(self.world.speed[self.av_index]))
            self._speed_hist = self._speed_hist[-EGO_SPEED_HISTORY:]

        self._steps += 1
        finished = (not crashed
                    and self.world.pos[self.av_index] >= self._x_done)
        done = crashed or finished or self._steps >= self.horizon
        self.last_mean_fuel_hr = float(np.mean(fuel_hr))
        obs = self._obs() if not crashed else np.zeros(self.obs_dim)
        return obs, reward, done, {"mean_fuel_hr": self.last_mean_fuel_hr,
                                   "crashed": crashed,
                                   "finished": finished, "flag": flag}


class AccTrainingEnv(AccelTrainingEnv):
    """ACC-based variant: the policy requests a speed setting (clipped
    against the last second of speed history) and a gap bar; a linear
    plant executes the delayed set points."""

    def __init__(self, *args, variant: str = "acc_low", **kwargs):
        from ..drivers import AccPlantParams, AccSettings, acc_plant_accel
        super().__init__(*args, **kwargs)
        self.variant = "low" if variant == "acc_low" else "high"
        self.obs_dim = OBS_DIM_ACC_LOW if self.variant == "low" \
            else OBS_DIM_ACC_HIGH
        self.plant = AccPlantParams()
        self._acc_plant_accel = acc_plant_accel
        self._AccSettings = AccSettings

    def reset(self, window_start: int | None = None):
        from ..units import mps_to_mph
        # placeholder state so the base reset can build an observation
        self.settings = self._AccSettings.from_mph(45.0, 2)
        self._pending_settings = []
        self._mph_hist = []
        self._request_hist = []
        self._accel_hist = [0.0]
        super().reset(window_start)
        v0 = float(self.world.speed[self.av_index])
        start_mph = min(max(mps_to_mph(v0), 20.0), 73.0)
        self.settings = self._AccSettings.from_mph(start_mph, 2)
        self._mph_hist = [start_mph]
        self._request_hist = [start_mph]
        return self._obs()

    def _obs(self):
        from ..units import mps_to_mph
        v, v_lead, h = self._kinematics()
        return build_obs_acc(v, h, mps_to_mph(self.settings.speed_setting),
                             self.settings.gap_setting, DEFAULT_ADVICE,
                             self.variant, self._accel_hist,
                             self._speed_hist, self._request_hist)

    def step(self, latent_u, bar: int = 2):
        from ..units import mps_to_mph
        v, v_lead, h = self._kinematics()
        raw_mph = float(squash(np.asarray(latent_u, dtype=float)[None, :],
                               ((20.0, 73.0),))[0, 0])
        req_mph = clip_speed_setting(raw_mph, self._mph_hist)
        self._request_hist.append(req_mph)
        self._request_hist = self._request_hist[-10:]
        self._pending_settings.append(self._AccSettings.from_mph(req_mph, bar))
        if len(self._pending_settings) > self.plant.actuation_delay:
            self.settings = self._pending_settings.pop(0)

        a_cmd = self._acc_plant_accel(self.plant, self.settings, v, v_lead, h)
        self._ext.pending = a_cmd
        h_min = failsafe_threshold(v, v_lead)
        h_max = gap_closing_threshold(v)

        pre_speeds = self.world.speed[self.av_index:].copy()
        crashed = False
        try:
            step(self.world, self.bank)
        except CollisionError:
            crashed = True

        if crashed:
            reward = -self.crash_penalty
            fuel_hr = np.zeros(1 + self.humans)
        else:
            accels = self.world.accel[self.av_index:]
            rates = fuel_rate(self.energy, pre_speeds,
                              np.clip(accels, -6.0, 4.0))
            fuel_hr = rates * FUEL_UNIT_SCALE
            a_out = float(self.world.accel[self.av_index])
            reward = reward_acc(self.coeffs, a_out, v, DEFAULT_ADVICE.v_sp,
                                fuel_hr, h, h_min, h_max)
            self.episode_fuel += float(np.sum(rates)) * self.dt
            self.episode_distance += float(
                np.sum(self.world.speed[self.av_index:])) * self.dt
            new_v = float(self.world.speed[self.av_index])
            self._speed_hist.append(new_v)
            self._speed_hist = self._speed_hist[-10:]
            self._mph_hist.append(mps_to_mph(new_v))
            self._mph_hist = self._mph_hist[-10:]
            self._accel_hist.append(a_out)
            self._accel_hist = self._accel_hist[-6:]

        self._steps += 1
        finished = (not crashed
                    and self.world.pos[self.av_index] >= self._x_done)
        done = crashed or finished or self._steps >= self.horizon
        self.last_mean_fuel_hr = float(np.mean(fuel_hr))
        obs = self._obs() if not crashed else np.zeros(self.obs_dim)
        return obs, reward, done, {"mean_fuel_hr": self.last_mean_fuel_hr,
                                   "crashed": crashed,
                                   "finished": finished, "flag": "pass"}


def _make_env(cfg: TrainConfig, rng) -> AccelTrainingEnv:
    traj = synth_trajectory(cfg.scenario, cfg.duration, cfg.trajectory_seed)
    coeffs = cfg.reward_coeffs()
    if cfg.variant == "accel":
        return AccelTrainingEnv(traj, cfg.platoon_humans, coeffs,
                                cfg.horizon, rng, cfg.crash_penalty,
                                dist_frac=cfg.dist_frac)
    return AccTrainingEnv(traj, cfg.platoon_humans, coeffs, cfg.horizon,
                          rng, cfg.crash_penalty, variant=cfg.variant,
                          dist_frac=cfg.dist_frac)


# Latent-space bias putting the initial mean action near 0 m/s^2 for the
# accel variant (midpoint of [-3, 1.5] would otherwise brake constantly).
ACCEL_MU_BIAS = float(np.arctanh(2.0 * (0.0 - (-3.0)) / 4.5 - 1.0))


def _collect(env, policy, cfg, sample_rng):
    """One iteration of stochastic rollouts on random windows."""
    obs_l, lat_l, bar_l, logp_l, rew_l, crit_l = [], [], [], [], [], []
    ep_slices = []
    steps = 0
    while steps < cfg.steps_per_iter:
        obs = env.reset()
        ep_start = len(obs_l)
        done = False
        while not done:
            # privileged critic input is read before acting: the fuel of
            # the step that produced this state, not of this action
            state_fuel = env.last_mean_fuel_hr
            action, u, bar, logp = policy.sample(obs, sample_rng)
            if policy.has_categorical:
                nxt, r, done, info = env.step(u, bar)
            else:
                nxt, r, done, info = env.step(u)
            obs_l.append(obs)
            lat_l.append(u)
            bar_l.append(bar if bar is not None else 0)
            logp_l.append(logp)
            rew_l.append(r)
            crit_l.append(np.append(obs, state_fuel))
            obs = nxt
            steps += 1
        terminal_crit = np.append(obs, env.last_mean_fuel_hr)
        # crashes and distance-completions are true terminals (value 0);
        # horizon truncation bootstraps from the critic
        terminal = info.get("crashed", False) or info.get("finished", False)
        ep_slices.append((ep_start, len(obs_l), terminal_crit, terminal))
    return (np.asarray(obs_l), np.asarray(lat_l), np.asarray(bar_l),
            np.asarray(logp_l), np.asarray(rew_l), np.asarray(crit_l),
            ep_slices)


def evaluate_policy(env, policy, cfg) -> dict:
    """Deterministic (greedy) episodes on fixed, evenly spaced windows;
    this defines the reported learning curve."""
    starts = np.linspace(0, env.max_window_start - 1,
                         cfg.n_eval_windows).astype(int)
    returns = []
    fuel = 0.0
    distance = 0.0
    for s in starts:
        obs = env.reset(window_start=int(s))
        done, total = False, 0.0
        while not done:
            if policy.has_categorical:
                a, bar = policy.mean_action(obs)
                u = unsquash(np.array([a]), policy.bounds)
                obs, r, done, info = env.step(u, bar)
            else:
                a = policy.mean_action(obs)
                u = unsquash(np.array([a]), policy.bounds)
                obs, r, done, info = env.step(u)
            total += r
        returns.append(total)
        fuel += env.episode_fuel
        distance += env.episode_distance
    return {
        "mean_return": float(np.mean(returns)),
        "std_return": float(np.std(returns)),
        "system_mpg": float(mpg(distance, fuel)) if fuel > 0 else 0.0,
    }


def train(cfg: TrainConfig):
    """Train a policy on single-platoon episodes.

    Returns (best_policy, curve). Curve rows are dicts with keys iter,
    mean_return, std_return, system_mpg, where the return statistics
    come from greedy evaluation on fixed probe windows (so consecutive
    rows are comparable). Bit-reproducible per (cfg, seed).
    """
    master = np.random.default_rng(cfg.seed)
    env_rng, sample_rng, update_rng = master.spawn(3)
    env = _make_env(cfg, env_rng)

    mu_bias = ACCEL_MU_BIAS if cfg.variant == "accel" else 0.0
    policy = init_policy(cfg.variant, env.obs_dim,
                         seed=cfg.seed + 7_777, mu_bias=mu_bias,
                         log_std_init=float(np.log(cfg.sigma_init)))
    value_net = ValueNet(env.obs_dim + 1, seed=cfg.seed + 11_111)

    curve = []
    best_policy, best_return = policy, -np.inf

    for it in range(cfg.n_iterations):
        X, U, bars_all, logp_old, rewards, critic_obs, ep_slices = \
            _collect(env, policy, cfg, sample_rng)
        bars = bars_all if policy.has_categorical else None

        scaled = rewards * cfg.reward_scale
        values = value_net.predict(critic_obs)
        adv = np.empty(len(X))
        rets = np.empty(len(X))
        for (s, e, terminal_crit, terminal) in ep_slices:
            if terminal:
                last_v = 0.0
            else:
                last_v = float(value_net.predict(terminal_crit[None, :])[0])
            a, r = gae(scaled[s:e], values[s:e], last_v, cfg.gamma, cfg.lam)
            adv[s:e] = a
            rets[s:e] = r
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        batch = RolloutBatch(X, U, bars, logp_old, adv, rets, critic_obs)
        try:
            policy = ppo_update(batch, policy, cfg, value_net, update_rng,
                                lr_scale=cfg.lr_decay ** it)
        except NumericalError:
            pass  # keep old weights, try again with fresh rollouts

        stats = evaluate_policy(env, policy, cfg)
        stats["iter"] = it
        curve.append(stats)
        if stats["mean_return"] > best_return:
            best_return, best_policy = stats["mean_return"], policy

    return best_policy, curve


def curve_to_csv(curve, path) -> None:
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "mean_return", "std_return", "system_mpg"])
        for row in curve:
            w.writerow([row["iter"], f"{row['mean_return']:.12g}",
                        f"{row['std_return']:.12g}",
                        f"{row['system_mpg']:.12g}"])
