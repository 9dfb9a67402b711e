"""Train a small wave-dampening acceleration policy.

A short PPO run (a few minutes) on the stop-and-go preset, then a
head-to-head against the human-only baseline at 5 % AV penetration on a
held-out trajectory. For the full-strength configuration used by the
acceptance suite, see tests/test_acceptance.py or the `wavedamp train`
command.

Run:  python demos/04_train_policy.py
"""

import os
import time

import numpy as np

from wavedamp import ControllerSpec, ScenarioConfig, run_scenario, \
    synth_trajectory
from wavedamp.metrics import build_report, per_vehicle_stats
from wavedamp.rl.policy import save_policy
from wavedamp.rl.ppo import TrainConfig, curve_to_csv, train

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)


def main():
    cfg = TrainConfig(seed=0, n_iterations=40, steps_per_iter=6000,
                      horizon=900, platoon_humans=9)
    print("training a 64x64 acceleration policy (a few minutes)...")
    t0 = time.time()
    policy, curve = train(cfg)
    print(f"done in {time.time() - t0:.0f}s; eval return "
          f"{curve[0]['mean_return']:.0f} -> {curve[-1]['mean_return']:.0f}")

    save_policy(policy, os.path.join(OUT, "accel_policy.npz"))
    curve_to_csv(curve, os.path.join(OUT, "learning_curve.csv"))

    heldout = synth_trajectory("shockwave", 600, seed=999)
    base = run_scenario(ScenarioConfig(leader=heldout, n_platoons=4,
                                       humans_per_platoon=19, seed=1))
    rl = run_scenario(ScenarioConfig(
        leader=heldout, n_platoons=4, humans_per_platoon=19, seed=1,
        av_controller=ControllerSpec(kind="rl_accel", policy=policy)))
    mpg_b = build_report(base).system_mpg
    mpg_r = build_report(rl).system_mpg
    print(f"held-out trajectory: human baseline {mpg_b:.1f} mpg, "
          f"with RL AVs {mpg_r:.1f} mpg ({100 * (mpg_r / mpg_b - 1):+.1f}%)")

    stds = per_vehicle_stats(rl)
    av_std = stds["speed_std"][stds["is_av"]]
    print("per-AV speed std down the platoon chain:",
          np.round(av_std, 2))


if __name__ == "__main__":
    main()
