"""Classical wave smoothing with FollowerStopper.

Two 40-vehicle runs on the same stop-and-go leader profile: all-human
versus one velocity-command AV per platoon (5 % penetration). Prints the
variance reduction and fuel economy change, and draws both time-space
diagrams if matplotlib is available.

Run:  python demos/02_follower_stopper.py
"""

import os

import numpy as np

from wavedamp import (ControllerSpec, FsParams, ScenarioConfig,
                      run_scenario, synth_trajectory)
from wavedamp.metrics import build_report, per_vehicle_stats, time_space_grid

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)


def follower_variance(trace):
    stds = per_vehicle_stats(trace)["speed_std"][1:]
    return float(np.mean(stds ** 2))


def main():
    traj = synth_trajectory("shockwave", 600, seed=42)
    human = ScenarioConfig(leader=traj, n_platoons=2, humans_per_platoon=19)
    fs = ScenarioConfig(
        leader=traj, n_platoons=2, humans_per_platoon=19,
        av_controller=ControllerSpec(
            kind="follower_stopper",
            fs=FsParams(v_des=float(traj.speeds.mean()))))

    tr_h = run_scenario(human)
    tr_fs = run_scenario(fs)
    var_h, var_fs = follower_variance(tr_h), follower_variance(tr_fs)
    mpg_h = build_report(tr_h).system_mpg
    mpg_fs = build_report(tr_fs).system_mpg

    print(f"platoon speed variance: human {var_h:.2f} -> "
          f"FollowerStopper {var_fs:.2f} "
          f"({100 * (1 - var_fs / var_h):.0f}% reduction)")
    print(f"system fuel economy:    human {mpg_h:.1f} mpg -> "
          f"FollowerStopper {mpg_fs:.1f} mpg "
          f"({100 * (mpg_fs / mpg_h - 1):+.0f}%)")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
        for ax, tr, title in ((axes[0], tr_h, "all human"),
                              (axes[1], tr_fs, "FollowerStopper AVs")):
            pe, te, grid = time_space_grid(tr, cell=(25.0, 2.0))
            im = ax.pcolormesh(te, pe, grid, cmap="RdYlGn", vmin=0,
                               vmax=25)
            ax.set_ylabel("position [m]")
            ax.set_title(title)
        axes[1].set_xlabel("time [s]")
        fig.colorbar(im, ax=axes, label="speed [m/s]")
        path = os.path.join(OUT, "follower_stopper_time_space.png")
        fig.savefig(path, dpi=120)
        print(f"wrote {path}")
    except ImportError:
        print("matplotlib not installed; skipping the plot")


if __name__ == "__main__":
    main()
