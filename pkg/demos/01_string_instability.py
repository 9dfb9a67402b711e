"""Wave growth in a human-only platoon.

A 25-vehicle IDM platoon follows a leader that performs one 5 m/s
dip-and-recover at a congested cruise speed. The default car-following
parameters are string unstable there, so the perturbation amplifies as
it propagates upstream. Writes per-vehicle amplitudes and (optionally)
plots speed traces.

Run:  python demos/01_string_instability.py
"""

import os

import numpy as np

from wavedamp import ScenarioConfig, run_scenario
from wavedamp.trajectory import LeaderTrajectory

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)


def dip_trajectory(cruise=10.0, dip=5.0, duration=300.0, dt=0.1):
    t = dt * np.arange(int(duration / dt) + 1)
    v = np.full_like(t, cruise)
    mask = (t >= 30.0) & (t < 45.0)
    v[mask] = cruise - dip * np.sin(np.pi * (t[mask] - 30.0) / 15.0)
    return LeaderTrajectory(t, v, "single-dip")


def main():
    cfg = ScenarioConfig(leader=dip_trajectory(), n_platoons=1,
                         humans_per_platoon=24)
    trace = run_scenario(cfg)

    amplitude = trace.speed.max(axis=0) - trace.speed.min(axis=0)
    print("dip amplitude at the leader: 5.0 m/s")
    for veh in (1, 5, 13, 20, 25):
        print(f"  vehicle {veh:2d}: peak-to-trough {amplitude[veh]:.2f} m/s")
    growth = amplitude[25] / amplitude[5]
    print(f"growth vehicle 25 vs vehicle 5: {growth:.2f}x "
          f"({'amplifying' if growth > 1 else 'decaying'})")

    csv_path = os.path.join(OUT, "string_instability_amplitudes.csv")
    with open(csv_path, "w") as f:
        f.write("vehicle,amplitude_mps\n")
        for k, a in enumerate(amplitude):
            f.write(f"{k},{a:.6f}\n")
    print(f"wrote {csv_path}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(9, 4))
        for veh in (0, 5, 13, 25):
            label = "leader" if veh == 0 else f"vehicle {veh}"
            ax.plot(trace.times, trace.speed[:, veh], label=label, lw=1)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("speed [m/s]")
        ax.set_title("one dip amplifying through a human platoon")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(OUT, "string_instability.png"), dpi=120)
        print(f"wrote {os.path.join(OUT, 'string_instability.png')}")
    except ImportError:
        print("matplotlib not installed; skipping the plot")


if __name__ == "__main__":
    main()
