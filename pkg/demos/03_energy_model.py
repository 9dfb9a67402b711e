"""The optimization-friendly fuel-rate model.

Shows the shape properties the controllers rely on: the rate is convex
along acceleration, rate/speed is convex along speed, and steady driving
beats an oscillating profile of equal distance. Draws the rate contours
if matplotlib is available.

Run:  python demos/03_energy_model.py
"""

import os

import numpy as np

from wavedamp import (DEFAULT_MODEL, check_convexity, fuel_rate, mpg,
                      profile_fuel)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)


def main():
    m = DEFAULT_MODEL
    print(f"vehicle class: {m.vehicle_class}")
    print(f"idle rate: {m.idle_rate * 3600:.2f} gal/hr")
    for v in (5.0, 15.0, 30.0):
        r = fuel_rate(m, v, 0.0)
        print(f"  steady {v:4.1f} m/s: {r * 3600:.2f} gal/hr "
              f"= {mpg(v, r):.1f} mpg")

    report = check_convexity(m)
    print(f"convexity check: {report.n_checked} interior stencils, "
          f"{len(report.violations)} violations, "
          f"{report.n_skipped_boundary} skipped at the fuel-cut boundary")

    dt = 0.1
    up = np.arange(10.0, 30.0, dt)
    down = np.arange(30.0, 10.0, -dt)
    saw = np.concatenate([np.tile(np.concatenate([up, down]), 4), [10.0]])
    d_saw, f_saw = profile_fuel(m, saw, dt)
    steady = np.full(int(d_saw / (saw.mean() * dt)) + 1, saw.mean())
    d_c, f_c = profile_fuel(m, steady, dt)
    print(f"sawtooth 10<->30 m/s: {mpg(d_saw, f_saw):.1f} mpg; "
          f"steady {saw.mean():.1f} m/s over the same distance: "
          f"{mpg(d_c, f_c):.1f} mpg")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        v = np.linspace(0.5, 35, 120)
        a = np.linspace(-3, 1.5, 120)
        vv, aa = np.meshgrid(v, a)
        rates = fuel_rate(m, vv.ravel(), aa.ravel()).reshape(vv.shape)
        fig, ax = plt.subplots(figsize=(7, 5))
        cs = ax.contourf(vv, aa, rates * 3600, levels=25, cmap="viridis")
        fig.colorbar(cs, label="fuel rate [gal/hr]")
        ax.set_xlabel("speed [m/s]")
        ax.set_ylabel("acceleration [m/s^2]")
        ax.set_title("fuel-rate contours (no gear-shift jumps)")
        path = os.path.join(OUT, "energy_contours.png")
        fig.savefig(path, dpi=120)
        print(f"wrote {path}")
    except ImportError:
        print("matplotlib not installed; skipping the plot")


if __name__ == "__main__":
    main()
