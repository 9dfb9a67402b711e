import numpy as np
import pytest

from wavedamp.trajectory import LeaderTrajectory


def const_trajectory(speed: float, duration: float,
                     dt: float = 0.1) -> LeaderTrajectory:
    t = dt * np.arange(int(round(duration / dt)) + 1)
    return LeaderTrajectory(t, np.full_like(t, float(speed)),
                            f"const{speed}")


def dip_trajectory(cruise: float, dip: float, duration: float,
                   t_dip: float = 30.0, dip_len: float = 15.0,
                   dt: float = 0.1) -> LeaderTrajectory:
    """Constant cruise with one sinusoidal dip-and-recover."""
    t = dt * np.arange(int(round(duration / dt)) + 1)
    v = np.full_like(t, float(cruise))
    mask = (t >= t_dip) & (t < t_dip + dip_len)
    v[mask] = cruise - dip * np.sin(np.pi * (t[mask] - t_dip) / dip_len)
    return LeaderTrajectory(t, v, "dip")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
