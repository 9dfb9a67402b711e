import numpy as np
import pytest

from wavedamp.errors import DomainError
from wavedamp.rl.rewards import (ACCEL_COEFFS, ACC_COEFFS,
                                 RewardCoefficients, reward_accel,
                                 reward_acc)

C = RewardCoefficients(c1=1.0, c2=0.2, c3=2.0, c4=0.05, n=10)
CA = RewardCoefficients(c1=0.02, c2=0.002, c3=1.0, c4=1.0, n=10)


class TestRewardAccel:
    def test_all_terms_vanish(self):
        r = reward_accel(C, np.zeros(10), a_out=0.0, h=5.0, v=0.5,
                         h_min=0.0, h_max=120.0)
        assert r == 0.0

    def test_indicator_only(self):
        r = reward_accel(C, np.zeros(10), a_out=0.0, h=5.0, v=0.5,
                         h_min=30.0, h_max=120.0)
        assert r == -C.c3

    def test_time_gap_term(self):
        r = reward_accel(C, np.zeros(10), a_out=0.0, h=60.0, v=30.0,
                         h_min=0.0, h_max=120.0)
        assert r == pytest.approx(-C.c4 * 2.0)

    def test_time_gap_gated(self):
        # h <= 10 or v <= 1 disables the term
        assert reward_accel(C, np.zeros(3), 0.0, 10.0, 30.0, 0.0, 120.0) \
            == 0.0
        assert reward_accel(C, np.zeros(3), 0.0, 60.0, 1.0, 0.0, 120.0) \
            == 0.0

    def test_closed_form_random(self, rng):
        for _ in range(100):
            e = rng.uniform(0, 3, 7)
            a = rng.uniform(-3, 1.5)
            h = rng.uniform(0.5, 300)
            v = rng.uniform(0, 35)
            h_min = rng.uniform(-50, 100)
            h_max = rng.uniform(100, 300)
            got = reward_accel(C, e, a, h, v, h_min, h_max)
            want = (-C.c1 * e.mean() - C.c2 * a * a
                    - C.c3 * (not h_min <= h <= h_max)
                    - C.c4 * (h / v) * (h > 10 and v > 1))
            assert got == pytest.approx(want, abs=1e-12)


class TestRewardAcc:
    def test_base_reward_is_one(self):
        r = reward_acc(CA, a=0.0, v=20.0, v_sp=20.0,
                       fuel_rates=np.zeros(10), h=50.0, h_min=10.0,
                       h_max=120.0)
        assert r == 1.0

    def test_tracking_term(self):
        r = reward_acc(CA, a=0.0, v=22.0, v_sp=20.0,
                       fuel_rates=np.zeros(10), h=50.0, h_min=10.0,
                       h_max=120.0)
        assert r == pytest.approx(1.0 - 4.0 * CA.c2)

    def test_intervention_indicator(self):
        r = reward_acc(CA, a=0.0, v=20.0, v_sp=20.0,
                       fuel_rates=np.zeros(10), h=130.0, h_min=10.0,
                       h_max=120.0)
        assert r == pytest.approx(1.0 - CA.c4)

    def test_closed_form_random(self, rng):
        for _ in range(100):
            e = rng.uniform(0, 3, 10)
            a = rng.uniform(-3, 1.5)
            v = rng.uniform(0, 35)
            v_sp = rng.uniform(0, 35)
            h = rng.uniform(0.5, 300)
            h_min = rng.uniform(0, 100)
            h_max = rng.uniform(100, 300)
            got = reward_acc(CA, a, v, v_sp, e, h, h_min, h_max)
            want = (1.0 - CA.c1 * a * a - CA.c2 * (v - v_sp) ** 2
                    - (CA.c3 / CA.n) * e.sum()
                    - CA.c4 * (h <= h_min or h >= h_max))
            assert got == pytest.approx(want, abs=1e-12)


def test_coefficient_validation():
    with pytest.raises(DomainError):
        RewardCoefficients(c1=-1.0, c2=0.0, c3=0.0, c4=0.0)
    with pytest.raises(DomainError):
        RewardCoefficients(c1=1.0, c2=0.0, c3=0.0, c4=0.0, n=0)
    assert ACCEL_COEFFS.n >= 1 and ACC_COEFFS.n >= 1


def test_empty_fuel_rates_rejected():
    with pytest.raises(DomainError):
        reward_accel(C, [], 0.0, 50.0, 10.0, 0.0, 120.0)
