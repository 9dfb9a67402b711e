import math

import numpy as np
import pytest

from wavedamp.errors import InsufficientHistory, RangeError
from wavedamp.wrappers import (clip_speed_setting, estimate_accel,
                               failsafe_threshold, gap_closing_threshold,
                               speed_diff, ttc, wrap_acceleration,
                               WrapperThresholds)


class TestThresholds:
    def test_gap_closing(self):
        assert gap_closing_threshold(10.0) == 120.0
        assert gap_closing_threshold(20.0) == 120.0  # boundary 6*20
        assert gap_closing_threshold(30.0) == 180.0

    def test_failsafe_paper_case_exact(self):
        # both at 30 m/s: inflated speed 34 + 1, diff 5, threshold 30 m
        assert failsafe_threshold(30.0, 30.0) == 30.0

    def test_failsafe_standstill(self):
        assert failsafe_threshold(0.0, 0.0) == pytest.approx(6.0)

    def test_failsafe_opening_gap_negative(self):
        assert failsafe_threshold(30.0, 40.0) == pytest.approx(-30.0)

    def test_ttc_cases(self):
        assert ttc(30.0, 30.0, 30.0) == pytest.approx(6.0)
        assert ttc(30.0, 30.0, 15.0) == pytest.approx(3.0)
        assert ttc(10.0, 40.0, 50.0) == math.inf

    def test_trigger_forms_equivalent(self, rng):
        # h <= h_min iff ttc <= 6 whenever the closing speed is positive
        for _ in range(100_000):
            v = rng.uniform(0, 35)
            v_lead = rng.uniform(0, 45)
            h = rng.uniform(0.1, 400)
            vd = speed_diff(v, v_lead)
            if vd > 0:
                assert (h <= failsafe_threshold(v, v_lead)) == \
                    (ttc(v, v_lead, h) <= 6.0)
            else:
                assert ttc(v, v_lead, h) == math.inf


class TestWrapAcceleration:
    def test_failsafe_case(self):
        a, flag = wrap_acceleration(0.5, 30.0, 30.0, 20.0)
        assert (a, flag) == (-3.0, "failsafe")

    def test_gap_closing_case(self):
        a, flag = wrap_acceleration(0.4, 30.0, 30.0, 200.0)
        assert (a, flag) == (1.5, "gap_close")

    def test_pass_through(self):
        a, flag = wrap_acceleration(0.4, 30.0, 30.0, 100.0)
        assert (a, flag) == (0.4, "pass")

    def test_action_range_enforced(self):
        with pytest.raises(RangeError):
            wrap_acceleration(2.0, 10.0, 10.0, 50.0)
        with pytest.raises(RangeError):
            wrap_acceleration(-3.5, 10.0, 10.0, 50.0)

    def test_speed_limit_clip(self):
        # at 35 m/s: positive output would exceed the speed cap
        a, flag = wrap_acceleration(1.5, 35.0, 35.0, 119.0)
        assert a == pytest.approx(0.0)
        # at rest it cannot command reversing
        a, _ = wrap_acceleration(-3.0, 0.0, 20.0, 100.0)
        assert a == pytest.approx(0.0)

    def test_precedence_exactly_one_flag(self, rng):
        for _ in range(10_000):
            v = rng.uniform(0, 35)
            v_lead = rng.uniform(0, 45)
            h = rng.uniform(0.5, 500)
            a_raw = rng.uniform(-3, 1.5)
            a, flag = wrap_acceleration(a_raw, v, v_lead, h)
            if ttc(v, v_lead, h) <= 6.0:
                assert flag == "failsafe"
            elif h >= gap_closing_threshold(v):
                assert flag == "gap_close"
            else:
                assert flag == "pass"

    def test_thresholds_bundle(self):
        th = WrapperThresholds.from_state(30.0, 30.0, 30.0)
        assert th.h_min == 30.0
        assert th.h_max == 180.0
        assert th.ttc == pytest.approx(6.0)


class TestClipSpeedSetting:
    def test_upper_bound(self):
        assert clip_speed_setting(70.0, [50.0] * 10) == 55.0

    def test_lower_bound(self):
        assert clip_speed_setting(10.0, [50.0] * 10) == 35.0

    def test_global_floor_dominates(self):
        assert clip_speed_setting(0.0, [10.0] * 10) == 20.0

    def test_global_ceiling(self):
        assert clip_speed_setting(90.0, [73.0] * 10) == 73.0

    def test_idempotent(self, rng):
        for _ in range(1000):
            hist = list(rng.uniform(0, 80, 10))
            raw = rng.uniform(-20, 120)
            once = clip_speed_setting(raw, hist)
            assert clip_speed_setting(once, hist) == once
            assert 20.0 <= once <= 73.0

    def test_short_history_padded(self):
        # three samples pad by replicating the most recent one
        assert clip_speed_setting(70.0, [40.0, 45.0, 50.0]) == \
            clip_speed_setting(70.0, [40.0, 45.0] + [50.0] * 8)

    def test_empty_history_raises(self):
        with pytest.raises(InsufficientHistory):
            clip_speed_setting(50.0, [])


class TestEstimateAccel:
    def test_constant_speed(self):
        assert estimate_accel([12.0] * 8) == 0.0

    def test_linear_ramp(self):
        v = [10.0 + 0.1 * k for k in range(10)]  # 1 m/s^2 ramp
        assert estimate_accel(v) == pytest.approx(1.0)

    def test_window_of_four_diffs(self):
        v = [10.0, 10.0, 10.1, 10.3, 10.6, 11.0]
        # last four diffs: 0.1, 0.2, 0.3, 0.4 -> mean 0.25 / 0.1
        assert estimate_accel(v) == pytest.approx(2.5)

    def test_requires_five_samples(self):
        with pytest.raises(InsufficientHistory):
            estimate_accel([1.0, 2.0, 3.0, 4.0])

    def test_bounded_by_max_difference(self, rng):
        for _ in range(500):
            v = rng.uniform(0, 35, 12)
            est = estimate_accel(v)
            assert abs(est) <= np.abs(np.diff(v)).max() / 0.1 + 1e-12
