import numpy as np
import pytest

from conftest import const_trajectory, dip_trajectory
from wavedamp.errors import DegenerateCluster, DomainError
from wavedamp.metrics import (BinnedAvStats, binned_stats, build_report,
                              distance_to_nearest_av, per_vehicle_stats,
                              spearman, speed_histogram, throughput,
                              time_space_export, time_space_grid,
                              va_gaussian_det)
from wavedamp.scenario import ScenarioConfig, run_scenario
from wavedamp.simulation import SimulationTrace


def toy_trace(speeds, positions=None, is_av=None, engaged=None, dt=0.1):
    """Tiny hand-built trace; speeds is (n_steps, n_vehicles)."""
    speeds = np.asarray(speeds, dtype=float)
    n, m = speeds.shape
    if positions is None:
        positions = np.cumsum(speeds * dt, axis=0) \
            - np.arange(m) * 30.0
    is_av = np.zeros(m, bool) if is_av is None else np.asarray(is_av)
    engaged = is_av.copy() if engaged is None else np.asarray(engaged)
    gaps = np.full((n, m), 50.0)
    gaps[:, 0] = np.inf
    accel = np.zeros((n, m))
    accel[:-1] = np.diff(speeds, axis=0) / dt
    fuel = np.full((n, m), 2e-4)
    wrapper = np.zeros((n, m), dtype=np.int8)
    return SimulationTrace(dt * np.arange(n), np.arange(m), is_av, engaged,
                           np.asarray(positions, dtype=float), speeds,
                           accel, gaps, fuel, wrapper, dt=dt)


class TestPerVehicleStats:
    def test_constant_speed(self):
        tr = toy_trace(np.full((50, 3), 17.0))
        st = per_vehicle_stats(tr)
        assert np.allclose(st["speed_mean"], 17.0)
        assert np.allclose(st["speed_std"], 0.0)

    def test_two_step_population_std(self):
        tr = toy_trace(np.array([[10.0], [20.0]]))
        st = per_vehicle_stats(tr)
        assert st["speed_mean"][0] == pytest.approx(15.0)
        assert st["speed_std"][0] == pytest.approx(5.0)  # population

    def test_fuel_and_distance_totals(self):
        tr = toy_trace(np.full((100, 2), 10.0))
        st = per_vehicle_stats(tr)
        assert st["fuel_gal"][0] == pytest.approx(100 * 2e-4 * 0.1)
        assert st["distance_m"][0] == pytest.approx(100.0)


class TestThroughput:
    def test_crossing_rate(self):
        # 10 vehicles all crossing x=0 within a 60 s trace
        speeds = np.full((600, 10), 10.0)
        positions = np.cumsum(speeds * 0.1, axis=0) \
            - 100.0 - 40.0 * np.arange(10)
        tr = toy_trace(speeds, positions)
        assert throughput(tr, 0.0) == pytest.approx(600.0)

    def test_no_crossings(self):
        speeds = np.zeros((600, 4))
        positions = np.tile(-10.0 * np.arange(1, 5), (600, 1))
        tr = toy_trace(speeds, positions)
        assert throughput(tr, -15.0) == 0.0

    def test_doubling_vehicles_doubles_throughput(self):
        speeds = np.full((600, 5), 10.0)
        pos = np.cumsum(speeds * 0.1, axis=0) - 100 - 40 * np.arange(5)
        tr1 = toy_trace(speeds, pos)
        speeds2 = np.full((600, 10), 10.0)
        pos2 = np.cumsum(speeds2 * 0.1, axis=0) \
            - 100 - np.tile(40 * np.arange(5), 2)
        tr2 = toy_trace(speeds2, pos2)
        assert throughput(tr2, 0.0) == pytest.approx(
            2 * throughput(tr1, 0.0))

    def test_outside_span_rejected(self):
        tr = toy_trace(np.full((10, 2), 5.0))
        with pytest.raises(DomainError):
            throughput(tr, 1e9)


class TestDistanceToAv:
    def test_single_av_ahead(self):
        speeds = np.zeros((1, 3))
        positions = np.array([[100.0, 70.0, 40.0]])
        tr = toy_trace(speeds, positions,
                       is_av=[False, True, False])
        ann = distance_to_nearest_av(tr)
        assert len(ann["distance"]) == 1  # only vehicle at 40 has AV ahead
        assert ann["distance"][0] == pytest.approx(30.0)

    def test_vehicle_ahead_of_all_avs_absent(self):
        positions = np.array([[100.0, 70.0]])
        tr = toy_trace(np.zeros((1, 2)), positions, is_av=[False, True])
        ann = distance_to_nearest_av(tr)
        assert len(ann["distance"]) == 0

    def test_nearest_of_two(self):
        positions = np.array([[90.0, 40.0, 0.0]])
        tr = toy_trace(np.zeros((1, 3)), positions,
                       is_av=[True, True, False])
        ann = distance_to_nearest_av(tr)
        assert ann["distance"][0] == pytest.approx(40.0)

    def test_disengaged_avs_ignored(self):
        positions = np.array([[90.0, 40.0, 0.0]])
        tr = toy_trace(np.zeros((1, 3)), positions,
                       is_av=[True, True, False],
                       engaged=[True, False, False])
        ann = distance_to_nearest_av(tr)
        assert ann["distance"][0] == pytest.approx(90.0)


class TestBinnedStats:
    def test_single_bin(self):
        ann = {"distance": np.full(5, 25.0), "speed": np.full(5, 10.0),
               "fuel": np.full(5, 1e-4), "accel": np.zeros(5)}
        bs = binned_stats(ann)
        assert len(bs.counts) == 1
        assert bs.counts[0] == 5
        assert bs.speed_mean[0] == 10.0
        assert bs.speed_std[0] == 0.0

    def test_two_bins_partition(self):
        ann = {"distance": np.array([25.0, 75.0]),
               "speed": np.array([10.0, 20.0]),
               "fuel": np.array([1e-4, 2e-4]),
               "accel": np.zeros(2)}
        bs = binned_stats(ann)
        assert list(bs.counts) == [1, 1]
        assert bs.bin_edges[0] == 0.0
        assert bs.counts.sum() == 2

    def test_csv(self, tmp_path):
        ann = {"distance": np.array([10.0, 60.0]),
               "speed": np.array([5.0, 6.0]),
               "fuel": np.array([1e-4, 1e-4]),
               "accel": np.zeros(2)}
        p = tmp_path / "b.csv"
        binned_stats(ann).to_csv(p)
        assert p.read_text().startswith("bin_lo_m,bin_hi_m,count")


class TestVaGaussianDet:
    def test_hand_computed_quartet(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        det, count = va_gaussian_det(pts)
        assert det == pytest.approx(0.25)
        assert count == 4

    def test_identical_points_zero_det(self):
        pts = np.tile([[5.0, 0.2]], (6, 1))
        det, _ = va_gaussian_det(pts)
        assert det == pytest.approx(0.0, abs=1e-15)

    def test_split_filters_fast_points(self):
        slow = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        fast = np.array([[30.0, 3.0], [31.0, -3.0]])
        det, count = va_gaussian_det(np.vstack([slow, fast]))
        assert count == 4
        assert det == pytest.approx(0.25)

    def test_degenerate_cluster(self):
        with pytest.raises(DegenerateCluster):
            va_gaussian_det(np.array([[1.0, 0.0], [2.0, 0.0]]))

    def test_translation_invariance(self, rng):
        pts = rng.normal(10, 2, (200, 2))
        d1, _ = va_gaussian_det(pts, v_split=100.0)
        shifted = pts + np.array([3.0, 0.0])
        d2, _ = va_gaussian_det(shifted, v_split=100.0)
        assert d2 == pytest.approx(d1, rel=1e-9)
        assert d1 >= 0.0


class TestSpeedHistogram:
    def test_constant_speed_single_bin(self):
        tr = toy_trace(np.full((40, 2), 10.2))
        edges, freqs = speed_histogram(tr, bin_width=1.0)
        assert freqs.max() == pytest.approx(1.0)

    def test_mass_is_one(self):
        cfg = ScenarioConfig(leader=dip_trajectory(12.0, 5.0, 80),
                             n_platoons=1, humans_per_platoon=6)
        tr = run_scenario(cfg)
        _, freqs = speed_histogram(tr, bin_width=0.5)
        assert freqs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_decimation(self):
        tr = toy_trace(np.full((100, 4), 8.0))
        _, f1 = speed_histogram(tr, decimate=1)
        _, f10 = speed_histogram(tr, decimate=10)
        assert f1.sum() == pytest.approx(1.0)
        assert f10.sum() == pytest.approx(1.0)


class TestTimeSpace:
    def test_constant_speed_grid(self):
        tr = toy_trace(np.full((100, 3), 12.0))
        _, _, grid = time_space_grid(tr, cell=(20.0, 2.0))
        assert np.nanmin(grid) == pytest.approx(12.0)
        assert np.nanmax(grid) == pytest.approx(12.0)

    def test_empty_cells_are_nan(self):
        tr = toy_trace(np.full((10, 1), 5.0))
        _, _, grid = time_space_grid(tr, cell=(1.0, 0.2))
        assert np.isnan(grid).any()

    def test_export_matrix(self, tmp_path):
        tr = toy_trace(np.full((50, 2), 10.0))
        p = tmp_path / "ts.csv"
        pos_e, time_e, grid = time_space_export(tr, p, cell=(25.0, 1.0))
        lines = p.read_text().strip().splitlines()
        assert len(lines) == grid.shape[0] + 1
        assert lines[0].startswith("pos_m\\time_s")


class TestReportAndConservation:
    def test_fuel_conservation(self):
        cfg = ScenarioConfig(leader=const_trajectory(20.0, 60),
                             n_platoons=2, humans_per_platoon=4)
        tr = run_scenario(cfg)
        rep = build_report(tr)
        st = per_vehicle_stats(tr)
        followers = st["veh_id"] != 0
        assert rep.system_fuel_gal == pytest.approx(
            st["fuel_gal"][followers].sum(), abs=1e-9)
        assert rep.system_mpg == pytest.approx(
            (st["distance_m"][followers].sum() / 1609.344)
            / st["fuel_gal"][followers].sum(), abs=1e-9)

    def test_wrapper_rates_zero_for_idm(self):
        cfg = ScenarioConfig(leader=const_trajectory(20.0, 30),
                             n_platoons=1, humans_per_platoon=4)
        rep = build_report(run_scenario(cfg))
        assert rep.failsafe_rate == 0.0
        assert rep.gap_closing_rate == 0.0

    def test_csv_outputs(self, tmp_path):
        cfg = ScenarioConfig(leader=const_trajectory(15.0, 30),
                             n_platoons=1, humans_per_platoon=2)
        rep = build_report(run_scenario(cfg))
        rep.table_to_csv(tmp_path / "t.csv")
        rep.summary_to_csv(tmp_path / "s.csv")
        assert (tmp_path / "t.csv").read_text().startswith("veh_id,is_av")
        header = (tmp_path / "s.csv").read_text().splitlines()[0]
        assert "system_mpg" in header and "throughput_vph" in header


class TestSpearman:
    def test_perfect_orders(self):
        x = np.arange(10.0)
        assert spearman(x, x) == pytest.approx(1.0)
        assert spearman(x, -x) == pytest.approx(-1.0)

    def test_ties_averaged(self):
        assert abs(spearman([1, 1, 2, 2], [1, 2, 1, 2])) < 1e-9

    def test_monotone_nonlinear(self):
        x = np.linspace(0, 5, 20)
        assert spearman(x, np.exp(x)) == pytest.approx(1.0)
