"""Acceptance suite: every top-level requirement as one test, each
printing a PASS/FAIL line (run with ``pytest tests/test_acceptance.py
-v -s`` to see the lines as they complete).

Criterion 5 trains three PPO seeds and is the long pole (about 15
minutes); the later criteria reuse its evaluation traces.
"""

import math
import time

import numpy as np
import pytest

import wavedamp as wd
from conftest import dip_trajectory
from wavedamp.metrics import (binned_stats, build_report,
                              distance_to_nearest_av, per_vehicle_stats,
                              spearman, va_gaussian_det)
from wavedamp.rl.ppo import TrainConfig, train
from wavedamp.rl.rewards import RewardCoefficients


def _check(num, desc, cond):
    print(f"[criterion {num}] {'PASS' if cond else 'FAIL'}: {desc}",
          flush=True)
    assert cond, f"criterion {num} failed: {desc}"


# ---------------------------------------------------------------- 1
def test_criterion_1_string_instability():
    t0 = time.monotonic()
    cfg = wd.ScenarioConfig(leader=dip_trajectory(10.0, 5.0, 300),
                            n_platoons=1, humans_per_platoon=24)
    trace = wd.run_scenario(cfg)
    elapsed = time.monotonic() - t0
    amp = (trace.speed.max(axis=0) - trace.speed.min(axis=0))[1:]
    thirds = [amp[0:8].mean(), amp[8:16].mean(), amp[16:25].mean()]
    _check(1, f"amplitude thirds {np.round(thirds, 2)} monotone, "
              f"veh25/veh5 = {amp[24] / amp[4]:.2f} >= 1.2, "
              f"runtime {elapsed:.1f}s < 10s",
           thirds[0] < thirds[1] < thirds[2]
           and amp[24] > 1.2 * amp[4] and elapsed < 10.0)


# ---------------------------------------------------------------- 2
def _reference_wrap(a_raw, v, v_lead, h, dt=0.1):
    """Straight-line transcription of the three-case override law."""
    v_diff = (v * 34.0) / 30.0 + 1.0 - v_lead
    ttc = h / v_diff if v_diff > 0 else math.inf
    if ttc <= 6.0:
        a = -3.0
    elif h >= max(120.0, 6.0 * v):
        a = 1.5
    else:
        a = a_raw
    a = min(a, (35.0 - v) / dt)
    a = max(a, (0.0 - v) / dt)
    return a


def test_criterion_2_wrapper_exactness():
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100_000):
        v = rng.uniform(0, 35)
        v_lead = rng.uniform(0, 45)
        h = rng.uniform(0.1, 500)
        a_raw = rng.uniform(-3, 1.5)
        got, _ = wd.wrap_acceleration(a_raw, v, v_lead, h)
        if got != _reference_wrap(a_raw, v, v_lead, h):
            mismatches += 1
    exact_case = wd.failsafe_threshold(30.0, 30.0)
    _check(2, f"10^5 fuzzed states bitwise-identical "
              f"(mismatches={mismatches}); h_min(30,30) == 30.0 exactly "
              f"(got {exact_case!r})",
           mismatches == 0 and exact_case == 30.0)


# ---------------------------------------------------------------- 3
def test_criterion_3_follower_stopper_smoothing():
    t0 = time.monotonic()
    traj = wd.synth_trajectory("shockwave", 600, seed=42)
    base = wd.ScenarioConfig(leader=traj, n_platoons=2,
                             humans_per_platoon=19)
    fs = wd.ScenarioConfig(
        leader=traj, n_platoons=2, humans_per_platoon=19,
        av_controller=wd.ControllerSpec(
            kind="follower_stopper",
            fs=wd.FsParams(v_des=float(traj.speeds.mean()))))

    def variance(trace):
        stds = per_vehicle_stats(trace)["speed_std"][1:]
        return float(np.mean(stds ** 2))

    v_idm = variance(wd.run_scenario(base))
    v_fs = variance(wd.run_scenario(fs))
    elapsed = time.monotonic() - t0
    reduction = 1.0 - v_fs / v_idm
    _check(3, f"speed variance {v_idm:.2f} -> {v_fs:.2f} "
              f"({reduction:.0%} reduction >= 25%), "
              f"runtime {elapsed:.1f}s < 60s",
           reduction >= 0.25 and elapsed < 60.0)


# ---------------------------------------------------------------- 4
def test_criterion_4_energy_convexity():
    report = wd.check_convexity(wd.DEFAULT_MODEL, tol=-1e-9)
    dt = 0.1
    up = np.arange(10.0, 30.0, dt)
    down = np.arange(30.0, 10.0, -dt)
    saw = np.concatenate([np.tile(np.concatenate([up, down]), 5), [10.0]])
    d_saw, f_saw = wd.profile_fuel(wd.DEFAULT_MODEL, saw, dt)
    n = int(d_saw / (30.0 * dt)) + 1
    d_c, f_c = wd.profile_fuel(wd.DEFAULT_MODEL, np.full(n, 30.0), dt)
    ordering = wd.mpg(d_c, f_c) > wd.mpg(d_saw, f_saw)
    _check(4, f"{report.n_checked} stencils, "
              f"{len(report.violations)} violations at -1e-9; "
              f"constant-30 {wd.mpg(d_c, f_c):.1f} mpg > sawtooth "
              f"{wd.mpg(d_saw, f_saw):.1f} mpg",
           report.ok and ordering)


# ------------------------------------------------------- 5 / 6 / 7
TRAIN_SEEDS = (0, 1, 2)
HELD_OUT_SEEDS = (201, 202, 203)


def acceptance_train_config(seed: int) -> TrainConfig:
    """The benchmark preset: single platoon, stop-and-go leader."""
    return TrainConfig(
        seed=seed, n_iterations=80, steps_per_iter=6000, horizon=900,
        platoon_humans=9, gamma=0.995, lam=0.95, epochs=4,
        entropy_coef=0.005, lr=5e-4,
        coeffs=RewardCoefficients(c1=1.0, c2=0.2, c3=2.0, c4=0.01, n=10))


@pytest.fixture(scope="module")
def training_runs():
    t0 = time.monotonic()
    runs = []
    for seed in TRAIN_SEEDS:
        policy, curve = train(acceptance_train_config(seed))
        runs.append({
            "seed": seed,
            "policy": policy,
            "first": curve[0]["mean_return"],
            "last": curve[-1]["mean_return"],
        })
    return runs, time.monotonic() - t0


def _mpg_gain(policy, traj_seed, n_platoons, **scenario_kw):
    traj = wd.synth_trajectory("shockwave", 600, seed=traj_seed)
    base = wd.run_scenario(wd.ScenarioConfig(
        leader=traj, n_platoons=n_platoons, humans_per_platoon=19, seed=1,
        **scenario_kw))
    rl = wd.run_scenario(wd.ScenarioConfig(
        leader=traj, n_platoons=n_platoons, humans_per_platoon=19, seed=1,
        av_controller=wd.ControllerSpec(kind="rl_accel", policy=policy),
        **scenario_kw))
    base_mpg = build_report(base).system_mpg
    rl_mpg = build_report(rl).system_mpg
    return base_mpg, rl_mpg, rl


VALIDATION_SEED = 300  # disjoint from both training and held-out seeds


@pytest.fixture(scope="module")
def selected_policy(training_runs):
    """Model selection on a validation trajectory (not the held-out set)."""
    runs, _ = training_runs
    gains = []
    for r in runs:
        b, m, _ = _mpg_gain(r["policy"], VALIDATION_SEED, n_platoons=4)
        gains.append((m - b) / b)
    return runs[int(np.argmax(gains))]["policy"]


@pytest.fixture(scope="module")
def rl_evaluations(selected_policy):
    evals = []
    for seed in HELD_OUT_SEEDS:
        base_mpg, rl_mpg, rl = _mpg_gain(selected_policy, seed,
                                         n_platoons=10)
        evals.append({
            "held_out_seed": seed,
            "baseline_mpg": base_mpg,
            "rl_mpg": rl_mpg,
            "rl_trace": rl,
        })
    return evals


def test_criterion_5_training_smoke(training_runs, rl_evaluations):
    runs, train_elapsed = training_runs
    improvements = [(r["last"] - r["first"]) / abs(r["first"])
                    for r in runs]
    all_improved = all(imp >= 0.20 for imp in improvements)
    gains = [(e["rl_mpg"] - e["baseline_mpg"]) / e["baseline_mpg"]
             for e in rl_evaluations]
    n_winning = sum(g >= 0.05 for g in gains)
    _check(5, f"per-seed return improvement "
              f"{[f'{i:+.0%}' for i in improvements]} (all >= +20%); "
              f"held-out system-mpg gains {[f'{g:+.1%}' for g in gains]} "
              f"(>= +5% on {n_winning}/3, need 2); training wall clock "
              f"{train_elapsed / 60:.1f} min <= 30 min",
           all_improved and n_winning >= 2 and train_elapsed <= 1800.0)


def test_criterion_6_smoothing_signature(rl_evaluations):
    rhos = []
    for e in rl_evaluations:
        stats = per_vehicle_stats(e["rl_trace"])
        av_std = stats["speed_std"][stats["is_av"]]
        assert len(av_std) == 10
        rhos.append(spearman(np.arange(len(av_std)), av_std))
    _check(6, f"per-AV speed std vs platoon index Spearman "
              f"{[f'{r:+.2f}' for r in rhos]} (all < 0)",
           all(r < 0 for r in rhos))


def test_criterion_7_analysis_methodology(selected_policy):
    # Field-condition trace: noisy human drivers plus steady cut-in /
    # cut-out churn, so platoon membership decoheres from the wave phase
    # the way multi-lane highway data does. Without churn every platoon
    # compresses in lockstep with the replayed wave and the distance
    # bins sample fixed wave phases instead of traffic state.
    traj = wd.synth_trajectory("shockwave", 600, seed=HELD_OUT_SEEDS[0])
    trace = wd.run_scenario(wd.ScenarioConfig(
        leader=traj, n_platoons=10, humans_per_platoon=19, seed=1,
        idm_noise_sigma=0.1, lane_change_rate=90.0,
        av_controller=wd.ControllerSpec(kind="rl_accel",
                                        policy=selected_policy)))
    ann = distance_to_nearest_av(trace)
    bs = binned_stats(ann, bin_width=50.0)
    std_near_bin = bs.speed_std[0]    # [0, 50)
    std_far_bin = bs.speed_std[10]    # [500, 550)
    near = ann["distance"] <= 300
    far = (ann["distance"] > 300) & (ann["distance"] <= 600)
    det_near, _ = va_gaussian_det(
        np.column_stack([ann["speed"][near], ann["accel"][near]]))
    det_far, _ = va_gaussian_det(
        np.column_stack([ann["speed"][far], ann["accel"][far]]))
    _check(7, f"binned speed std [0,50)={std_near_bin:.2f} <= "
              f"[500,550)={std_far_bin:.2f}; covariance determinant "
              f"near={det_near:.2f} < far={det_far:.2f}",
           std_near_bin <= std_far_bin and det_near < det_far)


# ---------------------------------------------------------------- 8
def test_criterion_8_manifest_reproducibility(tmp_path):
    import hashlib
    import json

    from wavedamp.cli import main, rerun_from_manifest

    def digest(path):
        return hashlib.sha256(open(path, "rb").read()).hexdigest()

    results = []

    cfg = {"scenario": "shockwave", "duration": 90.0, "n_platoons": 1,
           "humans_per_platoon": 3, "seed": 5, "trajectory_seed": 5,
           "av_controller": "rl"}
    cfg_path = tmp_path / "sim.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out),
                 "--policy", "stub:accel"]) == 0
    rerun = tmp_path / "sim_rerun"
    assert rerun_from_manifest(str(out / "manifest.json"),
                               str(rerun)) == 0
    results.append(all(
        digest(out / n) == digest(rerun / n)
        for n in ("trace.csv", "metrics.csv", "summary.csv")))

    out = tmp_path / "gen"
    assert main(["gen-trajectory", "--kind", "bottleneck",
                 "--duration", "90", "--seed", "2", "--out",
                 str(out)]) == 0
    rerun = tmp_path / "gen_rerun"
    assert rerun_from_manifest(str(out / "manifest.json"),
                               str(rerun)) == 0
    results.append(digest(out / "bottleneck.csv")
                   == digest(rerun / "bottleneck.csv"))

    out = tmp_path / "eval"
    assert main(["evaluate", "--scenario", "freeflow", "--baseline",
                 "idm", "--duration", "60", "--n-platoons", "1",
                 "--penetration", "0.25", "--out", str(out)]) == 0
    rerun = tmp_path / "eval_rerun"
    assert rerun_from_manifest(str(out / "manifest.json"),
                               str(rerun)) == 0
    results.append(digest(out / "comparison.csv")
                   == digest(rerun / "comparison.csv"))

    trace_src = tmp_path / "sim" / "trace.csv"
    out = tmp_path / "analysis"
    assert main(["analyze", "--trace", str(trace_src), "--out",
                 str(out)]) == 0
    rerun = tmp_path / "analysis_rerun"
    assert rerun_from_manifest(str(out / "manifest.json"),
                               str(rerun)) == 0
    results.append(all(
        digest(out / n) == digest(rerun / n)
        for n in ("speed_histogram.csv", "time_space.csv")))

    _check(8, "simulate/gen-trajectory/evaluate/analyze re-runs from "
              "their manifests are byte-identical "
              f"({sum(results)}/4 command groups)",
           all(results))


# ---------------------------------------------------------------- 9
def test_criterion_9_unit_oracles():
    checks = []
    p = wd.IdmParams()

    # car-following law by direct substitution
    oracle = 1.3 * (1.0 - (30.0 / 35.0) ** 4 - (39.2 / 40.0) ** 2)
    checks.append(("idm accel -0.650",
                   abs(wd.idm_accel(p, 30, 30, 40) - oracle) <= 1e-3))
    # equilibrium gap closed form
    oracle = (2.0 + 30.0 * 1.24) / math.sqrt(1.0 - (30.0 / 35.0) ** 4)
    checks.append(("equilibrium gap 57.8",
                   abs(wd.idm_equilibrium_gap(p, 30.0) - oracle) <= 1e-3))
    # velocity-command band midpoint: u * 0.5 with u = min(v_lead, v_des)
    got = wd.follower_stopper_cmd(wd.FsParams(v_des=5.0), 4.0, 4.0, 4.875)
    checks.append(("follower-stopper mid-band 2.0",
                   abs(got - 2.0) <= 1e-3))
    # speed-setting clip cases
    checks.append(("clip 55 mph",
                   abs(wd.clip_speed_setting(70, [50] * 10) - 55) <= 1e-3))
    checks.append(("clip 35 mph",
                   abs(wd.clip_speed_setting(10, [50] * 10) - 35) <= 1e-3))
    checks.append(("clip 20 mph",
                   abs(wd.clip_speed_setting(0, [10] * 10) - 20) <= 1e-3))
    # sliding-window accel estimate: mean(0.1,0.2,0.3,0.4)/0.1
    got = wd.estimate_accel([10.0, 10.0, 10.1, 10.3, 10.6, 11.0])
    checks.append(("estimator 2.5", abs(got - 2.5) <= 1e-3))
    # covariance determinant of the unit quartet
    det, _ = wd.va_gaussian_det(
        np.array([[1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0]]))
    checks.append(("covariance det 0.25", abs(det - 0.25) <= 1e-3))

    failed = [name for name, ok in checks if not ok]
    _check(9, f"{len(checks)} frozen oracle values at 1e-3 "
              f"(failed: {failed or 'none'})", not failed)
