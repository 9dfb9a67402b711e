"""Command-line entry point: simulate, train, evaluate, analyze and
gen-trajectory subcommands, each writing artifacts plus a run manifest
that fully reproduces them.

Exit codes: 0 success, 2 config parse error, 3 missing input file,
4 simulation abort (collision / exhausted trajectory), 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import numpy as np

from . import __version__
from .drivers import FsParams
from .energy import DEFAULT_MODEL, load_model
from .errors import (CollisionError, ConfigError, TrajectoryExhausted,
                     WavedampError)
from .metrics import (binned_stats, build_report, distance_to_nearest_av,
                      speed_histogram, time_space_export, va_gaussian_det)
from .rl.observations import (OBS_DIM_ACCEL, OBS_DIM_ACC_HIGH,
                              OBS_DIM_ACC_LOW)
from .rl.policy import (CompositeAccPolicy, init_policy, load_policy,
                        save_policy)
from .rl.ppo import TrainConfig, curve_to_csv, train
from .rl.rewards import RewardCoefficients
from .scenario import ControllerSpec, ScenarioConfig, run_scenario
from .simulation import SimulationTrace
from .trajectory import LeaderTrajectory, synth_trajectory

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_SIM_ABORT = 4

OUT_ROOT_ENV = "WAVEDAMP_OUT"

SCENARIO_KINDS = ("bottleneck", "shockwave", "freeflow")
BASELINES = ("idm", "follower_stopper", "stock_acc")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_obj(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir, command, config, seed, artifacts,
                   wall_clock_s) -> str:
    """One manifest per output directory; from it the command can be
    re-run bit-identically."""
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_hash": _sha256_obj(config),
        "artifacts": sorted(artifacts),
        "artifact_sha256": {os.path.basename(p): _sha256_file(p)
                            for p in sorted(artifacts)},
        "wall_clock_s": wall_clock_s,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def load_json_config(path) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e


def _leader_from_config(cfg: dict, seed: int) -> LeaderTrajectory:
    if "trajectory_csv" in cfg:
        if not os.path.exists(cfg["trajectory_csv"]):
            raise FileNotFoundError(cfg["trajectory_csv"])
        return LeaderTrajectory.from_csv(cfg["trajectory_csv"])
    kind = cfg.get("scenario", "shockwave")
    return synth_trajectory(kind, float(cfg.get("duration", 600.0)),
                            int(cfg.get("trajectory_seed", seed)))


def _policy_from_arg(policy_arg: str):
    """Load a policy file, or build a named stub (fresh random weights)
    for pipeline tests: stub:accel, stub:acc-low, stub:acc-high,
    stub:acc (composite of the two)."""
    if policy_arg.startswith("stub:"):
        kind = policy_arg.split(":", 1)[1]
        if kind == "accel":
            return init_policy("accel", OBS_DIM_ACCEL, seed=0)
        if kind == "acc-low":
            return init_policy("acc_low", OBS_DIM_ACC_LOW, seed=0)
        if kind == "acc-high":
            return init_policy("acc_high", OBS_DIM_ACC_HIGH, seed=0)
        if kind == "acc":
            return CompositeAccPolicy(
                init_policy("acc_low", OBS_DIM_ACC_LOW, seed=0),
                init_policy("acc_high", OBS_DIM_ACC_HIGH, seed=1))
        raise ConfigError(f"unknown policy stub {kind!r}")
    if not os.path.exists(policy_arg):
        raise FileNotFoundError(policy_arg)
    return load_policy(policy_arg)


def _controller_spec(name: str, traj: LeaderTrajectory,
                     policy=None) -> ControllerSpec:
    if name == "idm":
        return ControllerSpec(kind="idm")
    if name == "follower_stopper":
        v_des = float(np.mean(traj.speeds))
        return ControllerSpec(kind="follower_stopper",
                              fs=FsParams(v_des=max(v_des, 0.5)))
    if name == "stock_acc":
        return ControllerSpec(kind="stock_acc")
    if name == "rl":
        if isinstance(policy, CompositeAccPolicy):
            return ControllerSpec(kind="rl_acc", policy=policy)
        return ControllerSpec(kind="rl_accel", policy=policy)
    raise ConfigError(f"unknown controller {name!r}")


def _scenario_config(cfg: dict, seed: int,
                     policy=None) -> ScenarioConfig:
    traj = _leader_from_config(cfg, seed)
    controller = _controller_spec(cfg.get("av_controller", "idm"), traj,
                                  policy)
    energy = (load_model(cfg["energy_model"])
              if "energy_model" in cfg else DEFAULT_MODEL)
    return ScenarioConfig(
        leader=traj,
        n_platoons=int(cfg.get("n_platoons", 1)),
        humans_per_platoon=int(cfg.get("humans_per_platoon", 19)),
        av_controller=controller,
        idm_noise_sigma=float(cfg.get("idm_noise_sigma", 0.0)),
        lane_change_rate=float(cfg.get("lane_change_rate", 0.0)),
        seed=seed,
        grade=float(cfg.get("grade", 0.0)),
        use_planner_feed=bool(cfg.get("use_planner_feed", False)),
        energy_model=energy,
        duration=cfg.get("sim_duration"),
    )


def cmd_simulate(args) -> int:
    t0 = time.time()
    cfg = load_json_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    policy = _policy_from_arg(args.policy) if args.policy else None
    scen = _scenario_config(cfg, seed, policy)
    os.makedirs(args.out, exist_ok=True)
    try:
        trace = run_scenario(scen)
    except (CollisionError, TrajectoryExhausted) as e:
        trace = getattr(e, "trace", None)
        if trace is not None:
            trace.to_csv(os.path.join(args.out, "trace_partial.csv"))
        print(f"simulation aborted: {e}", file=sys.stderr)
        return EXIT_SIM_ABORT
    trace_path = os.path.join(args.out, "trace.csv")
    trace.to_csv(trace_path)
    report = build_report(trace)
    table_path = os.path.join(args.out, "metrics.csv")
    summary_path = os.path.join(args.out, "summary.csv")
    report.table_to_csv(table_path)
    report.summary_to_csv(summary_path)
    artifacts = [trace_path, table_path, summary_path]
    if getattr(trace, "feed", None) is not None:
        feed_path = os.path.join(args.out, "segment_feed.csv")
        trace.feed.to_csv(feed_path)
        artifacts.append(feed_path)
    write_manifest(args.out, "simulate", {**cfg, "seed": seed,
                                          "policy": args.policy},
                   seed, artifacts, round(time.time() - t0, 3))
    print(f"wrote {trace_path} (system mpg {report.system_mpg:.2f})")
    return EXIT_OK


def train_config_from_dict(cfg: dict, seed: int) -> TrainConfig:
    coeffs = None
    if "reward_coeffs" in cfg:
        c = cfg["reward_coeffs"]
        coeffs = RewardCoefficients(
            c1=float(c["c1"]), c2=float(c["c2"]), c3=float(c["c3"]),
            c4=float(c["c4"]), n=int(c.get("n", 10)))
    fields = dict(
        seed=seed,
        variant=cfg.get("variant", "accel"),
        scenario=cfg.get("scenario", "shockwave"),
        trajectory_seed=int(cfg.get("trajectory_seed", 100)),
        duration=float(cfg.get("duration", 600.0)),
        horizon=int(cfg.get("horizon", 900)),
        platoon_humans=int(cfg.get("platoon_humans", 9)),
        gamma=float(cfg.get("gamma", 0.995)),
        lam=float(cfg.get("lam", 0.95)),
        clip_eps=float(cfg.get("clip_eps", 0.2)),
        lr=float(cfg.get("lr", 5e-4)),
        value_lr=float(cfg.get("value_lr", 3e-3)),
        n_iterations=int(cfg.get("n_iterations", 80)),
        steps_per_iter=int(cfg.get("steps_per_iter", 6000)),
        epochs=int(cfg.get("epochs", 4)),
        minibatch=int(cfg.get("minibatch", 512)),
        entropy_coef=float(cfg.get("entropy_coef", 0.005)),
        coeffs=coeffs,
    )
    return TrainConfig(**fields)


def cmd_train(args) -> int:
    t0 = time.time()
    cfg = load_json_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tc = train_config_from_dict(cfg, seed)
    os.makedirs(args.out, exist_ok=True)
    policy, curve = train(tc)
    policy_path = os.path.join(args.out, "policy.npz")
    curve_path = os.path.join(args.out, "learning_curve.csv")
    save_policy(policy, policy_path)
    curve_to_csv(curve, curve_path)
    write_manifest(args.out, "train", {**cfg, "seed": seed}, seed,
                   [policy_path, curve_path], round(time.time() - t0, 3))
    print(f"wrote {policy_path}; final return "
          f"{curve[-1]['mean_return']:.1f}")
    return EXIT_OK


EVAL_HEADER = ["scenario", "controller", "mpg", "mpg_pct",
               "throughput_vph", "throughput_pct", "speed_mps", "speed_pct"]


def cmd_evaluate(args) -> int:
    t0 = time.time()
    policy = _policy_from_arg(args.policy) if args.policy else None
    scenarios = args.scenario or list(SCENARIO_KINDS)
    baselines = args.baseline or ["idm"]
    if "idm" not in baselines:
        baselines = ["idm"] + baselines  # percent columns need the IDM row
    # penetration -> platoon shape: 1 AV per round(1/p) vehicles
    humans = max(0, int(round(1.0 / args.penetration)) - 1)
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for scenario in scenarios:
        traj = synth_trajectory(scenario, args.duration,
                                seed=args.trajectory_seed)
        results = {}
        controllers = list(dict.fromkeys(baselines)) \
            + (["rl"] if policy is not None else [])
        for name in controllers:
            spec = _controller_spec(name, traj, policy)
            scen_cfg = ScenarioConfig(
                leader=traj, n_platoons=args.n_platoons,
                humans_per_platoon=humans, av_controller=spec,
                seed=args.seed or 0)
            trace = run_scenario(scen_cfg)
            rep = build_report(trace)
            results[name] = (rep.system_mpg, rep.throughput_vph,
                             rep.mean_speed)
        ref = results["idm"]

        def pct(val, base):
            return 100.0 * (val - base) / base if base else 0.0

        for name in controllers:
            mpg_v, thr_v, spd_v = results[name]
            rows.append([scenario, name, f"{mpg_v:.6g}",
                         f"{pct(mpg_v, ref[0]):.4g}", f"{thr_v:.6g}",
                         f"{pct(thr_v, ref[1]):.4g}", f"{spd_v:.6g}",
                         f"{pct(spd_v, ref[2]):.4g}"])

    table_path = os.path.join(args.out, "comparison.csv")
    with open(table_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(EVAL_HEADER)
        w.writerows(rows)
    config = {
        "scenarios": scenarios, "baselines": baselines,
        "policy": args.policy, "penetration": args.penetration,
        "n_platoons": args.n_platoons, "duration": args.duration,
        "trajectory_seed": args.trajectory_seed, "seed": args.seed or 0,
    }
    write_manifest(args.out, "evaluate", config, args.seed or 0,
                   [table_path], round(time.time() - t0, 3))
    print(f"wrote {table_path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    t0 = time.time()
    if not os.path.exists(args.trace):
        raise FileNotFoundError(args.trace)
    trace = SimulationTrace.from_csv(args.trace)
    os.makedirs(args.out, exist_ok=True)
    artifacts = []

    annotated = distance_to_nearest_av(trace)
    if len(annotated["distance"]):
        bs = binned_stats(annotated)
        p = os.path.join(args.out, "binned_stats.csv")
        bs.to_csv(p)
        artifacts.append(p)
        dets = []
        near = annotated["distance"] <= 300
        far = (annotated["distance"] > 300) & (annotated["distance"] <= 600)
        for label, mask in (("near_0_300m", near), ("far_300_600m", far)):
            pts = np.column_stack([annotated["speed"][mask],
                                   annotated["accel"][mask]])
            pts = pts[np.all(np.isfinite(pts), axis=1)]
            try:
                det, count = va_gaussian_det(pts)
                dets.append([label, f"{det:.6g}", count])
            except WavedampError:
                dets.append([label, "nan", len(pts)])
        p = os.path.join(args.out, "va_determinants.csv")
        with open(p, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["sample", "covariance_det", "count"])
            w.writerows(dets)
        artifacts.append(p)

    edges, freqs = speed_histogram(trace, bin_width=args.hist_bin)
    p = os.path.join(args.out, "speed_histogram.csv")
    with open(p, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_lo_mps", "bin_hi_mps", "frequency"])
        for i, fr in enumerate(freqs):
            w.writerow([f"{edges[i]:.12g}", f"{edges[i + 1]:.12g}",
                        f"{fr:.12g}"])
    artifacts.append(p)

    p = os.path.join(args.out, "time_space.csv")
    time_space_export(trace, p, cell=(args.cell_m, args.cell_s))
    artifacts.append(p)

    config = {"trace": args.trace, "hist_bin": args.hist_bin,
              "cell_m": args.cell_m, "cell_s": args.cell_s}
    write_manifest(args.out, "analyze", config, 0, artifacts,
                   round(time.time() - t0, 3))
    print(f"wrote {len(artifacts)} analysis files to {args.out}")
    return EXIT_OK


def cmd_gen_trajectory(args) -> int:
    t0 = time.time()
    traj = synth_trajectory(args.kind, args.duration, args.seed or 0)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{args.kind}.csv")
    traj.to_csv(path)
    config = {"kind": args.kind, "duration": args.duration,
              "seed": args.seed or 0}
    write_manifest(args.out, "gen-trajectory", config, args.seed or 0,
                   [path], round(time.time() - t0, 3))
    print(f"wrote {path}")
    return EXIT_OK


def rerun_from_manifest(manifest_path: str, out_dir: str) -> int:
    """Re-execute the command recorded in a manifest into out_dir."""
    with open(manifest_path) as f:
        man = json.load(f)
    cfg = man["config"]
    cmd = man["command"]
    if cmd in ("simulate", "train"):
        cfg_path = os.path.join(out_dir, "_rerun_config.json")
        os.makedirs(out_dir, exist_ok=True)
        with open(cfg_path, "w") as f:
            json.dump(cfg, f, sort_keys=True)
        argv = [cmd, "--config", cfg_path, "--seed", str(man["seed"]),
                "--out", out_dir]
        if cmd == "simulate" and cfg.get("policy"):
            argv += ["--policy", cfg["policy"]]
        return main(argv)
    if cmd == "evaluate":
        argv = ["evaluate", "--out", out_dir,
                "--penetration", str(cfg["penetration"]),
                "--n-platoons", str(cfg["n_platoons"]),
                "--duration", str(cfg["duration"]),
                "--trajectory-seed", str(cfg["trajectory_seed"]),
                "--seed", str(cfg["seed"])]
        for s in cfg["scenarios"]:
            argv += ["--scenario", s]
        for b in cfg["baselines"]:
            argv += ["--baseline", b]
        if cfg.get("policy"):
            argv += ["--policy", cfg["policy"]]
        return main(argv)
    if cmd == "analyze":
        return main(["analyze", "--trace", cfg["trace"], "--out", out_dir,
                     "--hist-bin", str(cfg["hist_bin"]),
                     "--cell-m", str(cfg["cell_m"]),
                     "--cell-s", str(cfg["cell_s"])])
    if cmd == "gen-trajectory":
        return main(["gen-trajectory", "--kind", cfg["kind"],
                     "--duration", str(cfg["duration"]),
                     "--seed", str(cfg["seed"]), "--out", out_dir])
    raise ConfigError(f"manifest has unknown command {cmd!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavedamp",
        description="Mixed-autonomy traffic simulation and wave-dampening "
                    "controller training.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    out_default = os.environ.get(OUT_ROOT_ENV, "runs")

    p = sub.add_parser("simulate", help="run one scenario, write trace "
                                        "and metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=os.path.join(out_default, "simulate"))
    p.add_argument("--policy", default=None,
                   help="policy file or stub:<kind> for RL controllers")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a policy, write weights and "
                                     "learning curve")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=os.path.join(out_default, "train"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compare controllers across "
                                        "scenarios (value + pct vs IDM)")
    p.add_argument("--policy", default=None)
    p.add_argument("--scenario", action="append", choices=SCENARIO_KINDS)
    p.add_argument("--baseline", action="append", choices=BASELINES)
    p.add_argument("--penetration", type=float, default=0.04)
    p.add_argument("--n-platoons", type=int, default=4)
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--trajectory-seed", type=int, default=7)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=os.path.join(out_default, "evaluate"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="field-style analysis of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default=os.path.join(out_default, "analyze"))
    p.add_argument("--hist-bin", type=float, default=1.0)
    p.add_argument("--cell-m", type=float, default=50.0)
    p.add_argument("--cell-s", type=float, default=5.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen-trajectory", help="write a synthetic leader "
                                              "trajectory CSV")
    p.add_argument("--kind", required=True, choices=SCENARIO_KINDS)
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=os.path.join(out_default, "trajectory"))
    p.set_defaults(func=cmd_gen_trajectory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (CollisionError, TrajectoryExhausted) as e:
        print(f"simulation aborted: {e}", file=sys.stderr)
        return EXIT_SIM_ABORT
    except WavedampError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
