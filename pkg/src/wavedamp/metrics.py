"""Evaluation aggregates over simulation traces: per-vehicle tables,
throughput, distance-to-AV binning, v-a covariance determinants, speed
histograms and time-space grids.

Variances are population variances throughout, so tiny hand-checkable
cases come out exact. System aggregates run over the followers only;
the replayed trajectory leader (vehicle id 0) is identical across
controllers and would dilute comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .energy import mpg
from .errors import DegenerateCluster, DomainError
from .simulation import (FLAG_FAILSAFE, FLAG_GAP_CLOSE, SimulationTrace)

V_SPLIT_DEFAULT = 23.0  # m/s; separates the congested cluster in v-a space
BIN_WIDTH_DEFAULT = 50.0  # m; distance-to-AV bin size


def per_vehicle_stats(trace: SimulationTrace) -> dict:
    """Per-vehicle table ordered by platoon index: speed mean/std,
    fuel economy, mean gap."""
    if trace.n_steps == 0:
        raise DomainError("empty trace")
    dist = trace.vehicle_distance()
    fuel = trace.vehicle_fuel()
    n = trace.n_vehicles
    speed_mean = np.empty(n)
    speed_std = np.empty(n)
    gap_mean = np.empty(n)
    mpgs = np.empty(n)
    for j in range(n):
        v = trace.speed[:, j]
        v = v[np.isfinite(v)]
        speed_mean[j] = v.mean() if len(v) else np.nan
        speed_std[j] = v.std() if len(v) else np.nan
        g = trace.gap[:, j]
        g = g[np.isfinite(g)]
        gap_mean[j] = g.mean() if len(g) else np.nan
        mpgs[j] = mpg(dist[j], fuel[j]) if fuel[j] > 0 else 0.0
    return {
        "veh_id": trace.ids.copy(),
        "is_av": trace.is_av.copy(),
        "speed_mean": speed_mean,
        "speed_std": speed_std,
        "mpg": mpgs,
        "gap_mean": gap_mean,
        "distance_m": dist,
        "fuel_gal": fuel,
    }


def throughput(trace: SimulationTrace, x_ref: float) -> float:
    """Vehicles whose recorded positions cross x_ref, per hour."""
    pos = trace.pos
    lo = np.nanmin(pos, axis=0)
    hi = np.nanmax(pos, axis=0)
    span_lo = np.nanmin(pos)
    span_hi = np.nanmax(pos)
    if not span_lo <= x_ref <= span_hi:
        raise DomainError(f"x_ref {x_ref} outside simulated span "
                          f"[{span_lo:.1f}, {span_hi:.1f}]")
    crossings = int(np.sum((lo < x_ref) & (hi >= x_ref)))
    hours = trace.n_steps * trace.dt / 3600.0
    return crossings / hours


def distance_to_nearest_av(trace: SimulationTrace) -> dict:
    """Annotated samples for every (step, non-AV vehicle) that has an
    engaged AV downstream: distance to the nearest one, plus the
    sample's speed, acceleration and fuel rate."""
    av_cols = np.where(trace.engaged & trace.is_av)[0]
    human_cols = np.where(~trace.is_av)[0]
    dists, speeds, accels, fuels = [], [], [], []
    for k in range(trace.n_steps):
        av_pos = trace.pos[k, av_cols]
        av_pos = np.sort(av_pos[np.isfinite(av_pos)])
        if len(av_pos) == 0:
            continue
        p = trace.pos[k, human_cols]
        ok = np.isfinite(p)
        idx = np.searchsorted(av_pos, p[ok], side="left")
        has_av = idx < len(av_pos)
        cols = human_cols[ok][has_av]
        d = av_pos[idx[has_av]] - p[ok][has_av]
        dists.append(d)
        speeds.append(trace.speed[k, cols])
        accels.append(trace.accel[k, cols])
        fuels.append(trace.fuel[k, cols])
    if not dists:
        return {"distance": np.empty(0), "speed": np.empty(0),
                "accel": np.empty(0), "fuel": np.empty(0)}
    return {"distance": np.concatenate(dists),
            "speed": np.concatenate(speeds),
            "accel": np.concatenate(accels),
            "fuel": np.concatenate(fuels)}


@dataclass(frozen=True)
class BinnedAvStats:
    """Per-bin statistics keyed by distance to the nearest engaged AV."""

    bin_edges: np.ndarray       # len n_bins + 1, starting at 0
    counts: np.ndarray
    speed_mean: np.ndarray
    speed_std: np.ndarray
    fuel_mean: np.ndarray
    fuel_std: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_lo_m", "bin_hi_m", "count", "speed_mean_mps",
                        "speed_std_mps", "fuel_mean_gps", "fuel_std_gps"])
            for i in range(len(self.counts)):
                w.writerow([f"{self.bin_edges[i]:.12g}",
                            f"{self.bin_edges[i + 1]:.12g}",
                            int(self.counts[i]),
                            f"{self.speed_mean[i]:.12g}",
                            f"{self.speed_std[i]:.12g}",
                            f"{self.fuel_mean[i]:.12g}",
                            f"{self.fuel_std[i]:.12g}"])


def binned_stats(annotated: dict,
                 bin_width: float = BIN_WIDTH_DEFAULT) -> BinnedAvStats:
    """Bin the annotated samples by distance (contiguous bins from 0)."""
    d = np.asarray(annotated["distance"], dtype=float)
    if len(d) == 0:
        raise DomainError("no annotated samples")
    n_bins = int(np.ceil((d.max() + 1e-9) / bin_width))
    edges = bin_width * np.arange(n_bins + 1)
    which = np.minimum((d // bin_width).astype(int), n_bins - 1)
    counts = np.bincount(which, minlength=n_bins)

    def _stats(values):
        mean = np.full(n_bins, np.nan)
        std = np.full(n_bins, np.nan)
        for b in range(n_bins):
            x = values[which == b]
            x = x[np.isfinite(x)]
            if len(x):
                mean[b] = x.mean()
                std[b] = x.std()
        return mean, std

    sm, ss = _stats(np.asarray(annotated["speed"], dtype=float))
    fm, fs = _stats(np.asarray(annotated["fuel"], dtype=float))
    return BinnedAvStats(edges, counts, sm, ss, fm, fs)


def va_gaussian_det(points, v_split: float = V_SPLIT_DEFAULT):
    """Population covariance determinant of the sub-split (v, a) cluster.

    points is an (N, 2) array of (speed, accel) pairs; returns
    (determinant, count of points below the split).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("points must be (N, 2) (speed, accel) pairs")
    low = pts[pts[:, 0] < v_split]
    if len(low) < 3:
        raise DegenerateCluster(
            f"only {len(low)} points below {v_split} m/s")
    cov = np.cov(low.T, ddof=0)
    det = float(np.linalg.det(cov))
    return det, len(low)


def speed_histogram(trace: SimulationTrace, bin_width: float = 1.0,
                    decimate: int = 1):
    """Normalized speed frequencies. decimate > 1 subsamples the flat
    sample stream (field analyses use sparse sampling)."""
    if trace.n_steps == 0:
        raise DomainError("empty trace")
    v = trace.speed.ravel()[::decimate]
    v = v[np.isfinite(v)]
    if len(v) == 0:
        raise DomainError("no speed samples")
    n_bins = max(1, int(np.ceil((v.max() + 1e-9) / bin_width)))
    edges = bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(v, bins=edges)
    return edges, counts / counts.sum()


def time_space_grid(trace: SimulationTrace, cell=(50.0, 5.0)):
    """Mean-speed raster over (position, time) cells; NaN where empty.

    Returns (pos_edges, time_edges, grid) with grid[i, j] the mean speed
    in position cell i during time cell j.
    """
    dx, dt_cell = cell
    pos = trace.pos.ravel()
    spd = trace.speed.ravel()
    tt = np.repeat(trace.times, trace.n_vehicles)
    ok = np.isfinite(pos)
    pos, spd, tt = pos[ok], spd[ok], tt[ok]
    if len(pos) == 0:
        raise DomainError("empty trace")
    p0 = np.floor(pos.min() / dx) * dx
    n_p = int(np.ceil((pos.max() - p0 + 1e-9) / dx))
    n_t = int(np.ceil((tt.max() - trace.times[0] + 1e-9) / dt_cell))
    pi = np.minimum(((pos - p0) // dx).astype(int), n_p - 1)
    ti = np.minimum(((tt - trace.times[0]) // dt_cell).astype(int), n_t - 1)
    sums = np.zeros((n_p, n_t))
    counts = np.zeros((n_p, n_t))
    np.add.at(sums, (pi, ti), spd)
    np.add.at(counts, (pi, ti), 1.0)
    with np.errstate(invalid="ignore"):
        grid = np.where(counts > 0, sums / np.maximum(counts, 1.0), np.nan)
    pos_edges = p0 + dx * np.arange(n_p + 1)
    time_edges = trace.times[0] + dt_cell * np.arange(n_t + 1)
    return pos_edges, time_edges, grid


def time_space_export(trace: SimulationTrace, path,
                      cell=(50.0, 5.0)):
    """Write the time-space raster as a CSV matrix: one row per position
    cell (leading column = cell's lower edge), one column per time cell.
    Empty cells carry the NaN sentinel."""
    pos_edges, time_edges, grid = time_space_grid(trace, cell)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pos_m\\time_s"]
                   + [f"{t:.12g}" for t in time_edges[:-1]])
        for i in range(grid.shape[0]):
            w.writerow([f"{pos_edges[i]:.12g}"]
                       + [f"{x:.12g}" if np.isfinite(x) else "nan"
                          for x in grid[i]])
    return pos_edges, time_edges, grid


@dataclass(frozen=True)
class MetricsReport:
    """System-level aggregates (followers only) plus the per-vehicle
    table and wrapper activation rates."""

    table: dict
    system_mpg: float
    system_distance_m: float
    system_fuel_gal: float
    mean_speed: float
    throughput_vph: float
    failsafe_rate: float
    gap_closing_rate: float

    def table_to_csv(self, path) -> None:
        cols = ["veh_id", "is_av", "speed_mean", "speed_std", "mpg",
                "gap_mean", "distance_m", "fuel_gal"]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for i in range(len(self.table["veh_id"])):
                row = []
                for c in cols:
                    x = self.table[c][i]
                    if c == "veh_id":
                        row.append(int(x))
                    elif c == "is_av":
                        row.append(int(x))
                    else:
                        row.append(f"{float(x):.12g}")
                w.writerow(row)

    def summary_to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["system_mpg", "system_distance_m", "system_fuel_gal",
                        "mean_speed_mps", "throughput_vph", "failsafe_rate",
                        "gap_closing_rate"])
            w.writerow([f"{self.system_mpg:.12g}",
                        f"{self.system_distance_m:.12g}",
                        f"{self.system_fuel_gal:.12g}",
                        f"{self.mean_speed:.12g}",
                        f"{self.throughput_vph:.12g}",
                        f"{self.failsafe_rate:.12g}",
                        f"{self.gap_closing_rate:.12g}"])


def build_report(trace: SimulationTrace,
                 x_ref: float | None = None) -> MetricsReport:
    """Aggregate a trace. x_ref defaults to the midpoint of the leader's
    traveled span (a fixed point most vehicles cross)."""
    table = per_vehicle_stats(trace)
    followers = trace.ids != 0
    dist = table["distance_m"][followers].sum()
    fuel = table["fuel_gal"][followers].sum()
    speeds = trace.speed[:, followers]
    speeds = speeds[np.isfinite(speeds)]
    if x_ref is None:
        leader = trace.pos[:, trace.ids == 0]
        x_ref = 0.5 * (np.nanmin(leader) + np.nanmax(leader))
    av_steps = trace.wrapper[:, trace.is_av]
    n_av_steps = max(1, int(np.sum(av_steps >= 0)))
    return MetricsReport(
        table=table,
        system_mpg=mpg(dist, fuel) if fuel > 0 else 0.0,
        system_distance_m=float(dist),
        system_fuel_gal=float(fuel),
        mean_speed=float(speeds.mean()) if len(speeds) else 0.0,
        throughput_vph=throughput(trace, x_ref),
        failsafe_rate=float(np.sum(av_steps == FLAG_FAILSAFE)) / n_av_steps,
        gap_closing_rate=float(np.sum(av_steps == FLAG_GAP_CLOSE))
        / n_av_steps,
    )


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise DomainError("need two equal-length samples of size >= 2")

    def _ranks(v):
        order = np.argsort(v, kind="stable")
        ranks = np.empty(len(v))
        sv = v[order]
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and sv[j + 1] == sv[i]:
                j += 1
            ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return ranks

    rx, ry = _ranks(x), _ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0:
        return 0.0
    return float(np.sum(rx * ry) / denom)
