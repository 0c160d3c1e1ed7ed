"""Trajectory metrics: approximate-time stream pairing, absolute trajectory
error, latency percentiles, inter-trial variability, and spatial error
binning over the trace plane.

Percentiles are nearest-rank (no interpolation): sorted[min(ceil(p*n), n-1)]
with zero-based indexing, so a constant sequence returns that constant and
p50 <= p95 always.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .capture import PoseSample, TracePlane
from .geometry import Pose, Vec3

DEFAULT_PAIRING_WINDOW = 0.010  # one 100 Hz sample period
DEFAULT_ITV_WAYPOINTS = 200
DEFAULT_CELL_SIZE = 0.005

# trace-plane error bands; LOW/MID boundaries follow the heatmap color scale,
# HIGH covers one scale width past the cap before saturating
BAND_LOW_MAX = 0.0075
BAND_MID_MAX = 0.020
BAND_HIGH_MAX = 0.040


class EmptyInputError(ValueError):
    pass


class InsufficientTrialsError(ValueError):
    pass


@dataclass(frozen=True)
class StampedSample:
    """Time-paired target/actual poses with per-frame pipeline metrics.

    sync_delta defaults to |t_target - t_actual| but is stored, so a sample
    restored from a log keeps the logged value bit-exactly.
    """
    t_target: float
    t_actual: float
    target_pose: Pose
    actual_pose: Pose
    ik_delay: float = 0.0
    e2e_latency: float = 0.0
    sync_delta: Optional[float] = None

    def __post_init__(self):
        if self.sync_delta is None:
            object.__setattr__(self, "sync_delta", abs(self.t_target - self.t_actual))

    def position_error(self) -> float:
        return self.target_pose.position.distance_to(self.actual_pose.position)


@dataclass(frozen=True)
class TrajectoryMetrics:
    ate_rmse: float
    ate_p50: float
    ate_p95: float
    latency_p50: float
    latency_p95: float
    n_pairs: int
    n_dropped: int

    def to_dict(self) -> dict:
        return {
            "ate_rmse_m": self.ate_rmse,
            "ate_p50_m": self.ate_p50,
            "ate_p95_m": self.ate_p95,
            "latency_p50_s": self.latency_p50,
            "latency_p95_s": self.latency_p95,
            "n_pairs": self.n_pairs,
            "n_dropped": self.n_dropped,
        }


def percentile_nearest_rank(values: Sequence[float] | np.ndarray, p: float) -> float:
    """Nearest-rank percentile: the sorted element at index min(ceil(p*n), n-1)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise EmptyInputError("percentile of empty sequence")
    idx = min(math.ceil(p * arr.size), arr.size - 1)
    return float(arr[idx])


def pair_streams(
    targets: Sequence[PoseSample],
    actuals: Sequence[tuple[float, Pose]],
    window: float = DEFAULT_PAIRING_WINDOW,
) -> list[StampedSample]:
    """Greedy nearest-timestamp matching of two time-sorted streams.

    Candidate pairs within the window are taken smallest time difference
    first, each element matched at most once; everything else is dropped.
    Output is sorted by target time. Unmatched-target count is
    len(targets) - len(pairs).
    """
    candidates = []
    for i, tgt in enumerate(targets):
        for j, (ta, _) in enumerate(actuals):
            d = abs(tgt.t - ta)
            if d <= window:
                candidates.append((d, i, j))
    candidates.sort()
    used_t: set[int] = set()
    used_a: set[int] = set()
    pairs: list[StampedSample] = []
    for d, i, j in candidates:
        if i in used_t or j in used_a:
            continue
        used_t.add(i)
        used_a.add(j)
        tgt = targets[i]
        ta, pose_a = actuals[j]
        pairs.append(
            StampedSample(
                t_target=tgt.t,
                t_actual=ta,
                target_pose=tgt.pose,
                actual_pose=pose_a,
                e2e_latency=max(ta - tgt.t, 0.0),
            )
        )
    pairs.sort(key=lambda s: s.t_target)
    return pairs


def compute_ate(pairs: Sequence[StampedSample], n_dropped: int = 0) -> TrajectoryMetrics:
    """RMSE and nearest-rank percentiles of the paired position errors, plus
    latency percentiles over the per-pair end-to-end latency."""
    if not pairs:
        raise EmptyInputError("no pairs to evaluate")
    errors = np.array([s.position_error() for s in pairs])
    lat = np.array([s.e2e_latency for s in pairs])
    return TrajectoryMetrics(
        ate_rmse=float(np.sqrt(np.mean(errors**2))),
        ate_p50=percentile_nearest_rank(errors, 0.5),
        ate_p95=percentile_nearest_rank(errors, 0.95),
        latency_p50=percentile_nearest_rank(lat, 0.5),
        latency_p95=percentile_nearest_rank(lat, 0.95),
        n_pairs=len(pairs),
        n_dropped=n_dropped,
    )


@dataclass(frozen=True)
class ItvResult:
    per_waypoint_sigma: np.ndarray  # meters, length M
    itv: float  # mean of the sigmas
    n_trials: int

    def to_dict(self) -> dict:
        return {
            "itv_m": self.itv,
            "n_trials": self.n_trials,
            "n_waypoints": len(self.per_waypoint_sigma),
            "per_waypoint_sigma_m": [float(s) for s in self.per_waypoint_sigma],
        }


def _resample_normalized(times: np.ndarray, positions: np.ndarray, m: int) -> np.ndarray:
    """Linear interpolation onto m waypoints uniform in normalized time."""
    t0, t1 = times[0], times[-1]
    if t1 <= t0:
        raise ValueError("trial must span a positive time interval")
    u = (times - t0) / (t1 - t0)
    grid = np.linspace(0.0, 1.0, m)
    out = np.empty((m, 3))
    for k in range(3):
        out[:, k] = np.interp(grid, u, positions[:, k])
    return out


def compute_itv(
    trials: Sequence[tuple[np.ndarray, np.ndarray]],
    m: int = DEFAULT_ITV_WAYPOINTS,
) -> ItvResult:
    """Inter-trial variability: mean over waypoints of the RMS distance from
    each trial to the cross-trial centroid at that waypoint.

    Each trial is (times, positions) with positions of shape (n, 3); trials
    are resampled onto m waypoints uniform in normalized time so runs of
    unequal duration compare.
    """
    if len(trials) < 2:
        raise InsufficientTrialsError("ITV needs at least two trials")
    resampled = []
    for times, positions in trials:
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float)
        if len(times) < 2:
            raise InsufficientTrialsError("each trial needs at least two samples")
        resampled.append(_resample_normalized(times, positions, m))
    stack = np.stack(resampled)  # (n_trials, m, 3)
    # mean squared distance to the centroid via the pairwise identity
    # (1/N) sum_i |p_i - c|^2 == (1/2N^2) sum_ij |p_i - p_j|^2,
    # which is exactly zero for identical trials (no mean-rounding residue)
    n = stack.shape[0]
    diffs = stack[:, None] - stack[None, :]  # (n, n, m, 3)
    sq = (diffs**2).sum(axis=3).sum(axis=(0, 1)) / (2.0 * n * n)  # (m,)
    sigma = np.sqrt(sq)
    return ItvResult(per_waypoint_sigma=sigma, itv=float(sigma.mean()), n_trials=len(trials))


class Band(Enum):
    LOW = "LOW"
    MID = "MID"
    HIGH = "HIGH"
    SATURATED = "SATURATED"


def band_for_error(e: float) -> Band:
    if e < BAND_LOW_MAX:
        return Band.LOW
    if e < BAND_MID_MAX:
        return Band.MID
    if e < BAND_HIGH_MAX:
        return Band.HIGH
    return Band.SATURATED


@dataclass(frozen=True)
class ErrorBin:
    cell: tuple[int, int]
    mean_error: float
    band: Band
    n: int


def bin_spatial_errors(
    pairs: Sequence[StampedSample],
    plane: TracePlane = TracePlane.XY,
    cell_size: float = DEFAULT_CELL_SIZE,
    center: Optional[Vec3] = None,
) -> list[ErrorBin]:
    """Grid the trace plane and average the position error per cell.

    Target positions are projected onto the plane to pick the cell, so the
    bins follow the commanded path and hotspots land where the geometry (not
    the tracking error) puts them.
    """
    if not pairs:
        raise EmptyInputError("no pairs to bin")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    sums: dict[tuple[int, int], list[float]] = {}
    for s in pairs:
        u, v = plane.project(s.target_pose.position, center)
        cell = (math.floor(u / cell_size), math.floor(v / cell_size))
        sums.setdefault(cell, []).append(s.position_error())
    bins = []
    for cell, errs in sorted(sums.items()):
        mean_e = float(np.mean(errs))
        bins.append(ErrorBin(cell=cell, mean_error=mean_e, band=band_for_error(mean_e), n=len(errs)))
    return bins
