"""Trial log reader/writer and replay.

One CSV per trial, one row per frame, times in milliseconds, floats at nine
significant digits. Quaternions are (x, y, z, w) on disk and (w, x, y, z)
in memory; this module is the single conversion point. Trial metadata lives
in the directory layout `<user>/<mode>/<shape>/trial_<n>.csv` plus a JSON
sidecar, keeping the CSV strictly tabular.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence, TextIO, Union

import numpy as np

from .capture import PoseSample, Source
from .evaluation import StampedSample
from .geometry import Frame, Pose, UnitQuaternion, Vec3

COLUMNS = (
    "frame_idx",
    "t_target_ms",
    "t_actual_ms",
    "tgt_px", "tgt_py", "tgt_pz",
    "tgt_qx", "tgt_qy", "tgt_qz", "tgt_qw",
    "act_px", "act_py", "act_pz",
    "act_qx", "act_qy", "act_qz", "act_qw",
    "ik_delay_ms",
    "e2e_latency_ms",
    "sync_delta_ms",
)

CADENCE_TOLERANCE = 0.20


class DatasetError(ValueError):
    pass


class BadHeaderError(DatasetError):
    pass


class BadRowError(DatasetError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class NonMonotonicTimeError(DatasetError):
    def __init__(self, line_no: int):
        super().__init__(f"line {line_no}: t_target decreased")
        self.line_no = line_no


@dataclass(frozen=True)
class TrialMeta:
    user_id: str
    mode: Source
    shape: str
    trial_index: int
    sample_rate: float = 100.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")


@dataclass
class TrialRecord:
    meta: TrialMeta
    rows: list[StampedSample] = field(default_factory=list)

    def target_track(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.array([r.t_target for r in self.rows])
        p = np.array([r.target_pose.position.to_array() for r in self.rows])
        return t, p

    def actual_track(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.array([r.t_actual for r in self.rows])
        p = np.array([r.actual_pose.position.to_array() for r in self.rows])
        return t, p

    def cadence_ok(self) -> bool:
        """Median t_target spacing within tolerance of 1/sample_rate."""
        if len(self.rows) < 3:
            return True
        dt = np.diff([r.t_target for r in self.rows])
        nominal = 1.0 / self.meta.sample_rate
        return abs(float(np.median(dt)) - nominal) <= CADENCE_TOLERANCE * nominal


def _fmt(x: float) -> str:
    return "%.9g" % x


def _pose_fields(pose: Pose) -> list[str]:
    p, q = pose.position, pose.orientation
    return [_fmt(v) for v in (p.x, p.y, p.z, q.x, q.y, q.z, q.w)]


def write_trial(rec: TrialRecord, sink: Union[str, Path, TextIO]) -> int:
    """Write header plus one row per sample; returns the row count."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as f:
            return write_trial(rec, f)
    sink.write(",".join(COLUMNS) + "\n")
    for i, s in enumerate(rec.rows):
        parts = [str(i), _fmt(s.t_target * 1000.0), _fmt(s.t_actual * 1000.0)]
        parts += _pose_fields(s.target_pose)
        parts += _pose_fields(s.actual_pose)
        parts += [_fmt(s.ik_delay * 1000.0), _fmt(s.e2e_latency * 1000.0), _fmt(s.sync_delta * 1000.0)]
        sink.write(",".join(parts) + "\n")
    return len(rec.rows)


def _parse_row(fields: list[str], line_no: int) -> StampedSample:
    if len(fields) != len(COLUMNS):
        raise BadRowError(line_no, f"expected {len(COLUMNS)} fields, got {len(fields)}")
    try:
        vals = [float(v) for v in fields[1:]]
    except ValueError as err:
        raise BadRowError(line_no, f"unparseable number: {err}") from err
    if not all(math.isfinite(v) for v in vals):
        bad = COLUMNS[1 + next(i for i, v in enumerate(vals) if not math.isfinite(v))]
        raise BadRowError(line_no, f"non-finite value in column {bad}")
    (t_t, t_a,
     tpx, tpy, tpz, tqx, tqy, tqz, tqw,
     apx, apy, apz, aqx, aqy, aqz, aqw,
     ik_ms, e2e_ms, sync_ms) = vals
    try:
        target = Pose(Vec3(tpx, tpy, tpz), UnitQuaternion(tqw, tqx, tqy, tqz), Frame.ROBOT_ZUP)
        actual = Pose(Vec3(apx, apy, apz), UnitQuaternion(aqw, aqx, aqy, aqz), Frame.ROBOT_ZUP)
    except ValueError as err:
        raise BadRowError(line_no, str(err)) from err
    return StampedSample(
        t_target=t_t / 1000.0,
        t_actual=t_a / 1000.0,
        target_pose=target,
        actual_pose=actual,
        ik_delay=ik_ms / 1000.0,
        e2e_latency=e2e_ms / 1000.0,
        sync_delta=sync_ms / 1000.0,
    )


def read_trial(source: Union[str, Path, TextIO], meta: Optional[TrialMeta] = None) -> TrialRecord:
    """Parse a trial CSV, validating the header and every row.

    Raises BadHeaderError naming the first mismatched column, BadRowError
    with the line number for malformed or non-finite rows, and
    NonMonotonicTimeError if t_target ever decreases.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if meta is None:
            meta = _meta_for_path(path)
        with open(path, newline="") as f:
            return read_trial(f, meta)
    header = source.readline().rstrip("\n").rstrip("\r")
    got = header.split(",")
    if got != list(COLUMNS):
        for i, want in enumerate(COLUMNS):
            if i >= len(got) or got[i] != want:
                have = got[i] if i < len(got) else "<missing>"
                raise BadHeaderError(f"column {i}: expected {want!r}, found {have!r}")
        raise BadHeaderError(f"expected {len(COLUMNS)} columns, found {len(got)}")
    rows: list[StampedSample] = []
    prev_t = -math.inf
    for line_no, line in enumerate(source, start=2):
        line = line.strip()
        if not line:
            continue
        s = _parse_row(line.split(","), line_no)
        if s.t_target < prev_t:
            raise NonMonotonicTimeError(line_no)
        prev_t = s.t_target
        rows.append(s)
    if meta is None:
        meta = TrialMeta(user_id="unknown", mode=Source.ARPOSE, shape="unknown", trial_index=0)
    return TrialRecord(meta=meta, rows=rows)


# ---------------------------------------------------------------------------
# directory layout and sidecar manifests
# ---------------------------------------------------------------------------

_TRIAL_RE = re.compile(r"trial_(\d+)\.csv$")


def trial_path(root: Union[str, Path], meta: TrialMeta) -> Path:
    return Path(root) / meta.user_id / meta.mode.value / meta.shape / f"trial_{meta.trial_index}.csv"


def _manifest_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def save_trial(root: Union[str, Path], rec: TrialRecord) -> Path:
    path = trial_path(root, rec.meta)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trial(rec, path)
    manifest = {
        "user_id": rec.meta.user_id,
        "mode": rec.meta.mode.value,
        "shape": rec.meta.shape,
        "trial_index": rec.meta.trial_index,
        "sample_rate": rec.meta.sample_rate,
        "rows": len(rec.rows),
    }
    _manifest_path(path).write_text(json.dumps(manifest, indent=1))
    return path


def _meta_for_path(path: Path) -> Optional[TrialMeta]:
    mp = _manifest_path(path)
    if mp.exists():
        d = json.loads(mp.read_text())
        return TrialMeta(
            user_id=d["user_id"],
            mode=Source(d["mode"]),
            shape=d["shape"],
            trial_index=int(d["trial_index"]),
            sample_rate=float(d.get("sample_rate", 100.0)),
        )
    m = _TRIAL_RE.search(path.name)
    parts = path.parts
    if m and len(parts) >= 4:
        try:
            return TrialMeta(
                user_id=parts[-4],
                mode=Source(parts[-3]),
                shape=parts[-2],
                trial_index=int(m.group(1)),
            )
        except ValueError:
            return None
    return None


def scan_trials(root: Union[str, Path]) -> list[Path]:
    return sorted(Path(root).rglob("trial_*.csv"))


def load_trials(root: Union[str, Path]) -> list[TrialRecord]:
    return [read_trial(p) for p in scan_trials(root)]


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def replay_as_targets(rec: TrialRecord) -> Iterator[PoseSample]:
    """Re-emit the recorded target stream, re-based to t=0, tagged AUTOPILOT.

    The caller owns the cadence: iterate one-per-tick in fixed-step mode or
    sleep to each sample's t in real-time mode.
    """
    if not rec.rows:
        return
    t0 = rec.rows[0].t_target
    for s in rec.rows:
        yield PoseSample(t=s.t_target - t0, pose=s.target_pose, source=Source.AUTOPILOT)
