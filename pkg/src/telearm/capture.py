"""Pose sources feeding the control loop: the AR-client stream adapter, the
camera+IMU complementary fusion, and the autopilot generator that traces
standardized shapes at constant speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .geometry import Frame, Pose, Q_FIX_DEFAULT, UnitQuaternion, Vec3, homogenize
from .wire import ArPoseMsg

# sender clocks more than this far from the receiver clock are not comparable
CLOCK_COMPARABLE_WINDOW = 5.0


class Source(Enum):
    ARPOSE = "ARPOSE"
    CV_IMU = "CV_IMU"
    AUTOPILOT = "AUTOPILOT"


@dataclass(frozen=True)
class PoseSample:
    t: float  # receiver monotonic clock, seconds
    pose: Pose
    source: Source
    latency_hint: Optional[float] = None  # sender-to-receipt, when clocks comparable
    seq: Optional[int] = None


class ArPoseAdapter:
    """Stateful adapter from wire messages to robot-frame samples.

    Homogenizes on receipt (clients send raw AR-frame poses), drops
    out-of-order sequence numbers, and keeps sample times strictly
    increasing.
    """

    def __init__(self, q_fix: UnitQuaternion = Q_FIX_DEFAULT):
        self.q_fix = q_fix
        self._last_seq: Optional[int] = None
        self._last_t = -math.inf
        self.stale_drops = 0

    def to_sample(self, msg: ArPoseMsg, clock: float) -> Optional[PoseSample]:
        if self._last_seq is not None and msg.seq <= self._last_seq:
            self.stale_drops += 1
            return None
        self._last_seq = msg.seq
        t = clock if clock > self._last_t else math.nextafter(self._last_t, math.inf)
        self._last_t = t
        pose = homogenize(Pose(msg.pos, msg.quat, Frame.AR_YUP), self.q_fix)
        sent = msg.t_ms / 1000.0
        hint = clock - sent if abs(clock - sent) < CLOCK_COMPARABLE_WINDOW else None
        return PoseSample(t=t, pose=pose, source=Source.ARPOSE, latency_hint=hint, seq=msg.seq)


def arpose_to_sample(msg: ArPoseMsg, q_fix: UnitQuaternion, clock: float) -> PoseSample:
    """Stateless single-message conversion (no sequence tracking)."""
    pose = homogenize(Pose(msg.pos, msg.quat, Frame.AR_YUP), q_fix)
    sent = msg.t_ms / 1000.0
    hint = clock - sent if abs(clock - sent) < CLOCK_COMPARABLE_WINDOW else None
    return PoseSample(t=clock, pose=pose, source=Source.ARPOSE, latency_hint=hint, seq=msg.seq)


# ---------------------------------------------------------------------------
# camera + IMU fusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FusionState:
    orientation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)
    last_cv_pos: Vec3 = field(default_factory=Vec3.zero)
    last_cv_time: float = 0.0
    alpha: float = 0.98  # blend weight toward the IMU orientation
    t: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")


def fuse_cv_imu(
    state: FusionState,
    cv_pos: Optional[Vec3],
    imu_quat: Optional[UnitQuaternion],
    dt: float,
) -> tuple[FusionState, PoseSample]:
    """Complementary blend: position held from the last camera fix, orientation
    pulled toward the IMU reading with weight alpha. Either input may be
    absent (but not both)."""
    if cv_pos is None and imu_quat is None:
        raise ValueError("at least one of cv_pos / imu_quat must be present")
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = state.t + dt
    pos = cv_pos if cv_pos is not None else state.last_cv_pos
    cv_time = t if cv_pos is not None else state.last_cv_time
    orientation = state.orientation
    if imu_quat is not None:
        orientation = state.orientation.slerp(imu_quat, state.alpha)
    new_state = replace(state, orientation=orientation, last_cv_pos=pos, last_cv_time=cv_time, t=t)
    sample = PoseSample(
        t=t,
        pose=Pose(pos, orientation, Frame.ROBOT_ZUP),
        source=Source.CV_IMU,
    )
    return new_state, sample


# ---------------------------------------------------------------------------
# autopilot trajectories
# ---------------------------------------------------------------------------

class ShapeKind(Enum):
    CIRCLE = "circle"
    SQUARE = "square"
    RECTANGLE = "rectangle"
    S_SHAPE = "s_shape"


class TracePlane(Enum):
    XY = "XY"
    XZ = "XZ"
    YZ = "YZ"

    def embed(self, center: Vec3, u: float, v: float) -> Vec3:
        if self is TracePlane.XY:
            return Vec3(center.x + u, center.y + v, center.z)
        if self is TracePlane.XZ:
            return Vec3(center.x + u, center.y, center.z + v)
        return Vec3(center.x, center.y + u, center.z + v)

    def project(self, p: Vec3, center: Optional[Vec3] = None) -> tuple[float, float]:
        c = center if center is not None else Vec3.zero()
        if self is TracePlane.XY:
            return p.x - c.x, p.y - c.y
        if self is TracePlane.XZ:
            return p.x - c.x, p.z - c.z
        return p.y - c.y, p.z - c.z


@dataclass(frozen=True)
class ShapeSpec:
    kind: ShapeKind
    center: Vec3
    plane: TracePlane = TracePlane.XY
    size: float = 0.1  # radius (circle), side (square), S extent scale
    width: float = 0.0  # rectangle only
    height: float = 0.0
    period: float = 10.0
    sample_rate: float = 100.0
    orientation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)

    def __post_init__(self):
        if self.period <= 0 or self.sample_rate <= 0:
            raise ValueError("period and sample_rate must be positive")
        if self.kind is ShapeKind.RECTANGLE:
            if self.width <= 0 or self.height <= 0:
                raise ValueError("rectangle needs positive width and height")
        elif self.size <= 0:
            raise ValueError("size must be positive")

    def path_length(self) -> float:
        if self.kind is ShapeKind.CIRCLE:
            return 2.0 * math.pi * self.size
        if self.kind is ShapeKind.SQUARE:
            return 4.0 * self.size
        if self.kind is ShapeKind.RECTANGLE:
            return 2.0 * (self.width + self.height)
        # two semicircles of radius size/2
        return math.pi * self.size


def _perimeter_point(corners: list[tuple[float, float]], arc: float) -> tuple[float, float]:
    # walk the closed polygon at the given arc length
    n = len(corners)
    for i in range(n):
        ax, ay = corners[i]
        bx, by = corners[(i + 1) % n]
        seg = math.hypot(bx - ax, by - ay)
        if arc <= seg or i == n - 1:
            f = arc / seg
            return ax + f * (bx - ax), ay + f * (by - ay)
        arc -= seg
    raise AssertionError("unreachable")


def shape_point(shape: ShapeSpec, t: float) -> Vec3:
    """Position on the shape at time t (periodic with the shape's period)."""
    tau = t / shape.period - math.floor(t / shape.period)
    if shape.kind is ShapeKind.CIRCLE:
        ang = 2.0 * math.pi * tau
        return shape.plane.embed(shape.center, shape.size * math.cos(ang), shape.size * math.sin(ang))

    if shape.kind in (ShapeKind.SQUARE, ShapeKind.RECTANGLE):
        if shape.kind is ShapeKind.SQUARE:
            w = h = shape.size
        else:
            w, h = shape.width, shape.height
        # counterclockwise from the (+,+) corner
        corners = [(w / 2, h / 2), (-w / 2, h / 2), (-w / 2, -h / 2), (w / 2, -h / 2)]
        arc = tau * 2.0 * (w + h)
        u, v = _perimeter_point(corners, arc)
        return shape.plane.embed(shape.center, u, v)

    # S: two tangent semicircles of radius size/2, traversed bottom to top at
    # constant speed; the wrap back to the start is a position jump, like the
    # velocity jump at square corners.
    r = shape.size / 2.0
    s = tau * math.pi * 2.0 * r  # arc length along the curve
    if s <= math.pi * r:
        theta = -math.pi / 2.0 + s / r
        u = r * math.cos(theta)
        v = -r + r * math.sin(theta)
    else:
        theta = -math.pi / 2.0 - (s - math.pi * r) / r
        u = r * math.cos(theta)
        v = r + r * math.sin(theta)
    return shape.plane.embed(shape.center, u, v)


def autopilot_pose(shape: ShapeSpec, t: float) -> PoseSample:
    """Target sample on the shape at time t, at the configured tool orientation."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return PoseSample(
        t=t,
        pose=Pose(shape_point(shape, t), shape.orientation, Frame.ROBOT_ZUP),
        source=Source.AUTOPILOT,
    )


def shape_from_dict(d: dict) -> ShapeSpec:
    kind = ShapeKind(d["kind"])
    kwargs = dict(
        kind=kind,
        center=Vec3.from_array(d.get("center", [0, 0, 0])),
        plane=TracePlane(d.get("plane", "XY")),
        period=float(d.get("period", 10.0)),
        sample_rate=float(d.get("sample_rate", 100.0)),
    )
    if "orientation_wxyz" in d:
        kwargs["orientation"] = UnitQuaternion(*d["orientation_wxyz"])
    if kind is ShapeKind.RECTANGLE:
        kwargs["width"] = float(d["width"])
        kwargs["height"] = float(d["height"])
    else:
        key = "radius" if kind is ShapeKind.CIRCLE else "side" if kind is ShapeKind.SQUARE else "size"
        kwargs["size"] = float(d.get(key, d.get("size", 0.1)))
    return ShapeSpec(**kwargs)
