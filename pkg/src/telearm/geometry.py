"""Spatial value types: vectors, unit quaternions, frame-tagged poses.

Quaternions are stored (w, x, y, z), Hamilton convention. Every constructor
and operation renormalizes so the unit-norm invariant holds to 1e-9; a
near-zero input is rejected rather than silently normalized because it
signals corrupt upstream data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

UNIT_NORM_TOL = 1e-9
# Below this norm the direction of a quaternion is numerically meaningless.
DEGENERATE_NORM = 1e-6


class Frame(Enum):
    AR_YUP = "AR_YUP"
    ROBOT_ZUP = "ROBOT_ZUP"


class FrameMismatchError(ValueError):
    """An operation received a pose in the wrong coordinate frame."""


class ZeroQuaternionError(ValueError):
    """Constructor input had (near-)zero norm."""


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite vector components: ({self.x}, {self.y}, {self.z})")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def zero(cls) -> "Vec3":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class UnitQuaternion:
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n2 = self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
        if not math.isfinite(n2):
            raise ValueError("non-finite quaternion components")
        if n2 < DEGENERATE_NORM * DEGENERATE_NORM:
            raise ZeroQuaternionError(f"degenerate quaternion norm {math.sqrt(n2):.3e}")
        # Skip the rescale when already unit to within 9-significant-digit
        # serialization precision (|n^2-1| <= ~1e-8 for a unit quaternion
        # rounded to 9 digits): keeps components bit-stable through
        # serialize/parse round trips. Everything else normalizes to machine
        # precision, so operation outputs stay unit to ~1e-16.
        if abs(n2 - 1.0) > 4e-8:
            inv = 1.0 / math.sqrt(n2)
            object.__setattr__(self, "w", self.w * inv)
            object.__setattr__(self, "x", self.x * inv)
            object.__setattr__(self, "y", self.y * inv)
            object.__setattr__(self, "z", self.z * inv)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis: Vec3, angle: float) -> "UnitQuaternion":
        n = axis.norm()
        if n < DEGENERATE_NORM:
            raise ZeroQuaternionError("rotation axis has near-zero norm")
        half = 0.5 * angle
        s = math.sin(half) / n
        return cls(math.cos(half), axis.x * s, axis.y * s, axis.z * s)

    @classmethod
    def from_rotation_vector(cls, rv: Vec3) -> "UnitQuaternion":
        angle = rv.norm()
        if angle < 1e-12:
            return cls.identity()
        return cls.from_axis_angle(rv, angle)

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def multiply(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self ⊗ other (other applied first)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def rotate(self, v: Vec3) -> Vec3:
        # q v q* expanded; cheaper than building the matrix
        tx = 2.0 * (self.y * v.z - self.z * v.y)
        ty = 2.0 * (self.z * v.x - self.x * v.z)
        tz = 2.0 * (self.x * v.y - self.y * v.x)
        return Vec3(
            v.x + self.w * tx + (self.y * tz - self.z * ty),
            v.y + self.w * ty + (self.z * tx - self.x * tz),
            v.z + self.w * tz + (self.x * ty - self.y * tx),
        )

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=float,
        )

    @classmethod
    def from_matrix(cls, r: np.ndarray) -> "UnitQuaternion":
        # Shepperd's method: pick the largest diagonal combination for stability
        t = r[0, 0] + r[1, 1] + r[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            return cls((0.25 * s), (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s)
        if r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            return cls((r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s)
        if r[1, 1] > r[2, 2]:
            s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            return cls((r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s)
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        return cls((r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s)

    def rotation_vector(self) -> Vec3:
        """Log map: axis * angle, with angle in [0, pi]."""
        w, x, y, z = self.w, self.x, self.y, self.z
        if w < 0.0:  # canonical hemisphere so the angle stays <= pi
            w, x, y, z = -w, -x, -y, -z
        vn = math.sqrt(x * x + y * y + z * z)
        if vn < 1e-12:
            return Vec3.zero()
        angle = 2.0 * math.atan2(vn, w)
        s = angle / vn
        return Vec3(x * s, y * s, z * s)

    def angle_to(self, other: "UnitQuaternion") -> float:
        return other.multiply(self.conjugate()).rotation_vector().norm()

    def slerp(self, other: "UnitQuaternion", t: float) -> "UnitQuaternion":
        """Spherical interpolation from self (t=0) to other (t=1), shortest arc."""
        d = self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
        ow, ox, oy, oz = other.w, other.x, other.y, other.z
        if d < 0.0:
            d, ow, ox, oy, oz = -d, -ow, -ox, -oy, -oz
        if d > 1.0 - 1e-10:
            # near-parallel: linear blend then renormalize
            return UnitQuaternion(
                self.w + t * (ow - self.w),
                self.x + t * (ox - self.x),
                self.y + t * (oy - self.y),
                self.z + t * (oz - self.z),
            )
        theta = math.acos(min(1.0, d))
        sa = math.sin(theta)
        c0 = math.sin((1.0 - t) * theta) / sa
        c1 = math.sin(t * theta) / sa
        return UnitQuaternion(
            c0 * self.w + c1 * ow,
            c0 * self.x + c1 * ox,
            c0 * self.y + c1 * oy,
            c0 * self.z + c1 * oz,
        )

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: UnitQuaternion
    frame: Frame

    def require_frame(self, frame: Frame) -> None:
        if self.frame is not frame:
            raise FrameMismatchError(f"pose is in {self.frame.value}, expected {frame.value}")

    @classmethod
    def identity(cls, frame: Frame = Frame.ROBOT_ZUP) -> "Pose":
        return cls(Vec3.zero(), UnitQuaternion.identity(), frame)


# Fixed rotation taking the AR device frame (right-handed, Y up) into the
# robot base frame (Z up): -90 degrees about Y, components read as (w,x,y,z).
# Configurable because the component ordering of the published constant is
# ambiguous; see homogenize().
Q_FIX_DEFAULT = UnitQuaternion(0.707, 0.0, -0.707, 0.0)


def homogenize(pose: Pose, q_fix: UnitQuaternion = Q_FIX_DEFAULT) -> Pose:
    """Map an AR_YUP pose into the ROBOT_ZUP base frame via a fixed rotation.

    Position is rotated by q_fix and the orientation is left-composed, so a
    device looking along AR -Z ends up looking along robot +X with the
    default constant. Raises FrameMismatchError for non-AR input.
    """
    pose.require_frame(Frame.AR_YUP)
    return Pose(
        position=q_fix.rotate(pose.position),
        orientation=q_fix.multiply(pose.orientation),
        frame=Frame.ROBOT_ZUP,
    )


def dehomogenize(pose: Pose, q_fix: UnitQuaternion = Q_FIX_DEFAULT) -> Pose:
    """Inverse of homogenize: recover the AR_YUP pose."""
    pose.require_frame(Frame.ROBOT_ZUP)
    inv = q_fix.conjugate()
    return Pose(
        position=inv.rotate(pose.position),
        orientation=inv.multiply(pose.orientation),
        frame=Frame.AR_YUP,
    )
