"""Wire formats and the ingress buffer.

IMU frames are a fixed 22-byte little-endian layout:

    offset  size  field
    0       1     header, always 0xAA
    1       4     timestamp, u32 milliseconds since device boot (wraps)
    5       16    orientation quaternion, four f32 in (w, x, y, z) order
    21      1     checksum, XOR of the preceding 21 bytes

Pose messages from AR clients travel as JSON text over a persistent
connection; see ARPOSE_FIELDS for the schema. The DropOldestBuffer sits
between network readers and the control loop so the loop always consumes the
freshest sample and a stalled consumer can never block a producer.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterator, Optional

from .geometry import UnitQuaternion, Vec3

IMU_HEADER = 0xAA
IMU_FRAME_SIZE = 22
# sensor-grade tolerance; f32 rounding plus device filtering drift
IMU_QUAT_NORM_TOL = 1e-3

_IMU_STRUCT = struct.Struct("<BI4f")


class WireError(ValueError):
    """Base class for frame/message decode failures."""


class BadLengthError(WireError):
    pass


class BadHeaderError(WireError):
    pass


class BadChecksumError(WireError):
    pass


class NonFiniteFloatError(WireError):
    pass


class BadMessageError(WireError):
    """Malformed or schema-violating pose message."""


def xor_checksum(data: bytes) -> int:
    c = 0
    for b in data:
        c ^= b
    return c


@dataclass(frozen=True)
class ImuPacket:
    timestamp_ms: int
    quat: tuple[float, float, float, float]  # (w, x, y, z)

    def __post_init__(self):
        if not 0 <= self.timestamp_ms <= 0xFFFFFFFF:
            raise ValueError("timestamp must fit in u32 milliseconds")
        if len(self.quat) != 4:
            raise ValueError("quaternion needs 4 components")

    def quat_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.quat))

    def validate(self) -> None:
        """Enforce the sensor-tolerance unit-norm invariant."""
        if not all(math.isfinite(c) for c in self.quat):
            raise NonFiniteFloatError("non-finite quaternion component")
        if abs(self.quat_norm() - 1.0) > IMU_QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {self.quat_norm():.6f} outside sensor tolerance")

    def to_unit_quaternion(self) -> UnitQuaternion:
        self.validate()
        return UnitQuaternion(*self.quat)


def encode_imu(p: ImuPacket) -> bytes:
    """Serialize to the 22-byte frame. The packet must satisfy its invariants."""
    p.validate()
    body = _IMU_STRUCT.pack(IMU_HEADER, p.timestamp_ms, *p.quat)
    return body + bytes([xor_checksum(body)])


def decode_imu(buf: bytes) -> ImuPacket:
    """Parse one 22-byte frame. Raises a distinct error per failure mode.

    Checks length, header, checksum, and float finiteness; quaternion norm is
    a packet-level invariant checked separately (validate()) so that line
    noise statistics stay a pure function of header and checksum.
    """
    if len(buf) != IMU_FRAME_SIZE:
        raise BadLengthError(f"expected {IMU_FRAME_SIZE} bytes, got {len(buf)}")
    if buf[0] != IMU_HEADER:
        raise BadHeaderError(f"bad header byte 0x{buf[0]:02X}")
    if xor_checksum(buf[:21]) != buf[21]:
        raise BadChecksumError(
            f"checksum mismatch: computed 0x{xor_checksum(buf[:21]):02X}, frame has 0x{buf[21]:02X}"
        )
    _, ts, w, x, y, z = _IMU_STRUCT.unpack(buf[:21])
    if not all(math.isfinite(c) for c in (w, x, y, z)):
        raise NonFiniteFloatError("non-finite float in frame")
    return ImuPacket(timestamp_ms=ts, quat=(w, x, y, z))


def scan_imu_stream(buf: bytes) -> tuple[list[ImuPacket], bytes]:
    """Resynchronizing scanner for a byte stream.

    Finds header bytes, tries to decode a frame at each, and skips one byte
    past false headers. Returns decoded packets and the unconsumed tail
    (which may hold a partial frame).
    """
    packets: list[ImuPacket] = []
    i = 0
    n = len(buf)
    while True:
        j = buf.find(IMU_HEADER, i)
        if j < 0:
            return packets, b""
        if n - j < IMU_FRAME_SIZE:
            return packets, buf[j:]
        try:
            packets.append(decode_imu(buf[j : j + IMU_FRAME_SIZE]))
            i = j + IMU_FRAME_SIZE
        except WireError:
            i = j + 1


# ---------------------------------------------------------------------------
# AR pose messages
# ---------------------------------------------------------------------------

ARPOSE_FIELDS = ("seq", "t_ms", "pos", "quat")


@dataclass(frozen=True)
class ArPoseMsg:
    seq: int
    t_ms: int  # sender clock, milliseconds
    pos: Vec3  # AR frame (Y up), meters
    quat: UnitQuaternion  # (w, x, y, z)

    def __post_init__(self):
        if self.seq < 0 or self.t_ms < 0:
            raise ValueError("seq and t_ms must be non-negative")


def encode_arpose(msg: ArPoseMsg) -> str:
    return json.dumps(
        {
            "seq": msg.seq,
            "t_ms": msg.t_ms,
            "pos": [msg.pos.x, msg.pos.y, msg.pos.z],
            "quat": [msg.quat.w, msg.quat.x, msg.quat.y, msg.quat.z],
        }
    )


def decode_arpose(text: str | bytes) -> ArPoseMsg:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise BadMessageError(f"invalid JSON: {err}") from err
    if not isinstance(obj, dict):
        raise BadMessageError("pose message must be a JSON object")
    missing = [k for k in ARPOSE_FIELDS if k not in obj]
    if missing:
        raise BadMessageError(f"missing fields: {missing}")
    try:
        seq = int(obj["seq"])
        t_ms = int(obj["t_ms"])
        pos = obj["pos"]
        quat = obj["quat"]
        if len(pos) != 3 or len(quat) != 4:
            raise BadMessageError("pos must have 3 components and quat 4")
        vals = [float(v) for v in (*pos, *quat)]
        if not all(math.isfinite(v) for v in vals):
            raise BadMessageError("non-finite value in pose message")
        return ArPoseMsg(
            seq=seq,
            t_ms=t_ms,
            pos=Vec3(*vals[:3]),
            quat=UnitQuaternion(*vals[3:]),
        )
    except BadMessageError:
        raise
    except (TypeError, ValueError) as err:
        raise BadMessageError(f"malformed pose message: {err}") from err


# ---------------------------------------------------------------------------
# drop-oldest ingress buffer
# ---------------------------------------------------------------------------

class DropOldestBuffer:
    """Bounded buffer that evicts the stalest entry on overflow.

    One producer and one consumer may operate concurrently; operations take a
    short internal lock and never wait for space or data. take_latest()
    discards everything older than the newest entry, counting the discards,
    so the consumer always acts on the freshest sample.
    """

    def __init__(self, capacity: int = 8):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque()
        self._lock = threading.Lock()
        self.dropped_overflow = 0
        self.dropped_stale = 0

    def push(self, item) -> Optional[Any]:
        with self._lock:
            evicted = None
            if len(self._items) >= self.capacity:
                evicted = self._items.popleft()
                self.dropped_overflow += 1
            self._items.append(item)
            return evicted

    def take_latest(self) -> Optional[Any]:
        with self._lock:
            if not self._items:
                return None
            latest = self._items.pop()
            self.dropped_stale += len(self._items)
            self._items.clear()
            return latest

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)

    @property
    def dropped_total(self) -> int:
        with self._lock:
            return self.dropped_overflow + self.dropped_stale

    def snapshot(self) -> list:
        with self._lock:
            return list(self._items)
