"""Serial-chain kinematics: forward kinematics, geometric Jacobian, and a
Newton-Raphson inverse-kinematics solver with damped-least-squares steps.

Joint states are plain (dof,) float arrays in radians. The chain model is a
list of revolute joints, each a fixed translation from its parent followed by
a rotation about a fixed local axis, with an optional tool offset after the
last joint.

The solver runs Newton-Raphson iterations with the damped pseudo-inverse
step, shrinking the damping as the task error falls (Newton-fast near the
solution, heavily damped far away), and hops basins via deterministic
re-seeding when an attempt stalls; cold starts to arbitrary reachable poses
land >99.5% of the time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Frame, Pose, UnitQuaternion, Vec3


class JointLimitError(ValueError):
    """A joint coordinate is outside the configured limits."""


class SingularSystemError(np.linalg.LinAlgError):
    """Undamped DLS step on a rank-deficient Jacobian."""


class IkNoConvergenceError(RuntimeError):
    """IK did not reach tolerance; carries the best configuration seen."""

    def __init__(self, best_q: np.ndarray, pos_residual: float, rot_residual: float, iterations: int):
        super().__init__(
            f"no IK convergence after {iterations} iterations "
            f"(residual {pos_residual:.2e} m / {rot_residual:.2e} rad)"
        )
        self.best_q = best_q
        self.pos_residual = pos_residual
        self.rot_residual = rot_residual
        self.iterations = iterations


@dataclass(frozen=True)
class JointDef:
    axis: Vec3
    origin_offset: Vec3
    limits: tuple[float, float]

    def __post_init__(self):
        if abs(self.axis.norm() - 1.0) > 1e-9:
            raise ValueError(f"joint axis must be unit-norm, got |a|={self.axis.norm():.6f}")
        lo, hi = self.limits
        if not lo < hi:
            raise ValueError(f"joint limits must satisfy min < max, got [{lo}, {hi}]")


class ChainSpec:
    """Kinematic description of the arm, with precomputed dense arrays for
    the hot FK/Jacobian path."""

    def __init__(
        self,
        joints: list[JointDef],
        base_frame: Optional[Pose] = None,
        tool_offset: Optional[Vec3] = None,
        home: Optional[np.ndarray] = None,
        name: str = "chain",
    ):
        if not joints:
            raise ValueError("chain needs at least one joint")
        self.joints = joints
        self.base_frame = base_frame if base_frame is not None else Pose.identity(Frame.ROBOT_ZUP)
        self.base_frame.require_frame(Frame.ROBOT_ZUP)
        self.tool_offset = tool_offset if tool_offset is not None else Vec3.zero()
        self.name = name

        n = len(joints)
        self._axes = np.array([j.axis.to_array() for j in joints])
        self._offsets = np.array([j.origin_offset.to_array() for j in joints])
        self._lo = np.array([j.limits[0] for j in joints])
        self._hi = np.array([j.limits[1] for j in joints])
        self._tool = self.tool_offset.to_array()
        self._base_r = self.base_frame.orientation.to_matrix()
        self._base_p = self.base_frame.position.to_array()
        # skew matrices for the vectorized Rodrigues update
        self._k = np.zeros((n, 3, 3))
        for i, (x, y, z) in enumerate(self._axes):
            self._k[i] = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]]
        self._kk = self._k @ self._k
        self._eye = np.eye(3)

        self.home = np.zeros(n) if home is None else np.asarray(home, dtype=float)
        if self.home.shape != (n,):
            raise ValueError(f"home must have length {n}")
        self.check_limits(self.home)
        self._atlas: Optional[tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def limits_lo(self) -> np.ndarray:
        return self._lo

    @property
    def limits_hi(self) -> np.ndarray:
        return self._hi

    def check_limits(self, q: np.ndarray) -> None:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint values, got shape {q.shape}")
        bad = (q < self._lo - 1e-12) | (q > self._hi + 1e-12)
        if bad.any():
            i = int(np.argmax(bad))
            raise JointLimitError(
                f"joint {i} value {q[i]:.4f} outside [{self._lo[i]:.4f}, {self._hi[i]:.4f}]"
            )

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self._lo, self._hi)

    def max_reach(self) -> float:
        return float(sum(np.linalg.norm(o) for o in self._offsets) + np.linalg.norm(self._tool))

    def _frames(self, q: np.ndarray, axes: np.ndarray, origins: np.ndarray):
        """World joint axes/origins into the given buffers; returns (R_ee, p_ee)."""
        c = np.cos(q)
        s = np.sin(q)
        rj = self._eye[None] + s[:, None, None] * self._k + (1.0 - c)[:, None, None] * self._kk
        r = self._base_r
        p = self._base_p
        offs = self._offsets
        ax = self._axes
        for i in range(len(q)):
            p = p + r @ offs[i]
            axes[i] = r @ ax[i]
            origins[i] = p
            r = r @ rj[i]
        return r, p + r @ self._tool

    def seed_atlas(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Deterministic table of (q, tool position, tool quaternion) samples,
        used to seed IK near an unfamiliar target. Built once, lazily."""
        if self._atlas is None:
            rng = np.random.default_rng(0x5EED)
            m = 1024
            n = self.dof
            qs = rng.uniform(self._lo, self._hi, size=(m, n))
            ps = np.empty((m, 3))
            quats = np.empty((m, 4))
            axes = np.empty((n, 3))
            origins = np.empty((n, 3))
            for i in range(m):
                r, p = self._frames(qs[i], axes, origins)
                ps[i] = p
                o = UnitQuaternion.from_matrix(r)
                quats[i] = (o.w, o.x, o.y, o.z)
            self._atlas = (qs, ps, quats)
        return self._atlas

    def nearest_configurations(self, target: Pose, k: int) -> np.ndarray:
        """The k atlas entries whose tool pose is closest to the target
        (position distance plus a weighted orientation angle)."""
        qs, ps, quats = self.seed_atlas()
        o = target.orientation
        dp = np.linalg.norm(ps - target.position.to_array(), axis=1)
        dots = np.abs(quats @ np.array([o.w, o.x, o.y, o.z]))
        ang = 2.0 * np.arccos(np.clip(dots, -1.0, 1.0))
        score = dp + 0.25 * ang
        k = min(k, len(score))
        idx = np.argpartition(score, k - 1)[:k]
        return qs[idx[np.argsort(score[idx])]]


def _rotation_vector(r: np.ndarray) -> np.ndarray:
    """SO(3) log map as axis*angle with angle in [0, pi]."""
    tr = (r[0, 0] + r[1, 1] + r[2, 2] - 1.0) * 0.5
    c = min(1.0, max(-1.0, tr))
    theta = math.acos(c)
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < 1e-9:
        return 0.5 * v
    if theta > math.pi - 1e-6:
        # antipodal: recover the axis from the symmetric part
        a = (r + np.eye(3)) * 0.5
        ax = np.sqrt(np.maximum(np.diag(a), 0.0))
        if ax[0] >= ax[1] and ax[0] >= ax[2] and ax[0] > 0:
            ax[1] = math.copysign(ax[1], a[0, 1])
            ax[2] = math.copysign(ax[2], a[0, 2])
        elif ax[1] >= ax[2] and ax[1] > 0:
            ax[0] = math.copysign(ax[0], a[0, 1])
            ax[2] = math.copysign(ax[2], a[1, 2])
        else:
            ax[0] = math.copysign(ax[0], a[0, 2])
            ax[1] = math.copysign(ax[1], a[1, 2])
        return ax / np.linalg.norm(ax) * theta
    return v * (theta / (2.0 * math.sin(theta)))


def forward_kinematics(spec: ChainSpec, q: np.ndarray) -> Pose:
    """End-effector pose in the robot base frame. Rejects out-of-limit q."""
    spec.check_limits(q)
    n = spec.dof
    axes = np.empty((n, 3))
    origins = np.empty((n, 3))
    r, p = spec._frames(np.asarray(q, dtype=float), axes, origins)
    return Pose(Vec3.from_array(p), UnitQuaternion.from_matrix(r), Frame.ROBOT_ZUP)


def jacobian(spec: ChainSpec, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian, 6 x dof: rows 0-2 linear, rows 3-5 angular.

    Column i is (axis_i x (p_ee - p_i), axis_i) for the revolute joints.
    """
    spec.check_limits(q)
    n = spec.dof
    axes = np.empty((n, 3))
    origins = np.empty((n, 3))
    _, p_ee = spec._frames(np.asarray(q, dtype=float), axes, origins)
    jac = np.empty((6, n))
    jac[:3] = np.cross(axes, p_ee - origins).T
    jac[3:] = axes.T
    return jac


def task_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector task error: position difference, then the rotation vector of
    the relative orientation (both in the base frame)."""
    e = np.empty(6)
    e[:3] = target.position.to_array() - current.position.to_array()
    rel = target.orientation.to_matrix() @ current.orientation.to_matrix().T
    e[3:] = _rotation_vector(rel)
    return e


def dls_step(jac: np.ndarray, e: np.ndarray, lam: float) -> np.ndarray:
    """Damped least-squares update J^T (J J^T + lam^2 I)^-1 e, via a solve."""
    if lam < 0:
        raise ValueError("damping factor must be >= 0")
    jjt = jac @ jac.T
    jjt.flat[:: jjt.shape[0] + 1] += lam * lam
    try:
        y = np.linalg.solve(jjt, e)
    except np.linalg.LinAlgError as err:
        raise SingularSystemError(f"rank-deficient J J^T with zero damping: {err}") from err
    return jac.T @ y


@dataclass(frozen=True)
class IkConfig:
    damping: float = 0.05  # base damping; shrinks with the error, floor damping_min
    max_iters: int = 100  # per attempt
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    step_cap: float = 0.2  # |dq|_inf per iteration
    err_pos_cap: float = 0.1  # trust region on the error fed to the step
    err_rot_cap: float = 0.5
    restarts: int = 39  # re-seed attempts after the first
    stall_window: int = 10  # iterations without relative progress before re-seeding
    stall_window_near: int = 40  # keep polishing longer once close (slow near-singular creep)
    near_err: float = 0.02
    damping_min: float = 1e-4
    atlas_seeds: int = 3  # nearest precomputed configurations tried right after the given seed
    restart_seed: int = 0


def solve_ik(spec: ChainSpec, seed: np.ndarray, target: Pose, cfg: IkConfig = IkConfig()) -> np.ndarray:
    """Iterative Newton-Raphson IK with DLS steps and per-iteration limit clamping.

    Returns a configuration whose FK is within (pos_tol, rot_tol) of the
    target, or raises IkNoConvergenceError carrying the best configuration
    seen. Deterministic for identical inputs. Targets must be in the robot
    base frame.
    """
    target.require_frame(Frame.ROBOT_ZUP)
    q = spec.clamp(np.asarray(seed, dtype=float).copy())
    p_t = target.position.to_array()
    r_t = target.orientation.to_matrix()
    lo, hi = spec._lo, spec._hi
    n = spec.dof
    k_mats, kk_mats, eye3 = spec._k, spec._kk, spec._eye
    offsets, local_axes, tool = spec._offsets, spec._axes, spec._tool
    base_r, base_p = spec._base_r, spec._base_p
    axes = np.empty((n, 3))
    origins = np.empty((n, 3))
    jac = np.empty((6, n))
    e = np.empty(6)
    rng = np.random.default_rng(cfg.restart_seed)
    atlas: Optional[np.ndarray] = None  # built on first re-seed; warm starts never pay for it

    best_q = q.copy()
    best_err = math.inf
    best_res = (math.inf, math.inf)
    total_iters = 0

    for attempt in range(cfg.restarts + 1):
        attempt_best = math.inf
        attempt_best_q = q
        since_improved = 0
        for _ in range(cfg.max_iters):
            total_iters += 1
            cos_q = np.cos(q)
            sin_q = np.sin(q)
            rj = eye3[None] + sin_q[:, None, None] * k_mats + (1.0 - cos_q)[:, None, None] * kk_mats
            r = base_r
            p = base_p
            for i in range(n):
                p = p + r @ offsets[i]
                axes[i] = r @ local_axes[i]
                origins[i] = p
                r = r @ rj[i]
            p_ee = p + r @ tool

            e[:3] = p_t - p_ee
            e[3:] = _rotation_vector(r_t @ r.T)
            pos_res = math.sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
            rot_res = math.sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5])
            if pos_res <= cfg.pos_tol and rot_res <= cfg.rot_tol:
                return q
            err = pos_res + rot_res
            if err < best_err:
                best_err = err
                best_q = q.copy()
                best_res = (pos_res, rot_res)
            if err < attempt_best * (1.0 - 1e-4):
                attempt_best = err
                attempt_best_q = q.copy()
                since_improved = 0
            else:
                since_improved += 1
                window = cfg.stall_window_near if attempt_best < cfg.near_err else cfg.stall_window
                if since_improved > window:
                    break
            lam = max(cfg.damping_min, min(cfg.damping, 0.5 * err))
            if pos_res > cfg.err_pos_cap:
                e[:3] *= cfg.err_pos_cap / pos_res
            if rot_res > cfg.err_rot_cap:
                e[3:] *= cfg.err_rot_cap / rot_res
            jac[:3] = np.cross(axes, p_ee - origins).T
            jac[3:] = axes.T
            jjt = jac @ jac.T
            jjt.flat[::7] += lam * lam
            dq = jac.T @ np.linalg.solve(jjt, e)
            m = float(np.max(np.abs(dq)))
            if m > cfg.step_cap:
                dq *= cfg.step_cap / m
            q = np.clip(q + dq, lo, hi)

        if attempt == cfg.restarts:
            break
        # re-seed schedule: nearest atlas poses first, then hops between
        # solution branches of the attempt's own best, then fresh randoms
        if atlas is None:
            atlas = (spec.nearest_configurations(target, cfg.atlas_seeds)
                     if cfg.atlas_seeds > 0 else np.empty((0, n)))
        if attempt < len(atlas):
            q = atlas[attempt].copy()
            continue
        kind = (attempt - len(atlas)) % 4
        if kind == 0 and n >= 6:
            # the two Z-Y-Z wrist branches reach the same orientation
            q = attempt_best_q.copy()
            q[3] = q[3] + math.pi if q[3] < 0 else q[3] - math.pi
            q[4] = -q[4]
            q[5] = q[5] + math.pi if q[5] < 0 else q[5] - math.pi
            q = np.clip(q, lo, hi)
        elif kind == 1 and n >= 4:
            q = attempt_best_q.copy()
            q[1], q[2] = -q[1], -q[2]  # elbow mirror
            q[3] = q[3] + math.pi if q[3] < 0 else q[3] - math.pi
            q = np.clip(q, lo, hi)
        elif kind == 2 and n >= 2:
            q = attempt_best_q.copy()
            q[0] = q[0] + math.pi if q[0] < 0 else q[0] - math.pi  # base flip
            q[1] = -q[1]
            q = np.clip(q + rng.normal(0.0, 0.2, n), lo, hi)
        else:
            q = rng.uniform(lo, hi)

    raise IkNoConvergenceError(best_q, best_res[0], best_res[1], total_iters)


# ---------------------------------------------------------------------------
# chain config files
# ---------------------------------------------------------------------------

def chain_from_dict(d: dict) -> ChainSpec:
    joints = [
        JointDef(
            axis=Vec3.from_array(j["axis"]),
            origin_offset=Vec3.from_array(j["origin_offset"]),
            limits=(float(j["limits"][0]), float(j["limits"][1])),
        )
        for j in d["joints"]
    ]
    base = None
    if "base" in d:
        base = Pose(
            Vec3.from_array(d["base"].get("position", [0, 0, 0])),
            UnitQuaternion(*d["base"].get("quat_wxyz", [1, 0, 0, 0])),
            Frame.ROBOT_ZUP,
        )
    return ChainSpec(
        joints=joints,
        base_frame=base,
        tool_offset=Vec3.from_array(d.get("tool_offset", [0, 0, 0])),
        home=np.array(d["home"], dtype=float) if "home" in d else None,
        name=d.get("name", "chain"),
    )


def load_chain(path: str | Path) -> ChainSpec:
    with open(path) as f:
        return chain_from_dict(json.load(f))


def default_chain() -> ChainSpec:
    """The generic 6R arm shipped with the package (yaw-pitch-pitch-roll-pitch-roll)."""
    return load_chain(Path(__file__).parent / "configs" / "chain_6r.json")
