"""Proactively-safe position controller for the simulated arm.

Per tick: solve IK for the ideal configuration, compute the joint velocity
that would close the gap in one time step, project that velocity onto the
feasible velocity/acceleration box (a separable QP), integrate to the next
position command, and feed the command to a rate-limited plant model.

The acceleration limit enters as a per-tick tightening of the velocity box,
which keeps the QP separable; the box clamp is then provably the unique
optimum and the emitted command can never violate either bound.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Frame, Pose
from .kinematics import ChainSpec, IkConfig, IkNoConvergenceError, solve_ik

# warm-started tracking budget: one re-seed at most, so a hostile target can
# stall the solver but not the 200 Hz loop
TRACKING_IK = IkConfig(restarts=1)


class InfeasibleBoxError(ValueError):
    """Velocity box and acceleration box do not intersect for some joint."""


@dataclass(frozen=True)
class SafetyLimits:
    qdot_min: np.ndarray
    qdot_max: np.ndarray
    accel_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.qdot_min, dtype=float)
        hi = np.asarray(self.qdot_max, dtype=float)
        am = np.asarray(self.accel_max, dtype=float)
        if not (lo.shape == hi.shape == am.shape):
            raise ValueError("limit vectors must have equal length")
        if not ((lo < 0).all() and (hi > 0).all()):
            raise ValueError("velocity bounds must straddle zero per joint")
        if not (am > 0).all():
            raise ValueError("acceleration limits must be positive")
        object.__setattr__(self, "qdot_min", lo)
        object.__setattr__(self, "qdot_max", hi)
        object.__setattr__(self, "accel_max", am)

    @property
    def dof(self) -> int:
        return len(self.qdot_max)


def default_limits(dof: int, qdot: float = 1.5, accel: float = 25.0) -> SafetyLimits:
    return SafetyLimits(
        qdot_min=np.full(dof, -qdot),
        qdot_max=np.full(dof, qdot),
        accel_max=np.full(dof, accel),
    )


def limits_from_dict(d: dict) -> SafetyLimits:
    return SafetyLimits(
        qdot_min=np.array(d["qdot_min"], dtype=float),
        qdot_max=np.array(d["qdot_max"], dtype=float),
        accel_max=np.array(d["accel_max"], dtype=float),
    )


def load_limits(path: str | Path) -> SafetyLimits:
    with open(path) as f:
        return limits_from_dict(json.load(f))


def feasible_box(limits: SafetyLimits, qdot_prev: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint intersection of the velocity bounds with the reachable
    acceleration window around the previous velocity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    step = limits.accel_max * dt
    lo = np.maximum(limits.qdot_min, qdot_prev - step)
    hi = np.minimum(limits.qdot_max, qdot_prev + step)
    if (lo > hi).any():
        i = int(np.argmax(lo > hi))
        raise InfeasibleBoxError(
            f"empty feasible box for joint {i}: [{lo[i]:.4f}, {hi[i]:.4f}]"
        )
    return lo, hi


def _iterative_box_qp(target: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                      max_iters: int = 100, tol: float = 1e-9) -> np.ndarray:
    # Projected gradient on ||v - target||^2 with step 1/2, i.e. v <- P(target).
    # Kept iterative on purpose so the generic-QP route exists alongside the
    # closed form; converges in one step for this separable objective.
    v = np.clip(np.zeros_like(target), lo, hi)
    for _ in range(max_iters):
        grad = 2.0 * (v - target)
        v_next = np.clip(v - 0.5 * grad, lo, hi)
        if float(np.max(np.abs(v_next - v))) < tol:
            return v_next
        v = v_next
    return v


def qp_safety_filter(
    qdot_needed: np.ndarray,
    limits: SafetyLimits,
    qdot_prev: np.ndarray,
    dt: float,
    method: str = "closed_form",
) -> np.ndarray:
    """Project the demanded joint velocity onto the feasible box.

    Minimizes ||qdot - qdot_needed||^2 subject to the velocity bounds and the
    per-tick acceleration window. The objective is separable so the per-joint
    clamp is the exact optimum; 'iterative' selects the generic projected-
    gradient route instead (both must agree to 1e-8).
    """
    qdot_needed = np.asarray(qdot_needed, dtype=float)
    qdot_prev = np.asarray(qdot_prev, dtype=float)
    if qdot_needed.shape != qdot_prev.shape or len(qdot_needed) != limits.dof:
        raise ValueError("inconsistent vector lengths")
    lo, hi = feasible_box(limits, qdot_prev, dt)
    if method == "closed_form":
        return np.clip(qdot_needed, lo, hi)
    if method == "iterative":
        return _iterative_box_qp(qdot_needed, lo, hi)
    raise ValueError(f"unknown QP method {method!r}")


def integrate_command(q_current: np.ndarray, qdot_star: np.ndarray, dt: float,
                      spec: Optional[ChainSpec] = None) -> np.ndarray:
    """Next position command: q + qdot*dt, clamped into joint position limits."""
    q_cmd = np.asarray(q_current, dtype=float) + np.asarray(qdot_star, dtype=float) * dt
    if spec is not None:
        q_cmd = spec.clamp(q_cmd)
    return q_cmd


class TickStatus(Enum):
    OK = "ok"
    IK_FAILED = "ik_failed"
    BOX_FALLBACK = "box_fallback"


@dataclass
class ControlTick:
    dt: float
    q_current: np.ndarray
    qdot_prev: np.ndarray
    target_pose: Pose

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class TickResult:
    q_cmd: np.ndarray
    qdot_star: np.ndarray
    ik_delay: float
    status: TickStatus


def control_tick(tick: ControlTick, spec: ChainSpec, limits: SafetyLimits,
                 ik_cfg: IkConfig = TRACKING_IK) -> TickResult:
    """One pass of the three-stage loop: IK, safety projection, integration.

    Never raises on bad targets: an unreachable or unconverged target holds
    the previous command (fail-safe), and an infeasible box falls back to the
    acceleration window alone.
    """
    tick.target_pose.require_frame(Frame.ROBOT_ZUP)
    t0 = time.perf_counter()
    try:
        q_target = solve_ik(spec, tick.q_current, tick.target_pose, ik_cfg)
        ik_ok = True
    except IkNoConvergenceError:
        ik_ok = False
    ik_delay = time.perf_counter() - t0

    if not ik_ok:
        # hold position: commanding the current q keeps pulling toward the
        # last valid pose and decays qdot to zero within accel limits
        qdot_needed = np.zeros(spec.dof)
    else:
        qdot_needed = (q_target - tick.q_current) / tick.dt

    status = TickStatus.OK if ik_ok else TickStatus.IK_FAILED
    try:
        qdot_star = qp_safety_filter(qdot_needed, limits, tick.qdot_prev, tick.dt)
    except InfeasibleBoxError:
        # acceleration window alone is never empty
        step = limits.accel_max * tick.dt
        qdot_star = np.clip(qdot_needed, tick.qdot_prev - step, tick.qdot_prev + step)
        status = TickStatus.BOX_FALLBACK

    q_cmd = integrate_command(tick.q_current, qdot_star, tick.dt, spec)
    return TickResult(q_cmd=q_cmd, qdot_star=qdot_star, ik_delay=ik_delay, status=status)


@dataclass
class PlantState:
    """Simulated low-level position controller: rate-limited first-order tracking."""
    q: np.ndarray
    qdot: np.ndarray
    last_cmd: np.ndarray

    @classmethod
    def at(cls, q: np.ndarray) -> "PlantState":
        q = np.asarray(q, dtype=float).copy()
        return cls(q=q, qdot=np.zeros_like(q), last_cmd=q.copy())


def plant_step(state: PlantState, q_cmd: np.ndarray, dt: float, limits: SafetyLimits) -> PlantState:
    """Move toward q_cmd at most qdot_max*dt per joint. Deterministic."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q_cmd = np.asarray(q_cmd, dtype=float)
    max_step = limits.qdot_max * dt
    delta = np.clip(q_cmd - state.q, -max_step, max_step)
    q_new = state.q + delta
    return PlantState(q=q_new, qdot=delta / dt, last_cmd=q_cmd.copy())
