"""Runnable sessions: source -> buffer -> control loop -> plant -> telemetry.

A session owns the single control-loop thread (the sole consumer of the
ingress buffer and sole mutator of the plant). Sources produce into the
drop-oldest buffer: the autopilot/replay drivers from their own thread in
real-time mode or synchronously in fixed-step mode, live clients via the
websocket server. Telemetry fans out latest-wins so a slow subscriber can
never stall the loop.

Fixed-step mode advances a virtual clock in exact dt increments, which makes
the command and state sequences bit-reproducible across runs.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .capture import ArPoseAdapter, PoseSample, ShapeSpec, Source, autopilot_pose
from .controller import (
    ControlTick,
    PlantState,
    SafetyLimits,
    TRACKING_IK,
    TickStatus,
    control_tick,
    default_limits,
    plant_step,
)
from .dataset import TrialMeta, TrialRecord, replay_as_targets, save_trial
from .evaluation import StampedSample, TrajectoryMetrics, compute_ate
from .geometry import Pose, Vec3
from .kinematics import ChainSpec, IkConfig, default_chain, forward_kinematics
from .wire import ArPoseMsg, DropOldestBuffer

DEFAULT_DT = 0.005
DEFAULT_TELEMETRY_DECIMATION = 2
# clamp for measured real-time dt so one scheduler stall cannot fling the arm
DT_CLAMP = (0.001, 0.02)


@dataclass
class TelemetryFrame:
    t: float
    tick: int
    actual_pose: Pose
    q: np.ndarray
    qdot: np.ndarray
    target_pose: Optional[Pose] = None
    target_t: Optional[float] = None
    target_seq: Optional[int] = None
    error: Optional[float] = None
    e2e_latency: Optional[float] = None
    ik_delay: float = 0.0
    drops: int = 0
    status: str = TickStatus.OK.value

    def to_json(self) -> str:
        def pose_obj(p: Optional[Pose]):
            if p is None:
                return None
            return {
                "pos": [p.position.x, p.position.y, p.position.z],
                "quat": [p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z],
            }

        return json.dumps(
            {
                "t": self.t,
                "tick": self.tick,
                "actual": pose_obj(self.actual_pose),
                "target": pose_obj(self.target_pose),
                "target_t": self.target_t,
                "target_seq": self.target_seq,
                "q": list(self.q),
                "qdot": list(self.qdot),
                "error_m": self.error,
                "e2e_latency_s": self.e2e_latency,
                "ik_delay_s": self.ik_delay,
                "drops": self.drops,
                "status": self.status,
            }
        )


class TelemetryHub:
    """Latest-wins broadcast: subscribers that fall behind skip ahead."""

    def __init__(self):
        self._cond = threading.Condition()
        self._gen = 0
        self._frame: Optional[TelemetryFrame] = None

    def publish(self, frame: TelemetryFrame) -> None:
        with self._cond:
            self._gen += 1
            self._frame = frame
            self._cond.notify_all()

    def subscribe(self) -> "TelemetrySubscription":
        with self._cond:
            return TelemetrySubscription(self, self._gen)

    @property
    def subscriber_count(self) -> int:
        # informational only; the hub keeps no subscriber registry
        return 0


class TelemetrySubscription:
    def __init__(self, hub: TelemetryHub, start_gen: int):
        self._hub = hub
        self._seen = start_gen
        self.skipped = 0

    def next(self, timeout: Optional[float] = None) -> Optional[TelemetryFrame]:
        """Newest unseen frame, or None on timeout. Skipped frames are counted."""
        hub = self._hub
        with hub._cond:
            if hub._gen <= self._seen:
                hub._cond.wait_for(lambda: hub._gen > self._seen, timeout)
            if hub._gen <= self._seen:
                return None
            self.skipped += hub._gen - self._seen - 1
            self._seen = hub._gen
            return hub._frame


@dataclass
class SessionConfig:
    mode: str = "autopilot"  # live | autopilot | replay
    source: str = "arpose"
    shape: Optional[ShapeSpec] = None
    replay_record: Optional[TrialRecord] = None
    chain: Optional[ChainSpec] = None
    limits: Optional[SafetyLimits] = None
    ik: IkConfig = field(default_factory=lambda: TRACKING_IK)
    dt: float = DEFAULT_DT
    fixed_step: bool = False
    duration: Optional[float] = None  # seconds of (virtual or real) session time
    warmup: float = 1.0  # settle time before metrics/recording start
    telemetry_decimation: int = DEFAULT_TELEMETRY_DECIMATION
    record_dir: Optional[Path] = None
    meta: Optional[TrialMeta] = None
    buffer_capacity: int = 8
    noise_sigma: float = 0.0  # RMS of Gaussian position noise on generated targets, meters
    noise_tau: float = 0.25  # noise correlation time: band-limited wander, not per-sample jitter
    noise_seed: int = 0
    start_on_path: bool = True  # replay only: seed the plant at the first recorded target
    port: int = 8765

    def __post_init__(self):
        if self.mode not in ("live", "autopilot", "replay"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "autopilot" and self.shape is None:
            raise ValueError("autopilot mode needs a shape")
        if self.mode == "replay" and self.replay_record is None:
            raise ValueError("replay mode needs a recorded trial")
        if self.mode == "live" and self.fixed_step:
            raise ValueError("live mode is real-time only")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.telemetry_decimation < 1:
            raise ValueError("telemetry decimation must be >= 1")


@dataclass
class SessionSummary:
    n_ticks: int
    metrics: Optional[TrajectoryMetrics]
    drops: int
    safety_violations: int
    ik_failures: int
    recorded_path: Optional[Path]
    tick_period_mean: Optional[float] = None
    tick_period_p99: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "n_ticks": self.n_ticks,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "drops": self.drops,
            "safety_violations": self.safety_violations,
            "ik_failures": self.ik_failures,
            "recorded_path": str(self.recorded_path) if self.recorded_path else None,
            "tick_period_mean_s": self.tick_period_mean,
            "tick_period_p99_s": self.tick_period_p99,
        }


def _wander_noise(n: int, dt: float, sigma: float, tau: float, seed: int) -> np.ndarray:
    """Band-limited Gaussian wander, exactly sigma RMS per axis.

    White Gaussian noise through two exponential smoothers (correlation time
    tau), rescaled per axis. Models slow hand drift rather than per-sample
    jitter, which no physical arm could follow.
    """
    rng = np.random.default_rng(seed)
    alpha = math.exp(-dt / max(tau, dt))
    out = np.empty((n, 3))
    for ax in range(3):
        w = rng.standard_normal(n)
        y = np.empty(n)
        acc = 0.0
        for k in range(n):
            acc = alpha * acc + (1.0 - alpha) * w[k]
            y[k] = acc
        acc = 0.0
        for k in range(n):
            acc = alpha * acc + (1.0 - alpha) * y[k]
            y[k] = acc
        rms = math.sqrt(float((y**2).mean()))
        out[:, ax] = y * (sigma / rms) if rms > 0 else 0.0
    return out


def _target_stream(cfg: SessionConfig) -> Iterator[PoseSample]:
    """Generated target samples for autopilot/replay, in emission order."""
    if cfg.mode == "autopilot":
        shape = cfg.shape
        n_total = None
        if cfg.duration is not None:
            n_total = int(math.floor(cfg.duration * shape.sample_rate)) + 1
        noise = None
        if cfg.noise_sigma > 0.0:
            if n_total is None:
                raise ValueError("noisy autopilot needs a bounded duration")
            noise = _wander_noise(n_total, 1.0 / shape.sample_rate,
                                  cfg.noise_sigma, cfg.noise_tau, cfg.noise_seed)
        k = 0
        while n_total is None or k < n_total:
            t = k / shape.sample_rate
            s = autopilot_pose(shape, t)
            if noise is not None:
                p = s.pose.position
                noisy = Vec3(p.x + noise[k, 0], p.y + noise[k, 1], p.z + noise[k, 2])
                s = PoseSample(t=s.t, pose=Pose(noisy, s.pose.orientation, s.pose.frame),
                               source=s.source, seq=k)
            else:
                s = PoseSample(t=s.t, pose=s.pose, source=s.source, seq=k)
            yield s
            k += 1
    elif cfg.mode == "replay":
        for k, s in enumerate(replay_as_targets(cfg.replay_record)):
            yield PoseSample(t=s.t, pose=s.pose, source=s.source, seq=k)


class Session:
    """One capture/control/replay run over a single arm."""

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        self.spec = cfg.chain if cfg.chain is not None else default_chain()
        self.limits = cfg.limits if cfg.limits is not None else default_limits(self.spec.dof)
        q0 = self.spec.home
        if cfg.mode == "replay" and cfg.start_on_path and cfg.replay_record.rows:
            from .kinematics import IkConfig, IkNoConvergenceError, solve_ik

            try:
                q0 = solve_ik(self.spec, self.spec.home,
                              cfg.replay_record.rows[0].target_pose, IkConfig())
            except IkNoConvergenceError:
                q0 = self.spec.home
        self.plant = PlantState.at(q0)
        self.qdot_prev = np.zeros(self.spec.dof)
        self.buffer = DropOldestBuffer(cfg.buffer_capacity)
        self.hub = TelemetryHub()
        self.adapter = ArPoseAdapter()
        self.current_target: Optional[PoseSample] = None
        self.tick_count = 0
        self.recorded: list[StampedSample] = []
        self.safety_violations = 0
        self.ik_failures = 0
        self.tick_periods: list[float] = []
        self.running = False
        self._stop = threading.Event()
        self._epoch = 0.0  # perf_counter at real-time session start
        self._home_pose = forward_kinematics(self.spec, self.spec.home)

    # -- clocks -------------------------------------------------------------

    def now(self) -> float:
        """Session clock: virtual in fixed-step mode, monotonic otherwise."""
        if self.cfg.fixed_step:
            return self.tick_count * self.cfg.dt
        return time.perf_counter() - self._epoch

    # -- ingress ------------------------------------------------------------

    def ingest_message(self, text: str | bytes) -> bool:
        """Live path: parse, adapt, and buffer one wire message."""
        from .wire import decode_arpose

        msg = decode_arpose(text)
        return self.ingest_arpose(msg)

    def ingest_arpose(self, msg: ArPoseMsg) -> bool:
        sample = self.adapter.to_sample(msg, self.now())
        if sample is None:
            return False
        self.buffer.push(sample)
        return True

    def ingest_sample(self, sample: PoseSample) -> None:
        self.buffer.push(sample)

    # -- the loop body --------------------------------------------------------

    def tick(self, now: float, dt: Optional[float] = None) -> TelemetryFrame:
        dt = self.cfg.dt if dt is None else dt
        sample = self.buffer.take_latest()
        if sample is not None:
            self.current_target = sample

        if self.current_target is None:
            # no operator intent yet: hold home
            target_pose = self._home_pose
        else:
            target_pose = self.current_target.pose

        result = control_tick(
            ControlTick(dt=dt, q_current=self.plant.q, qdot_prev=self.qdot_prev, target_pose=target_pose),
            self.spec,
            self.limits,
            self.cfg.ik,
        )
        if result.status is TickStatus.IK_FAILED:
            self.ik_failures += 1
        self._check_safety(result.qdot_star, dt)
        self.qdot_prev = result.qdot_star
        self.plant = plant_step(self.plant, result.q_cmd, dt, self.limits)
        emit_t = self.now() if not self.cfg.fixed_step else now + dt
        actual_pose = forward_kinematics(self.spec, self.plant.q)

        frame = TelemetryFrame(
            t=emit_t,
            tick=self.tick_count,
            actual_pose=actual_pose,
            q=self.plant.q.copy(),
            qdot=self.plant.qdot.copy(),
            ik_delay=result.ik_delay,
            drops=self.buffer.dropped_total,
            status=result.status.value,
        )
        if self.current_target is not None:
            frame.target_pose = self.current_target.pose
            frame.target_t = self.current_target.t
            frame.target_seq = self.current_target.seq
            frame.error = actual_pose.position.distance_to(self.current_target.pose.position)
            frame.e2e_latency = emit_t - self.current_target.t

        if self.tick_count % self.cfg.telemetry_decimation == 0:
            self.hub.publish(frame)
            if self.current_target is not None and now >= self.cfg.warmup:
                self.recorded.append(
                    StampedSample(
                        t_target=self.current_target.t,
                        t_actual=emit_t,
                        target_pose=self.current_target.pose,
                        actual_pose=actual_pose,
                        ik_delay=result.ik_delay,
                        e2e_latency=frame.e2e_latency or 0.0,
                    )
                )
        self.tick_count += 1
        return frame

    def _check_safety(self, qdot: np.ndarray, dt: float) -> None:
        # same expressions as the filter's box, so the comparison is exact
        step = self.limits.accel_max * dt
        ok = (
            (qdot >= self.limits.qdot_min).all()
            and (qdot <= self.limits.qdot_max).all()
            and (qdot <= self.qdot_prev + step).all()
            and (qdot >= self.qdot_prev - step).all()
        )
        if not ok:
            self.safety_violations += 1

    # -- drivers --------------------------------------------------------------

    def run_fixed(self) -> SessionSummary:
        """Deterministic run on the virtual clock."""
        cfg = self.cfg
        if cfg.duration is None:
            raise ValueError("fixed-step run needs a duration")
        n_ticks = int(round(cfg.duration / cfg.dt))
        stream = _target_stream(cfg)
        pending = next(stream, None)
        self.running = True
        try:
            for k in range(n_ticks):
                t = k * cfg.dt
                while pending is not None and pending.t <= t + 1e-12:
                    self.ingest_sample(pending)
                    pending = next(stream, None)
                self.tick(t)
        finally:
            self.running = False
        return self._summary()

    def run_realtime(self) -> SessionSummary:
        """Wall-clock run with absolute tick deadlines."""
        cfg = self.cfg
        self._epoch = time.perf_counter()
        producer = None
        if cfg.mode in ("autopilot", "replay"):
            producer = threading.Thread(target=self._produce_realtime, daemon=True)
        self.running = True
        if producer:
            producer.start()
        last_tick_t = 0.0
        k = 0
        try:
            while not self._stop.is_set():
                deadline = (k + 1) * cfg.dt
                now = self.now()
                dt = min(max(now - last_tick_t, DT_CLAMP[0]), DT_CLAMP[1]) if k else cfg.dt
                self.tick(now, dt=dt)
                if k:
                    self.tick_periods.append(now - last_tick_t)
                last_tick_t = now
                k += 1
                if cfg.duration is not None and deadline >= cfg.duration:
                    break
                self._sleep_until(deadline)
        finally:
            self.running = False
            self._stop.set()
            if producer:
                producer.join(timeout=2.0)
        return self._summary()

    def _sleep_until(self, deadline: float) -> None:
        # coarse sleep, then spin the last stretch for tight deadlines
        while True:
            remaining = deadline - self.now()
            if remaining <= 0:
                return
            if remaining > 0.0015:
                time.sleep(remaining - 0.001)
            else:
                time.sleep(0)

    def _produce_realtime(self) -> None:
        stream = _target_stream(self.cfg)
        for sample in stream:
            while not self._stop.is_set():
                lead = sample.t - self.now()
                if lead <= 0:
                    break
                time.sleep(min(lead, 0.002))
            if self._stop.is_set():
                return
            # stamp receipt with the session clock, like a live source would
            self.ingest_sample(
                PoseSample(t=self.now(), pose=sample.pose, source=sample.source, seq=sample.seq)
            )

    def stop(self) -> None:
        self._stop.set()

    # -- results ----------------------------------------------------------------

    def _summary(self) -> SessionSummary:
        metrics = None
        if self.recorded:
            metrics = compute_ate(self.recorded, n_dropped=self.buffer.dropped_total)
        recorded_path = None
        if self.cfg.record_dir is not None and self.recorded:
            meta = self.cfg.meta or TrialMeta(
                user_id="local",
                mode=Source.AUTOPILOT if self.cfg.mode != "live" else Source.ARPOSE,
                shape=self.cfg.shape.kind.value if self.cfg.shape else self.cfg.mode,
                trial_index=0,
            )
            recorded_path = save_trial(self.cfg.record_dir, TrialRecord(meta=meta, rows=self.recorded))
        periods = np.array(self.tick_periods) if self.tick_periods else None
        return SessionSummary(
            n_ticks=self.tick_count,
            metrics=metrics,
            drops=self.buffer.dropped_total,
            safety_violations=self.safety_violations,
            ik_failures=self.ik_failures,
            recorded_path=recorded_path,
            tick_period_mean=float(periods.mean()) if periods is not None else None,
            tick_period_p99=float(np.percentile(periods, 99)) if periods is not None else None,
        )


def run_session(cfg: SessionConfig) -> SessionSummary:
    """Build and drive one session to completion; returns the exit summary."""
    session = Session(cfg)
    if cfg.mode == "live":
        from .server import serve  # deferred: pulls in the ASGI stack

        return serve(session)
    if cfg.fixed_step:
        return session.run_fixed()
    return session.run_realtime()
