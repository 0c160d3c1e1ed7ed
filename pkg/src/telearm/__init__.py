"""Desk-scale teleoperation pipeline for a simulated 6-DOF arm.

Capture (AR-client stream, camera+IMU fusion, autopilot shapes) feeds a
200 Hz proactively-safe position controller; sessions record to a 100 Hz CSV
trial format with deterministic replay, and the evaluation layer computes
tracking-error, latency, and repeatability metrics.
"""

from .geometry import (
    Frame,
    FrameMismatchError,
    Pose,
    Q_FIX_DEFAULT,
    UnitQuaternion,
    Vec3,
    homogenize,
)
from .kinematics import (
    ChainSpec,
    IkConfig,
    IkNoConvergenceError,
    JointDef,
    default_chain,
    dls_step,
    forward_kinematics,
    jacobian,
    load_chain,
    solve_ik,
)
from .controller import (
    ControlTick,
    PlantState,
    SafetyLimits,
    TickStatus,
    control_tick,
    default_limits,
    integrate_command,
    plant_step,
    qp_safety_filter,
)
from .wire import (
    ArPoseMsg,
    DropOldestBuffer,
    ImuPacket,
    decode_arpose,
    decode_imu,
    encode_arpose,
    encode_imu,
)
from .capture import (
    ArPoseAdapter,
    FusionState,
    PoseSample,
    ShapeKind,
    ShapeSpec,
    Source,
    TracePlane,
    autopilot_pose,
    fuse_cv_imu,
    shape_point,
)
from .evaluation import (
    Band,
    ErrorBin,
    ItvResult,
    StampedSample,
    TrajectoryMetrics,
    bin_spatial_errors,
    compute_ate,
    compute_itv,
    pair_streams,
    percentile_nearest_rank,
)
from .dataset import TrialMeta, TrialRecord, read_trial, save_trial, write_trial
from .service import Session, SessionConfig, SessionSummary, TelemetryFrame, TelemetryHub, run_session

__version__ = "0.1.0"
