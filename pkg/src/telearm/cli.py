"""Command-line entry points.

Subcommands:
    serve           live teleoperation session (websocket ingress + telemetry)
    autopilot       trace a standardized shape through the simulated pipeline
    replay          re-execute a recorded trial N times, report replay ITV
    eval            batch metrics over recorded trial CSVs
    protocol-check  decode/debug a 22-byte IMU frame or pose-message file
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .capture import ShapeKind, ShapeSpec, TracePlane, shape_from_dict
from .controller import default_limits, load_limits
from .evaluation import bin_spatial_errors, compute_ate, compute_itv
from .geometry import Vec3
from .kinematics import default_chain, forward_kinematics, load_chain
from .service import Session, SessionConfig, run_session
from .wire import ImuPacket, WireError, decode_arpose, decode_imu, encode_imu

DEFAULT_PORT = int(os.environ.get("TELEARM_PORT", "8765"))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fixed-step", action="store_true", help="deterministic virtual-clock mode")
    p.add_argument("--record", metavar="DIR", help="record the session under DIR")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--config", metavar="FILE", help="JSON config: chain/limits/shape overrides")
    p.add_argument("--json-out", metavar="FILE", help="write a machine-readable report")
    p.add_argument("--warmup", type=float, default=1.0, help="settle seconds before recording")
    p.add_argument("--chain", metavar="FILE", help="chain spec JSON")
    p.add_argument("--limits", metavar="FILE", help="safety limits JSON")


def _load_parts(args):
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    chain = load_chain(args.chain) if args.chain else (
        None if "chain" not in cfg else load_chain(cfg["chain"]))
    limits = load_limits(args.limits) if args.limits else (
        None if "limits" not in cfg else load_limits(cfg["limits"]))
    return cfg, chain, limits


def _default_shape(args, cfg, chain) -> ShapeSpec:
    if "shape" in cfg:
        return shape_from_dict(cfg["shape"])
    chain = chain or default_chain()
    home = forward_kinematics(chain, chain.home)
    kind = ShapeKind(args.shape)
    kwargs = dict(
        kind=kind,
        center=home.position if args.center is None else Vec3(*args.center),
        plane=TracePlane(args.plane),
        period=args.period,
        orientation=home.orientation,
    )
    if kind is ShapeKind.RECTANGLE:
        kwargs["width"] = args.size
        kwargs["height"] = args.height if args.height else args.size * 0.625
    else:
        kwargs["size"] = args.size
    return ShapeSpec(**kwargs)


def _emit(args, payload: dict) -> None:
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(payload, indent=1))


def _print_summary(summary) -> None:
    d = summary.to_dict()
    m = d.pop("metrics")
    print("session summary:")
    for k, v in d.items():
        print(f"  {k}: {v}")
    if m:
        print("  metrics:")
        for k, v in m.items():
            if isinstance(v, float):
                print(f"    {k}: {v:.6g}")
            else:
                print(f"    {k}: {v}")


def cmd_serve(args) -> int:
    _, chain, limits = _load_parts(args)
    cfg = SessionConfig(
        mode="live",
        chain=chain,
        limits=limits,
        duration=args.duration,
        record_dir=Path(args.record) if args.record else None,
        warmup=args.warmup,
        port=args.port,
        telemetry_decimation=args.telemetry_decimation,
    )
    print(f"live session on port {cfg.port} (pose: /pose, telemetry: /telemetry)")
    summary = run_session(cfg)
    _print_summary(summary)
    _emit(args, summary.to_dict())
    return 0


def cmd_autopilot(args) -> int:
    cfg_file, chain, limits = _load_parts(args)
    shape = _default_shape(args, cfg_file, chain)
    duration = args.warmup + args.cycles * shape.period
    cfg = SessionConfig(
        mode="autopilot",
        shape=shape,
        chain=chain,
        limits=limits,
        fixed_step=args.fixed_step,
        duration=duration,
        warmup=args.warmup,
        record_dir=Path(args.record) if args.record else None,
        noise_sigma=args.noise_sigma,
        noise_seed=args.seed,
        meta=ds.TrialMeta(
            user_id=args.user,
            mode=ds.Source.AUTOPILOT,
            shape=shape.kind.value,
            trial_index=args.trial_index,
        ),
    )
    summary = run_session(cfg)
    _print_summary(summary)
    _emit(args, summary.to_dict())
    return 0


def cmd_replay(args) -> int:
    _, chain, limits = _load_parts(args)
    rec = ds.read_trial(args.input)
    if not rec.rows:
        print("error: empty trial", file=sys.stderr)
        return 1
    span = rec.rows[-1].t_target - rec.rows[0].t_target
    tracks = []
    summaries = []
    for i in range(args.times):
        cfg = SessionConfig(
            mode="replay",
            replay_record=rec,
            chain=chain,
            limits=limits,
            fixed_step=args.fixed_step,
            duration=span + 2 * 0.005,
            warmup=args.warmup,
            record_dir=Path(args.record) if args.record else None,
            meta=ds.TrialMeta(
                user_id=rec.meta.user_id,
                mode=rec.meta.mode,
                shape=rec.meta.shape,
                trial_index=i,
            ),
        )
        session = Session(cfg)
        summary = session.run_fixed() if args.fixed_step else session.run_realtime()
        summaries.append(summary)
        t = np.array([s.t_actual for s in session.recorded])
        p = np.array([s.actual_pose.position.to_array() for s in session.recorded])
        tracks.append((t, p))
    payload = {"replays": [s.to_dict() for s in summaries]}
    if len(tracks) >= 2:
        itv = compute_itv(tracks)
        payload["replay_itv_m"] = itv.itv
        print(f"replay ITV over {args.times} runs: {itv.itv * 1000:.4f} mm")
    _emit(args, payload)
    return 0


def cmd_eval(args) -> int:
    root = Path(args.input)
    paths = ds.scan_trials(root) if root.is_dir() else [root]
    if not paths:
        print(f"error: no trials under {root}", file=sys.stderr)
        return 1
    trials = [ds.read_trial(p) for p in paths]
    payload = {"trials": []}
    for path, rec in zip(paths, trials):
        if not rec.rows:
            continue
        m = compute_ate(rec.rows)
        errors = sorted(r.position_error() for r in rec.rows)
        n = len(errors)
        step = max(1, n // 200)  # plot-ready CDF, at most ~200 points
        cdf = [[errors[i], (i + 1) / n] for i in range(0, n, step)]
        if cdf[-1][0] != errors[-1]:
            cdf.append([errors[-1], 1.0])
        bins = [
            {"cell": list(b.cell), "mean_error_m": b.mean_error, "band": b.band.value, "n": b.n}
            for b in bin_spatial_errors(rec.rows, TracePlane.XY)
        ]
        payload["trials"].append({"path": str(path), **m.to_dict(),
                                  "ate_cdf": cdf, "spatial_bins": bins})
        print(f"{path}")
        print(
            f"  ate_rmse {m.ate_rmse * 1000:.3f} mm | ate_p50 {m.ate_p50 * 1000:.3f} mm | "
            f"ate_p95 {m.ate_p95 * 1000:.3f} mm | lat_p50 {m.latency_p50 * 1000:.2f} ms | "
            f"n {m.n_pairs}"
        )
    if args.itv_group:
        groups: dict[tuple, list] = {}
        for rec in trials:
            key = (rec.meta.user_id, rec.meta.mode.value, rec.meta.shape)
            groups.setdefault(key, []).append(rec)
        payload["itv_groups"] = []
        for key, members in sorted(groups.items()):
            if len(members) < 2:
                continue
            itv = compute_itv([r.actual_track() for r in members])
            payload["itv_groups"].append(
                {
                    "user_id": key[0],
                    "mode": key[1],
                    "shape": key[2],
                    "n_trials": itv.n_trials,
                    "itv_m": itv.itv,
                }
            )
            print(f"ITV {key[0]}/{key[1]}/{key[2]} over {itv.n_trials} trials: {itv.itv * 1000:.4f} mm")
            sigma_mm = itv.per_waypoint_sigma * 1000
            step = max(1, len(sigma_mm) // 10)
            for k in range(0, len(sigma_mm), step):
                print(f"    waypoint {k:4d}: sigma {sigma_mm[k]:.4f} mm")
    _emit(args, payload)
    return 0


def cmd_protocol_check(args) -> int:
    if args.arpose_json:
        n_ok = 0
        for line_no, line in enumerate(Path(args.arpose_json).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                decode_arpose(line)
                n_ok += 1
            except WireError as err:
                print(f"line {line_no}: INVALID: {err}", file=sys.stderr)
                return 1
        print(f"all {n_ok} pose messages valid")
        return 0
    if not args.hex:
        print("error: provide --hex or --arpose-json", file=sys.stderr)
        return 2
    raw = bytes.fromhex(args.hex.replace(" ", ""))
    try:
        p = decode_imu(raw)
    except WireError as err:
        print(f"decode failed: {err}", file=sys.stderr)
        return 1
    print(f"header 0x{raw[0]:02X} ok, checksum 0x{raw[21]:02X} ok")
    print(f"timestamp_ms: {p.timestamp_ms}")
    print(f"quat (w,x,y,z): {p.quat}")
    print(f"quat norm: {p.quat_norm():.6f}")
    print(f"re-encoded: {encode_imu(p).hex()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telearm", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run a live session")
    _add_common(p)
    p.add_argument("--duration", type=float, default=None, help="stop after N seconds")
    p.add_argument("--telemetry-decimation", type=int, default=2)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("autopilot", help="trace a standardized shape")
    _add_common(p)
    p.add_argument("--shape", choices=[k.value for k in ShapeKind], default="circle")
    p.add_argument("--size", type=float, default=0.1, help="radius/side/width, meters")
    p.add_argument("--height", type=float, default=None, help="rectangle height, meters")
    p.add_argument("--period", type=float, default=10.0, help="seconds per lap")
    p.add_argument("--plane", choices=[pl.value for pl in TracePlane], default="XY")
    p.add_argument("--center", type=float, nargs=3, default=None, metavar=("X", "Y", "Z"))
    p.add_argument("--cycles", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.0, help="target position noise, meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--user", default="local")
    p.add_argument("--trial-index", type=int, default=0)
    p.set_defaults(func=cmd_autopilot)

    p = sub.add_parser("replay", help="re-execute a recorded trial")
    _add_common(p)
    p.add_argument("--input", required=True, help="trial CSV")
    p.add_argument("--times", type=int, default=1, metavar="N")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", help="batch metrics over recorded CSVs")
    _add_common(p)
    p.add_argument("--input", required=True, help="trial CSV or directory")
    p.add_argument("--itv-group", action="store_true",
                   help="inter-trial variability per user/mode/shape group")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("protocol-check", help="decode a 22-byte IMU frame")
    _add_common(p)
    p.add_argument("--hex", help="frame bytes as hex")
    p.add_argument("--arpose-json", help="validate pose messages, one JSON per line")
    p.set_defaults(func=cmd_protocol_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
