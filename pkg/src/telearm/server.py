"""ASGI ingress/egress for live sessions.

One port, two websocket paths: clients stream pose messages to /pose and
anything (the browser console, probes, recorders) can watch /telemetry.
Telemetry delivery is latest-wins per subscriber; a slow reader skips ahead
and can never stall the control loop. The browser console's static bundle is
served from / when present.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.concurrency import run_in_threadpool
from fastapi.staticfiles import StaticFiles

from .capture import ArPoseAdapter
from .service import Session, SessionSummary
from .wire import WireError, decode_arpose


def _console_dir() -> Optional[Path]:
    env = os.environ.get("TELEARM_CONSOLE_DIR")
    candidates = [Path(env)] if env else []
    candidates += [
        Path.cwd() / "frontend" / "dist",
        Path(__file__).resolve().parents[2] / "frontend" / "dist",
    ]
    for c in candidates:
        if c.is_dir() and (c / "index.html").exists():
            return c
    return None


def build_app(session: Session) -> FastAPI:
    app = FastAPI(title="telearm")

    @app.websocket("/pose")
    async def pose_ingress(ws: WebSocket):
        await ws.accept()
        adapter = ArPoseAdapter()  # sequence numbers are per-connection
        rejected = 0
        try:
            while True:
                text = await ws.receive_text()
                try:
                    msg = decode_arpose(text)
                except WireError:
                    rejected += 1
                    continue
                sample = adapter.to_sample(msg, session.now())
                if sample is not None:
                    session.buffer.push(sample)
        except WebSocketDisconnect:
            pass

    @app.websocket("/telemetry")
    async def telemetry_egress(ws: WebSocket):
        await ws.accept()
        sub = session.hub.subscribe()
        try:
            while True:
                frame = await run_in_threadpool(sub.next, 0.25)
                if frame is None:
                    if not session.running:
                        break
                    continue
                await ws.send_text(frame.to_json())
        except WebSocketDisconnect:
            pass

    @app.get("/api/status")
    def status():
        return {
            "running": session.running,
            "tick": session.tick_count,
            "drops": session.buffer.dropped_total,
            "ik_failures": session.ik_failures,
            "mode": session.cfg.mode,
        }

    console = _console_dir()
    if console is not None:
        app.mount("/", StaticFiles(directory=console, html=True), name="console")
    return app


def serve(session: Session, host: str = "127.0.0.1") -> SessionSummary:
    """Run the ASGI server and the control loop together; returns on session
    end (duration elapsed) or server shutdown (signal)."""
    import uvicorn

    app = build_app(session)
    config = uvicorn.Config(app, host=host, port=session.cfg.port, log_level="warning")
    server = uvicorn.Server(config)

    box: dict[str, SessionSummary] = {}

    def run_loop():
        box["summary"] = session.run_realtime()
        server.should_exit = True

    loop_thread = threading.Thread(target=run_loop, name="control-loop", daemon=True)
    loop_thread.start()
    try:
        server.run()
    finally:
        session.stop()
        loop_thread.join(timeout=5.0)
    return box.get("summary") or session._summary()
