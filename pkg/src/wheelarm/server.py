"""WebSocket session service.

One simulation thread owns the TeleopSession and steps it at wall-clock
60 Hz. Network handlers never touch simulator state directly: mutating
messages are submitted to the thread's inbox queue (preserving arrival
order) and answered with acks, while the thread broadcasts `state` at 10 Hz
and a downscaled chassis `frame` at 2 Hz to every connected client. The
first client holds the operator role; everyone else observes.
"""

from __future__ import annotations

import asyncio
import base64
import concurrent.futures
import logging
import queue
import threading
import time

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import FORMAT_VERSIONS
from .errors import NotOperator, SchemaError, WheelArmError
from .recorder import SessionManifest
from .session import TeleopSession

log = logging.getLogger(__name__)

STATE_EVERY_TICKS = 6  # 10 Hz
FRAME_EVERY_TICKS = 30  # 2 Hz
FRAME_SCALE = 2  # 128x96 render -> 64x48 preview


class SimService:
    """Simulation thread plus its inbox; see module docstring."""

    def __init__(self, robot_description=None, scene=None, out_dir=None, realtime=True):
        self.session = TeleopSession(
            robot_description=robot_description, scene=scene, out_dir=out_dir
        )
        self.realtime = realtime
        self._inbox: queue.Queue = queue.Queue()
        self._subscribers = {}
        self._sub_lock = threading.Lock()
        self._next_sub = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="wheelarm-sim", daemon=True)

    # --- lifecycle ---------------------------------------------------------------

    def start(self) -> "SimService":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5.0)

    # --- cross-thread plumbing ------------------------------------------------------

    def submit(self, fn) -> concurrent.futures.Future:
        """Run fn(session) on the sim thread; order of submission is the
        order of execution."""
        future: concurrent.futures.Future = concurrent.futures.Future()
        self._inbox.put((fn, future))
        return future

    def subscribe(self, loop, q: asyncio.Queue) -> int:
        with self._sub_lock:
            self._next_sub += 1
            self._subscribers[self._next_sub] = (loop, q)
            return self._next_sub

    def unsubscribe(self, sub_id: int) -> None:
        with self._sub_lock:
            self._subscribers.pop(sub_id, None)

    def _broadcast(self, message: dict) -> None:
        with self._sub_lock:
            targets = list(self._subscribers.values())
        for loop, q in targets:
            try:
                loop.call_soon_threadsafe(_offer, q, message)
            except RuntimeError:
                pass  # subscriber's loop already closed

    # --- the simulation loop ----------------------------------------------------------

    def _drain_inbox(self) -> None:
        while True:
            try:
                fn, future = self._inbox.get_nowait()
            except queue.Empty:
                return
            if not future.set_running_or_notify_cancel():
                continue
            try:
                future.set_result(fn(self.session))
            except BaseException as exc:
                future.set_exception(exc)

    def _run(self) -> None:
        session = self.session
        next_deadline = time.monotonic()
        while not self._stop.is_set():
            self._drain_inbox()
            session.step()
            if self._subscribers:
                if session.tick % STATE_EVERY_TICKS == 0:
                    self._broadcast({"type": "state", "payload": session.state_snapshot()})
                if session.tick % FRAME_EVERY_TICKS == 0:
                    self._broadcast(self._frame_message())
            next_deadline += session.dt
            if self.realtime:
                pause = next_deadline - time.monotonic()
                if pause > 0:
                    self._stop.wait(pause)
                else:
                    next_deadline = time.monotonic()  # behind; drop the debt

    def _frame_message(self) -> dict:
        frame = self.session.render_camera("chassis")
        rgb = frame.rgb
        h, w = rgb.shape[:2]
        small = (
            rgb.reshape(h // FRAME_SCALE, FRAME_SCALE, w // FRAME_SCALE, FRAME_SCALE, 3)
            .mean(axis=(1, 3))
            .astype(np.uint8)
        )
        return {
            "type": "frame",
            "camera": "chassis",
            "width": small.shape[1],
            "height": small.shape[0],
            "tick": self.session.tick,
            "rgb_base64": base64.b64encode(small.tobytes()).decode("ascii"),
        }


def _offer(q: asyncio.Queue, message: dict) -> None:
    try:
        q.put_nowait(message)
    except asyncio.QueueFull:
        pass  # slow consumer: drop the broadcast rather than stall the sim


def _ok_ack(message_id, **extra) -> dict:
    ack = {"type": "ack", "id": message_id, "ok": True, "error": None, "message": ""}
    ack.update(extra)
    return ack


def _error_ack(message_id, error: str, message: str) -> dict:
    return {"type": "ack", "id": message_id, "ok": False, "error": error, "message": message}


def create_app(service: SimService, ui_dir=None) -> FastAPI:
    app = FastAPI()
    app.state.service = service
    app.state.operator_ws = None
    # Static scene config for clients that draw the room; safe to read off-thread.
    areas = [
        {
            "name": a.name,
            "x": a.approach_pose[0],
            "y": a.approach_pose[1],
            "heading": a.approach_pose[2],
        }
        for a in service.session.scene.areas
    ]

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "tick": service.session.tick}

    async def dispatch(ws: WebSocket, msg: dict) -> dict:
        msg_id = msg.get("id")
        mtype = msg.get("type")
        if mtype not in ("command", "start_session", "end_session"):
            return _error_ack(msg_id, "MalformedCommand", f"unknown message type {mtype!r}")
        if app.state.operator_ws is not ws:
            raise NotOperator("observer connections cannot modify the session")
        if mtype == "command":
            ack = await asyncio.wrap_future(
                service.submit(lambda s: s.handle_command(msg.get("command")))
            )
            return {"type": "ack", "id": msg_id, **ack}
        if mtype == "start_session":
            raw = msg.get("manifest")
            if not isinstance(raw, dict):
                raise SchemaError("manifest", "must be an object")
            manifest = SessionManifest.from_dict(raw)
            started = await asyncio.wrap_future(
                service.submit(lambda s: s.start_session(manifest))
            )
            return _ok_ack(msg_id, manifest=started.to_dict())
        recording, path = await asyncio.wrap_future(service.submit(lambda s: s.end_session()))
        return _ok_ack(
            msg_id,
            container_path=str(path) if path is not None else None,
            sample_count=recording.sample_count,
        )

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        if app.state.operator_ws is None:
            app.state.operator_ws = ws
            role = "operator"
        else:
            role = "observer"
        outbox: asyncio.Queue = asyncio.Queue(maxsize=64)
        sub_id = service.subscribe(asyncio.get_running_loop(), outbox)
        await ws.send_json(
            {
                "type": "hello",
                "role": role,
                "format_versions": FORMAT_VERSIONS,
                "areas": areas,
            }
        )

        async def pump_broadcasts():
            try:
                while True:
                    await ws.send_json(await outbox.get())
            except (WebSocketDisconnect, RuntimeError):
                pass  # socket closed under us; the main loop handles teardown

        pump = asyncio.create_task(pump_broadcasts())
        try:
            while True:
                try:
                    msg = await ws.receive_json()
                except ValueError:
                    await ws.send_json(_error_ack(None, "MalformedCommand", "invalid JSON"))
                    continue
                if not isinstance(msg, dict):
                    msg = {"type": msg}
                try:
                    ack = await dispatch(ws, msg)
                except WheelArmError as exc:
                    ack = _error_ack(msg.get("id"), exc.taxonomy, str(exc))
                await ws.send_json(ack)
        except WebSocketDisconnect:
            pass
        finally:
            pump.cancel()
            service.unsubscribe(sub_id)
            if app.state.operator_ws is ws:
                app.state.operator_ws = None

    return app


def serve(
    port: int = 8765,
    robot_description=None,
    scene=None,
    out_dir=None,
    ui_dir=None,
    host: str = "127.0.0.1",
):
    """Run the interactive service until interrupted."""
    import uvicorn

    service = SimService(
        robot_description=robot_description, scene=scene, out_dir=out_dir
    ).start()
    app = create_app(service, ui_dir=ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        service.stop()
