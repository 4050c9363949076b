"""Live service: the simulator paced by the wall clock behind HTTP + WebSocket.

Endpoints:

* ``POST /command`` with ``{"transcript": ...}`` submits a spoken command.
* ``POST /scenario/{id}`` queues one of the preset scenario scripts.
* ``GET /state`` returns the latest state frame.
* ``WS /stream`` pushes state frames at the configured tick rate and accepts
  ``{"type": "command", "transcript": ...}`` frames; anything else gets an
  error frame back.
* ``GET /`` serves the operator console when a built frontend is present.

Frames carry a monotonically increasing ``tick`` so any number of
subscribers observe the same sequence.
"""

from __future__ import annotations

import pathlib
import threading
import time
from collections import deque
from typing import Any

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse

from .config import AppConfig, default_config
from .harness import SCENARIO_COMMANDS
from .runtime import Simulation

FRAME_INTERVAL = 0.1  # 10 Hz state frames in simulated time


class LiveSimulator:
    """Background thread stepping one Simulation in (scaled) real time."""

    def __init__(self, cfg: AppConfig, seed: int = 0, speed: float = 1.0):
        self.cfg = cfg
        self.sim = Simulation(cfg, seed=seed)
        self.speed = speed
        self.frames: list[dict[str, Any]] = []
        self._commands: deque[str] = deque()
        self._events: deque[dict[str, Any]] = deque(maxlen=50)
        self._trace_mark = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._frame_lock = threading.Lock()
        self._next_frame_time = 0.0

    # -- control -------------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def submit(self, transcript: str) -> None:
        self._commands.append(transcript)

    def submit_scenario(self, scenario_id: str) -> list[str]:
        command = SCENARIO_COMMANDS[scenario_id]
        script = [self.cfg.phrases.wake, command]
        for text in script:
            self.submit(text)
        return script

    # -- loop ----------------------------------------------------------------

    def _loop(self) -> None:
        dt = self.cfg.motion.dt
        next_wall = time.monotonic()
        while not self._stop.is_set():
            due: list[str] = []
            while self._commands:
                due.append(self._commands.popleft())
            t = self.sim.tick_once(tuple(due))
            self._collect_events()
            if t >= self._next_frame_time:
                self._append_frame(t)
                self._next_frame_time = t + FRAME_INTERVAL
            next_wall += dt / self.speed
            pause = next_wall - time.monotonic()
            if pause > 0:
                time.sleep(pause)
            else:
                next_wall = time.monotonic()

    def _collect_events(self) -> None:
        entries = self.sim.trace.entries
        for entry in entries[self._trace_mark:]:
            if entry["kind"] != "pose":
                self._events.append(entry)
        self._trace_mark = len(entries)

    def _append_frame(self, t: float) -> None:
        world = self.sim.world
        frame = {
            "type": "state",
            "tick": len(self.frames),
            "time": round(t, 6),
            "fsm": self.sim.session.state.value,
            "robots": [
                {
                    "id": rid,
                    "x": state.pose.x,
                    "y": state.pose.y,
                    "theta": state.pose.theta,
                    "v": state.linear_v,
                    "w": state.angular_v,
                    "carrying": state.carrying,
                    "task": state.current_task,
                }
                for rid, state in sorted(world.robots.items())
            ],
            "objects": [
                {"id": oid, "x": p.x, "y": p.y}
                for oid, p in sorted(world.arena.objects.items())
            ],
            "locations": [
                {"id": name, "x": p.x, "y": p.y}
                for name, p in sorted(world.arena.named_locations.items())
            ],
            "arena": {"width": world.arena.width, "height": world.arena.height},
            "events": list(self._events),
            "feedback": [
                {"time": r.time, "utterance": r.utterance}
                for r in self.sim.session.feedback[-10:]
            ],
        }
        with self._frame_lock:
            self.frames.append(frame)

    def latest_frame(self) -> dict[str, Any] | None:
        with self._frame_lock:
            return self.frames[-1] if self.frames else None

    def frames_since(self, index: int) -> tuple[list[dict[str, Any]], int]:
        with self._frame_lock:
            new = self.frames[index:]
            return new, len(self.frames)


def create_app(cfg: AppConfig | None = None, seed: int = 0, speed: float = 1.0,
               console_dir: str | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    cfg = cfg or default_config()
    live = LiveSimulator(cfg, seed=seed, speed=speed)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        live.start()
        yield
        live.stop()

    app = FastAPI(title="levifleet service", lifespan=lifespan)
    app.state.live = live

    @app.post("/command")
    def submit_command(body: dict) -> JSONResponse:
        transcript = body.get("transcript")
        if not isinstance(transcript, str) or not transcript.strip():
            return JSONResponse({"error": "transcript required"}, status_code=400)
        live.submit(transcript)
        return JSONResponse({"accepted": True, "fsm": live.sim.session.state.value})

    @app.post("/scenario/{scenario_id}")
    def trigger_scenario(scenario_id: str) -> JSONResponse:
        if scenario_id not in SCENARIO_COMMANDS:
            return JSONResponse({"error": f"unknown scenario {scenario_id!r}"}, status_code=404)
        queued = live.submit_scenario(scenario_id)
        return JSONResponse({"queued": queued})

    @app.get("/state")
    def latest_state() -> JSONResponse:
        frame = live.latest_frame()
        if frame is None:
            return JSONResponse({"error": "no frames yet"}, status_code=503)
        return JSONResponse(frame)

    @app.get("/info")
    def info() -> JSONResponse:
        return JSONResponse(
            {
                "roster": sorted(cfg.roster),
                "arena": cfg.arena.to_dict(),
                "scenarios": sorted(SCENARIO_COMMANDS),
                "frame_interval_s": FRAME_INTERVAL,
            }
        )

    @app.websocket("/stream")
    async def stream(ws: WebSocket) -> None:
        import asyncio

        await ws.accept()
        _, cursor = live.frames_since(0)
        cursor = max(0, cursor - 1)  # replay the latest frame on join

        async def sender() -> None:
            nonlocal cursor
            while True:
                new, cursor_next = live.frames_since(cursor)
                cursor = cursor_next
                for frame in new:
                    await ws.send_json(frame)
                await asyncio.sleep(FRAME_INTERVAL / (2 * live.speed))

        send_task = asyncio.create_task(sender())
        try:
            while True:
                frame = await ws.receive_json()
                if isinstance(frame, dict) and frame.get("type") == "command":
                    transcript = frame.get("transcript")
                    if isinstance(transcript, str) and transcript.strip():
                        live.submit(transcript)
                        await ws.send_json({"type": "ack", "transcript": transcript})
                    else:
                        await ws.send_json({"type": "error", "error": "transcript required"})
                else:
                    await ws.send_json({"type": "error", "error": "unknown frame type"})
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()

    static_dir = _console_dir(console_dir)
    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        @app.get("/")
        def index() -> FileResponse:
            return FileResponse(static_dir / "index.html")

        app.mount("/console", StaticFiles(directory=str(static_dir)), name="console")

    return app


def _console_dir(explicit: str | None) -> pathlib.Path | None:
    if explicit:
        path = pathlib.Path(explicit)
        return path if path.exists() else None
    candidate = pathlib.Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.exists() else None


def serve(cfg: AppConfig | None = None, host: str = "127.0.0.1", port: int = 8734,
          seed: int = 0, speed: float = 1.0, console_dir: str | None = None) -> None:
    """Run the service until interrupted (CLI entry)."""
    import uvicorn

    app = create_app(cfg, seed=seed, speed=speed, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
