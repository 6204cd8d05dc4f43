"""Operator console gateway.

Serves the browser console: a ``/live`` web socket pushing LivePacket
lines (state snapshots, down-sampled signal points, attention changes,
keypoint acks) and an HTTP command/state surface. High-rate channels are
throttled to at most 10 packets per second per kind, per-client send
queues are bounded, and a client that stops reading is dropped rather
than ever blocking the recording path.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .errors import IllegalTransition, NoActiveSession
from .live import LiveSession
from .model import Channel
from .protocol import COMMANDS, KEYPOINT_KINDS
from .sessionlog import HEADER_FORMAT
from .wire import WireRecord

SCHEMA_VERSION = 1
RATE_LIMIT_HZ = 10.0
CLIENT_QUEUE_MAX = 256

# Down-sampled point kinds; state/attention/ack packets pass unthrottled.
_THROTTLED = {"pupil_point", "bpm_point", "quality"}


def make_packet(kind: str, payload: dict) -> dict:
    return {"v": SCHEMA_VERSION, "kind": kind, "payload": payload, "server_ns": time.time_ns()}


class Subscriber:
    def __init__(self, kinds: set[str] | None):
        self.kinds = kinds
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=CLIENT_QUEUE_MAX)
        self.dropped = False

    def wants(self, kind: str) -> bool:
        return self.kinds is None or kind in self.kinds

    def offer(self, packet: dict) -> None:
        if self.dropped:
            return
        try:
            self.queue.put_nowait(packet)
        except asyncio.QueueFull:
            # Slow consumer: drop the client, never the pipeline.
            self.dropped = True
            try:
                self.queue.put_nowait(None)
            except asyncio.QueueFull:
                pass


class Broadcaster:
    """Fans packets out to subscribers with per-kind rate limiting.

    ``publish`` is safe to call from pipeline threads; delivery happens on
    the event loop so the caller never blocks on a slow socket.
    """

    def __init__(self):
        self._subs: set[Subscriber] = set()
        self._last_sent_ns: dict[str, int] = {}
        self._lock = threading.Lock()
        self._loop: asyncio.AbstractEventLoop | None = None
        self.dropped_clients = 0

    def attach_loop(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop

    def subscribe(self, kinds: set[str] | None) -> Subscriber:
        sub = Subscriber(kinds)
        with self._lock:
            self._subs.add(sub)
        return sub

    def unsubscribe(self, sub: Subscriber) -> None:
        with self._lock:
            self._subs.discard(sub)
            if sub.dropped:
                self.dropped_clients += 1

    def publish(self, kind: str, payload: dict) -> None:
        now = time.monotonic_ns()
        if kind in _THROTTLED:
            last = self._last_sent_ns.get(kind, 0)
            if now - last < int(1e9 / RATE_LIMIT_HZ):
                return
            self._last_sent_ns[kind] = now
        packet = make_packet(kind, payload)
        with self._lock:
            subs = [s for s in self._subs if s.wants(kind)]
        if not subs:
            return
        loop = self._loop
        if loop is None or not loop.is_running():
            for s in subs:
                s.offer(packet)
        else:
            loop.call_soon_threadsafe(lambda: [s.offer(packet) for s in subs])


def derived_packet(rec: WireRecord) -> tuple[str, dict] | None:
    ch = rec.channel
    if ch is Channel.PUPIL_FILTERED:
        return "pupil_point", {
            "host_ns": rec.host_ns,
            "d_filtered_mm": rec.payload["diameter_mm"],
            "d_lp_mm": rec.payload["d_lp_mm"],
        }
    if ch is Channel.BPM:
        return "bpm_point", {"host_ns": rec.host_ns, "bpm": rec.payload["value"]}
    if ch is Channel.EVENT and rec.payload.get("kind") == "attention":
        return "attention_event", {"host_ns": rec.host_ns, "label": rec.payload["text"]}
    return None


@dataclass
class ConsoleContext:
    session: LiveSession | None = None
    broadcaster: Broadcaster = field(default_factory=Broadcaster)
    log_dir: Path = Path(".")

    def tap_derived(self, rec: WireRecord) -> None:
        kp = derived_packet(rec)
        if kp is not None:
            self.broadcaster.publish(*kp)

    def tap_state(self, state: dict) -> None:
        self.broadcaster.publish("state", state)
        self.broadcaster.publish("quality", state.get("ingest", {}))


def create_app(ctx: ConsoleContext) -> FastAPI:
    app = FastAPI(title="gazefuse console gateway")

    @app.on_event("startup")
    async def _attach_loop():
        ctx.broadcaster.attach_loop(asyncio.get_running_loop())

    @app.get("/session/state")
    def get_state():
        if ctx.session is None:
            return JSONResponse({"error": "no active session"}, status_code=404)
        return ctx.session.state()

    @app.get("/sessions")
    def list_sessions():
        out = []
        for p in sorted(ctx.log_dir.glob("*.gflog")):
            try:
                header = json.loads(p.read_text().splitlines()[0])
            except (OSError, ValueError, IndexError):
                continue
            if header.get("format") == HEADER_FORMAT:
                out.append({"path": p.name, "session_id": header.get("session_id"),
                            "person_id": header.get("person_id")})
        return out

    @app.post("/session/command")
    def post_command(body: dict):
        cmd = body.get("cmd")
        args = body.get("args") or {}
        try:
            if ctx.session is None:
                raise NoActiveSession("no recording session is running")
            if cmd in COMMANDS:
                state = ctx.session.command(cmd)
            elif cmd == "keypoint":
                kind = args.get("kind")
                if kind not in KEYPOINT_KINDS:
                    return JSONResponse(
                        {"ok": False, "error": f"unknown keypoint kind {kind!r}"},
                        status_code=400,
                    )
                state = ctx.session.keypoint(kind, args.get("text", ""))
            else:
                return JSONResponse(
                    {"ok": False, "error": f"unknown command {cmd!r}"}, status_code=400
                )
        except IllegalTransition as exc:
            state = ctx.session.state() if ctx.session else None
            return JSONResponse(
                {"ok": False, "error": str(exc), "state": state}, status_code=409
            )
        except NoActiveSession as exc:
            return JSONResponse({"ok": False, "error": str(exc)}, status_code=404)
        ctx.broadcaster.publish("keypoint_ack" if cmd == "keypoint" else "state", state)
        return {"ok": True, "state": state}

    @app.websocket("/live")
    async def live(ws: WebSocket):
        await ws.accept()
        kinds_q = ws.query_params.get("kinds")
        kinds = set(kinds_q.split(",")) if kinds_q else None
        sub = ctx.broadcaster.subscribe(kinds)
        try:
            # Snapshot first, then deltas: late joiners see current state.
            if ctx.session is not None:
                await ws.send_text(json.dumps(make_packet("state", ctx.session.state())))
            while True:
                packet = await sub.queue.get()
                if packet is None:
                    break  # backlog exceeded, drop this client
                await ws.send_text(json.dumps(packet))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            ctx.broadcaster.unsubscribe(sub)
            try:
                await ws.close()
            except RuntimeError:
                pass

    return app
