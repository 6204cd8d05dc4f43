"""Live session orchestration.

One thread per ingest connection feeds an arrival-order queue; a single
pump thread normalizes timestamps, appends raw records to the log and
runs them through the deterministic engine. Derived records and protocol
state go to the console broadcaster through a tap. Protocol commands and
timer ticks are serialized onto the same pump queue so the log captures
one authoritative arrival order, which replay then reproduces exactly.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .engine import EngineConfig, SessionEngine
from .errors import IllegalTransition, IoError, NoActiveSession
from .gateway import GatewayStats, StreamNormalizer
from .model import Channel, Stamp, stream_for
from .protocol import ProtocolMachine, SessionMeta
from .sessionlog import SessionLogWriter
from .wire import WireRecord, event_record

TICK_INTERVAL_S = 0.05


@dataclass
class LatencySample:
    host_arrival_ns: int
    done_ns: int


class LiveSession:
    """Recording session: gateway sink, protocol driver, engine, log."""

    def __init__(
        self,
        meta: SessionMeta,
        out_path: str | Path,
        engine_config: EngineConfig | None = None,
        derived_tap: Callable[[WireRecord], None] | None = None,
        state_tap: Callable[[dict], None] | None = None,
        clock_ns: Callable[[], int] = time.time_ns,
        measure_latency: bool = False,
    ):
        self.meta = meta
        self.machine = ProtocolMachine(meta.task_order())
        self.engine = SessionEngine(engine_config or EngineConfig(retain=False))
        self.writer = SessionLogWriter(out_path, meta)
        self.normalizer = StreamNormalizer(GatewayStats())
        self.derived_tap = derived_tap
        self.state_tap = state_tap
        self.clock_ns = clock_ns
        self._queue: "queue.Queue[tuple]" = queue.Queue()
        self._pump = threading.Thread(target=self._run, name="session-pump", daemon=True)
        self._ticker = threading.Thread(target=self._tick_loop, name="session-tick", daemon=True)
        self._stop = threading.Event()
        self._done = threading.Event()
        self._lock = threading.Lock()
        self.latencies_ns: list[int] = [] if measure_latency else None  # type: ignore[assignment]
        self.recording_failed: str | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._pump.start()
        self._ticker.start()

    def close(self) -> None:
        self._stop.set()
        self._queue.put(("stop",))
        self._done.wait(timeout=30.0)
        self.writer.close()

    # -- ingress (called from gateway reader threads) ------------------------

    def submit(self, rec: WireRecord) -> None:
        self._queue.put(("rec", rec, time.monotonic_ns()))

    # -- operator commands (called from the HTTP layer or tests) -------------

    def command(self, cmd: str, now_ns: int | None = None) -> dict:
        now = self.clock_ns() if now_ns is None else now_ns
        with self._lock:
            events = self.machine.advance(cmd, now)
            snapshot = self.machine.snapshot()
        for ev in events:
            self._queue.put(("event", ev))
        return snapshot

    def keypoint(self, kind: str, text: str, now_ns: int | None = None) -> dict:
        now = self.clock_ns() if now_ns is None else now_ns
        with self._lock:
            ev = self.machine.keypoint(kind, text, now)
        events = [ev]
        if kind == "crash":
            with self._lock:
                try:
                    events.extend(self.machine.advance("mark_crash", now))
                except IllegalTransition:
                    pass  # crash note outside a running task stays a note
        for e in events:
            self._queue.put(("event", e))
        return self.state()

    def state(self) -> dict:
        with self._lock:
            snap = self.machine.snapshot()
        snap["session_id"] = self.meta.session_id
        snap["person_id"] = self.meta.person_id
        snap["ingest"] = self.normalizer.stats.snapshot()
        snap["records_logged"] = self.writer.count
        snap["recording_failed"] = self.recording_failed
        return snap

    # -- internals -----------------------------------------------------------

    def _tick_loop(self) -> None:
        while not self._stop.wait(TICK_INTERVAL_S):
            with self._lock:
                try:
                    events = self.machine.tick(self.clock_ns())
                except ValueError:
                    continue
            for ev in events:
                self._queue.put(("event", ev))
            if self.state_tap is not None:
                self.state_tap(self.state())

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item[0] == "stop":
                break
            if item[0] == "event":
                ev = item[1]
                sid = stream_for(self.meta.person_id, Channel.EVENT)
                rec = event_record(sid, Stamp(ev.host_ns), ev.kind, ev.text)
                self._ingest(rec, None)
            else:
                _, rec, arrival = item
                self._ingest(rec, arrival)
        for rec in self.engine.flush():
            if self.derived_tap is not None:
                self.derived_tap(rec)
        self._done.set()

    def _ingest(self, rec: WireRecord, arrival_mono_ns: int | None) -> None:
        rec = self.normalizer.push(rec)
        if rec is None:
            return
        if self.recording_failed is None:
            try:
                self.writer.append(rec)
            except IoError as exc:
                # Recording halts but live processing continues.
                self.recording_failed = str(exc)
        for out in self.engine.process(rec):
            if self.derived_tap is not None:
                self.derived_tap(out)
        if arrival_mono_ns is not None and self.latencies_ns is not None:
            self.latencies_ns.append(time.monotonic_ns() - arrival_mono_ns)



def require_session(session: LiveSession | None) -> LiveSession:
    if session is None:
        raise NoActiveSession("no recording session is running")
    return session
