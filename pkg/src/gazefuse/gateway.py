"""Ingest gateway: line framing, timestamp normalization, TCP listener.

The gateway accepts connections from device adapters (or the replayer),
decodes one record per line, enforces per-stream host_ns monotonicity and
hands records downstream in arrival order. Records from different
connections interleave in whatever order they arrive; downstream stages
must not assume any cross-stream ordering.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .errors import GazefuseError
from .model import DEFAULT_OBJECT_CLASSES
from .wire import WireRecord, decode_record

DEFAULT_PORT = 7450


@dataclass
class GatewayStats:
    """Ingest quality counters, surfaced to the console as a quality packet."""

    accepted: int = 0
    dropped_late: int = 0
    rejected: int = 0
    per_stream_dropped: Counter = field(default_factory=Counter)

    def snapshot(self) -> dict:
        return {
            "accepted": self.accepted,
            "dropped_late": self.dropped_late,
            "rejected": self.rejected,
        }


class StreamNormalizer:
    """Makes host_ns non-decreasing per stream.

    A record whose host_ns precedes the last one emitted on its topic is
    dropped and counted; live processing never stalls waiting for
    stragglers. Cross-stream arrival order is preserved.
    """

    def __init__(self, stats: GatewayStats | None = None):
        self._last: dict[str, int] = {}
        self.stats = stats if stats is not None else GatewayStats()

    def push(self, rec: WireRecord) -> WireRecord | None:
        last = self._last.get(rec.topic)
        if last is not None and rec.host_ns < last:
            self.stats.dropped_late += 1
            self.stats.per_stream_dropped[rec.topic] += 1
            return None
        self._last[rec.topic] = rec.host_ns
        self.stats.accepted += 1
        return rec


def normalize_stream(records: Iterable[WireRecord]) -> tuple[list[WireRecord], GatewayStats]:
    """Batch form of the normalizer: emitted records plus drop counters."""
    norm = StreamNormalizer()
    out = [r for r in (norm.push(rec) for rec in records) if r is not None]
    return out, norm.stats


def iter_lines(raw: bytes) -> Iterator[bytes]:
    for line in raw.split(b"\n"):
        if line.strip():
            yield line


class _IngestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server: IngestServer = self.server  # type: ignore[assignment]
        for line in self.rfile:
            if not line.strip():
                continue
            server.submit_line(line)


class IngestServer(socketserver.ThreadingTCPServer):
    """One reader thread per connection; decoded records go to a single sink.

    The sink callable is invoked from reader threads and must be
    thread-safe (the live session serializes into a queue).
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        addr: tuple[str, int],
        sink: Callable[[WireRecord], None],
        classes: frozenset[str] = DEFAULT_OBJECT_CLASSES,
        stats: GatewayStats | None = None,
    ):
        super().__init__(addr, _IngestHandler)
        self._sink = sink
        self._classes = classes
        self.stats = stats if stats is not None else GatewayStats()
        self._lock = threading.Lock()

    def submit_line(self, line: bytes) -> None:
        try:
            rec = decode_record(line, self._classes)
        except GazefuseError:
            with self._lock:
                self.stats.rejected += 1
            return
        self._sink(rec)

    @property
    def port(self) -> int:
        return self.socket.getsockname()[1]


def start_ingest_server(
    host: str,
    port: int,
    sink: Callable[[WireRecord], None],
    classes: frozenset[str] = DEFAULT_OBJECT_CLASSES,
) -> IngestServer:
    server = IngestServer((host, port), sink, classes)
    thread = threading.Thread(target=server.serve_forever, name="ingest", daemon=True)
    thread.start()
    return server


def send_lines(addr: tuple[str, int], lines: Iterable[bytes]) -> int:
    """Push wire lines to a running gateway; returns the number sent."""
    n = 0
    with socket.create_connection(addr) as sock:
        for line in lines:
            sock.sendall(line if line.endswith(b"\n") else line + b"\n")
            n += 1
    return n


def parse_listen_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        host = "127.0.0.1"
    return host, int(port)
