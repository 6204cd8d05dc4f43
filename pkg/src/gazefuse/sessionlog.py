"""Append-only session log.

UTF-8 text file: line 1 is the session header object, every further line
is ``<seq> <wire-record-line>`` with seq counting up from 0 without gaps.
Records are stored verbatim in canonical wire encoding, so replaying a
log re-emits exactly the bytes that were appended. A truncated tail
yields every complete record plus a CorruptLog marker carrying the last
good sequence number.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import CorruptLog, GazefuseError, IoError
from .protocol import SessionMeta
from .wire import WireRecord, decode_record, encode_record

HEADER_FORMAT = "gazefuse-log/1"
FLUSH_EVERY = 256


class SessionLogWriter:
    """Single writer; appends are sequenced and flushed on event boundaries."""

    def __init__(self, path: str | Path, meta: SessionMeta):
        self.path = Path(path)
        self._seq = 0
        try:
            self._fh = open(self.path, "xb")
            header = dict(meta.to_dict(), format=HEADER_FORMAT)
            self._fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            self._fh.flush()
        except OSError as exc:
            raise IoError(f"cannot create log {self.path}: {exc}") from exc

    def append(self, rec: WireRecord) -> int:
        if self._fh is None:
            raise IoError("log writer is closed")
        line = encode_record(rec)
        try:
            self._fh.write(str(self._seq).encode() + b" " + line)
            if rec.channel.value == "event" or (self._seq + 1) % FLUSH_EVERY == 0:
                self._fh.flush()
        except OSError as exc:
            raise IoError(f"append to {self.path} failed: {exc}") from exc
        seq = self._seq
        self._seq += 1
        return seq

    @property
    def count(self) -> int:
        return self._seq

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None


@dataclass
class SessionLog:
    meta: SessionMeta
    records: list[WireRecord]
    raw_lines: list[bytes]
    corrupt: CorruptLog | None = None


def read_log(path: str | Path, strict: bool = False) -> SessionLog:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read log {path}: {exc}") from exc
    lines = data.split(b"\n")
    trailing_complete = data.endswith(b"\n")
    if trailing_complete:
        lines = lines[:-1]
    if not lines:
        raise CorruptLog("empty log file", -1)
    try:
        header = json.loads(lines[0])
        if header.get("format") != HEADER_FORMAT:
            raise ValueError(f"unknown log format {header.get('format')!r}")
        meta = SessionMeta.from_dict(header)
    except (ValueError, KeyError) as exc:
        raise CorruptLog(f"bad log header: {exc}", -1) from exc

    records: list[WireRecord] = []
    raw: list[bytes] = []
    corrupt: CorruptLog | None = None
    expected = 0
    body = lines[1:]
    for i, line in enumerate(body):
        last_line = i == len(body) - 1
        try:
            if last_line and not trailing_complete:
                raise ValueError("final line truncated (no newline)")
            seq_bytes, _, rest = line.partition(b" ")
            seq = int(seq_bytes)
            if seq != expected:
                raise ValueError(f"sequence gap: expected {expected}, got {seq}")
            rec = decode_record(rest)
        except (ValueError, GazefuseError) as exc:
            corrupt = CorruptLog(f"log damaged at line {i + 2}: {exc}", expected - 1)
            break
        records.append(rec)
        raw.append(rest)
        expected += 1
    log = SessionLog(meta=meta, records=records, raw_lines=raw, corrupt=corrupt)
    if strict and corrupt is not None:
        raise corrupt
    return log


def replay(
    log: SessionLog | str | Path, speed_factor: float | None = None
) -> Iterator[WireRecord]:
    """Re-emit records in sequence order.

    ``speed_factor=None`` replays as fast as possible; a finite factor
    scales the recorded inter-record delays by 1/factor against a
    monotonic deadline clock, so total duration stays within scheduling
    jitter of (span / factor).
    """
    if not isinstance(log, SessionLog):
        log = read_log(log)
    if speed_factor is not None and speed_factor <= 0:
        raise ValueError("speed_factor must be positive (or None for max speed)")
    records = log.records
    if not records:
        return
    if speed_factor is None:
        yield from records
        return
    start_wall = time.monotonic_ns()
    t0 = records[0].host_ns
    for rec in records:
        deadline = start_wall + int((rec.host_ns - t0) / speed_factor)
        while True:
            now = time.monotonic_ns()
            if now >= deadline:
                break
            time.sleep(min((deadline - now) / 1e9, 0.05))
        yield rec
