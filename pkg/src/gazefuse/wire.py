"""Newline-delimited wire protocol.

One UTF-8 JSON object per line. Required top-level fields: ``topic``
(canonical stream path), ``host_ns`` (int), ``payload`` (object);
``device_ns`` is optional. Payload fields are validated strictly against
the channel schema; unknown payload fields are ignored and stripped, so
decoding is canonicalizing: ``decode(encode(r)) == r``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import DegenerateBox, MalformedPath, ParseError, SchemaError, UnknownTopic
from .model import (
    BBox,
    Channel,
    DEFAULT_OBJECT_CLASSES,
    Detection,
    DetectionFrame,
    EcgSample,
    EventSample,
    EYES,
    GazeSample,
    PupilSample,
    Stamp,
    StreamId,
    parse_stream_id,
)

# Operator keypoint kinds plus the kinds emitted by the protocol runner and
# fusion stage. Event records with other kinds are rejected at decode time.
EVENT_KINDS = frozenset(
    {"crash", "lap_completed", "note", "quality_flag", "phase", "attention", "session"}
)


@dataclass(frozen=True)
class WireRecord:
    topic: str
    host_ns: int
    payload: dict[str, Any]
    device_ns: int | None = None
    stream: StreamId = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "stream", parse_stream_id(self.topic))

    @property
    def channel(self) -> Channel:
        return self.stream.channel

    @property
    def stamp(self) -> Stamp:
        return Stamp(self.host_ns, self.device_ns)


def _need(payload: dict, name: str, kind: str):
    if name not in payload:
        raise SchemaError(f"missing payload field {name!r}")
    v = payload[name]
    if kind == "number":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"field {name!r} must be a number, got {type(v).__name__}")
        return float(v)
    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaError(f"field {name!r} must be an integer, got {type(v).__name__}")
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            raise SchemaError(f"field {name!r} must be a boolean, got {type(v).__name__}")
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise SchemaError(f"field {name!r} must be a string, got {type(v).__name__}")
        return v
    raise AssertionError(kind)


def _validate_payload(
    channel: Channel, payload: dict[str, Any], classes: frozenset[str]
) -> dict[str, Any]:
    """Return the canonical payload (schema fields only) or raise SchemaError."""
    if not isinstance(payload, dict):
        raise SchemaError("payload must be an object")
    if channel is Channel.GAZE2D:
        return {
            "x": _need(payload, "x", "number"),
            "y": _need(payload, "y", "number"),
            "valid": _need(payload, "valid", "bool"),
        }
    if channel is Channel.GAZE3D:
        return {
            "x": _need(payload, "x", "number"),
            "y": _need(payload, "y", "number"),
            "z": _need(payload, "z", "number"),
            "valid": _need(payload, "valid", "bool"),
        }
    if channel is Channel.PUPIL_RAW or channel is Channel.PUPIL_FILTERED:
        out = {
            "diameter_mm": _need(payload, "diameter_mm", "number"),
            "eye": _need(payload, "eye", "str"),
        }
        if out["eye"] not in EYES:
            raise SchemaError(f"unknown eye {out['eye']!r}")
        if channel is Channel.PUPIL_FILTERED:
            out["d_lp_mm"] = _need(payload, "d_lp_mm", "number")
        return out
    if channel is Channel.BLINK:
        return {"closed": _need(payload, "closed", "bool")}
    if channel is Channel.ECG_RAW:
        return {"mv": _need(payload, "mv", "number")}
    if channel in (Channel.RR, Channel.BPM, Channel.BREATHING_RATE):
        out = {"value": _need(payload, "value", "number")}
        for opt in ("window_start_ns", "window_end_ns"):
            if opt in payload:
                out[opt] = _need(payload, opt, "int")
        if "quality" in payload:
            out["quality"] = _need(payload, "quality", "number")
        return out
    if channel is Channel.SCENE_IMAGE_REF:
        return {"frame_seq": _need(payload, "frame_seq", "int")}
    if channel is Channel.DETECTIONS:
        frame_seq = _need(payload, "frame_seq", "int")
        if "items" not in payload or not isinstance(payload["items"], list):
            raise SchemaError("detections payload needs an items list")
        items = []
        for raw in payload["items"]:
            if not isinstance(raw, dict):
                raise SchemaError("detection item must be an object")
            cls = _need(raw, "class", "str")
            if cls not in classes:
                raise SchemaError(f"unknown object class {cls!r}")
            conf = _need(raw, "confidence", "number")
            if not (0.0 <= conf <= 1.0):
                raise SchemaError(f"confidence outside [0,1]: {conf}")
            if "box" not in raw or not isinstance(raw["box"], dict):
                raise SchemaError("detection item needs a box object")
            b = raw["box"]
            try:
                box = BBox(
                    _need(b, "cx", "number"),
                    _need(b, "cy", "number"),
                    _need(b, "w", "number"),
                    _need(b, "h", "number"),
                )
            except DegenerateBox as exc:
                raise SchemaError(str(exc)) from exc
            items.append(
                {
                    "class": cls,
                    "confidence": conf,
                    "box": {"cx": box.cx, "cy": box.cy, "w": box.w, "h": box.h},
                }
            )
        return {"frame_seq": frame_seq, "items": items}
    if channel is Channel.EVENT:
        kind = _need(payload, "kind", "str")
        if kind not in EVENT_KINDS:
            raise SchemaError(f"unknown event kind {kind!r}")
        return {"kind": kind, "text": _need(payload, "text", "str")}
    raise AssertionError(f"unhandled channel {channel}")


def decode_record(
    line: bytes | str, classes: frozenset[str] = DEFAULT_OBJECT_CLASSES
) -> WireRecord:
    """Decode and validate one wire line."""
    if isinstance(line, (bytes, bytearray)):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"line is not UTF-8: {exc}") from exc
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad wire syntax: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("wire record must be a JSON object")
    for req in ("topic", "host_ns", "payload"):
        if req not in obj:
            raise SchemaError(f"missing required field {req!r}")
    topic = obj["topic"]
    if not isinstance(topic, str):
        raise SchemaError("topic must be a string")
    try:
        sid = parse_stream_id(topic)
    except MalformedPath as exc:
        raise UnknownTopic(str(exc)) from exc
    host_ns = obj["host_ns"]
    if isinstance(host_ns, bool) or not isinstance(host_ns, int) or host_ns <= 0:
        raise SchemaError(f"host_ns must be a positive integer, got {host_ns!r}")
    device_ns = obj.get("device_ns")
    if device_ns is not None and (isinstance(device_ns, bool) or not isinstance(device_ns, int)):
        raise SchemaError(f"device_ns must be an integer, got {device_ns!r}")
    payload = _validate_payload(sid.channel, obj["payload"], classes)
    return WireRecord(topic=sid.path(), host_ns=host_ns, payload=payload, device_ns=device_ns)


def encode_record(rec: WireRecord) -> bytes:
    """Canonical single-line encoding (stable bytes for identical records)."""
    obj: dict[str, Any] = {"topic": rec.topic, "host_ns": rec.host_ns}
    if rec.device_ns is not None:
        obj["device_ns"] = rec.device_ns
    obj["payload"] = rec.payload
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def to_sample(rec: WireRecord):
    """Materialize the typed sample carried by a record.

    Derived channels (pupil_filtered, rr, ...) and refs/blinks return
    None: they are produced by the pipelines, never re-ingested.
    """
    p = rec.payload
    ch = rec.channel
    if ch is Channel.GAZE2D:
        return GazeSample(rec.stamp, p["x"], p["y"], p["valid"])
    if ch is Channel.PUPIL_RAW:
        return PupilSample(rec.stamp, p["diameter_mm"], p["eye"])
    if ch is Channel.ECG_RAW:
        return EcgSample(rec.stamp, p["mv"])
    if ch is Channel.DETECTIONS:
        items = tuple(
            Detection(i["class"], i["confidence"], BBox(**i["box"])) for i in p["items"]
        )
        return DetectionFrame(rec.stamp, p["frame_seq"], items)
    if ch is Channel.EVENT:
        return EventSample(rec.stamp, p["kind"], p["text"])
    return None


def gaze_record(sid: StreamId, s: GazeSample) -> WireRecord:
    return WireRecord(
        sid.path(),
        s.stamp.host_ns,
        {"x": s.x, "y": s.y, "valid": s.valid},
        s.stamp.device_ns,
    )


def pupil_record(sid: StreamId, s: PupilSample) -> WireRecord:
    return WireRecord(
        sid.path(),
        s.stamp.host_ns,
        {"diameter_mm": s.diameter_mm, "eye": s.eye},
        s.stamp.device_ns,
    )


def ecg_record(sid: StreamId, s: EcgSample) -> WireRecord:
    return WireRecord(sid.path(), s.stamp.host_ns, {"mv": s.mv}, s.stamp.device_ns)


def detections_record(sid: StreamId, f: DetectionFrame) -> WireRecord:
    items = [
        {
            "class": d.cls,
            "confidence": d.confidence,
            "box": {"cx": d.box.cx, "cy": d.box.cy, "w": d.box.w, "h": d.box.h},
        }
        for d in f.items
    ]
    return WireRecord(
        sid.path(),
        f.stamp.host_ns,
        {"frame_seq": f.frame_seq, "items": items},
        f.stamp.device_ns,
    )


def event_record(sid: StreamId, stamp: Stamp, kind: str, text: str) -> WireRecord:
    return WireRecord(sid.path(), stamp.host_ns, {"kind": kind, "text": text}, stamp.device_ns)


def encode_stream(records: Iterable[WireRecord]) -> bytes:
    return b"".join(encode_record(r) for r in records)
