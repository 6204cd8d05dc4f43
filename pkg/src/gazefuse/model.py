"""Core domain types: streams, timestamps, samples, boxes, detection frames.

Everything here is an immutable value object, safe to copy between
concurrent pipeline stages. All windowing and ordering downstream uses the
host-side timestamp; the device timestamp is carried verbatim when the
device provides one.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import DegenerateBox, MalformedPath

# Object classes used by the reference study. Other deployments may extend
# this set through SynthConfig / decoder arguments; class names stay plain
# strings so tie-breaking can sort them lexicographically.
DEFAULT_OBJECT_CLASSES = frozenset({"drone", "arm", "rover", "controller"})

EYES = ("left", "right", "mean")

_PERSON_ID_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


class Part(str, Enum):
    FACE_EYES = "face_eyes"
    BODY = "body"


class Channel(str, Enum):
    GAZE2D = "gaze2d"
    GAZE3D = "gaze3d"
    PUPIL_RAW = "pupil_raw"
    PUPIL_FILTERED = "pupil_filtered"
    BLINK = "blink"
    ECG_RAW = "ecg_raw"
    RR = "rr"
    BPM = "bpm"
    BREATHING_RATE = "breathing_rate"
    SCENE_IMAGE_REF = "scene_image_ref"
    DETECTIONS = "detections"
    EVENT = "event"


# Eye-side channels live under /humans/faces/<id>/eyes, body-side channels
# under /humans/bodies/<id>. A channel is only legal under its part.
CHANNELS_BY_PART: dict[Part, frozenset[Channel]] = {
    Part.FACE_EYES: frozenset(
        {
            Channel.GAZE2D,
            Channel.GAZE3D,
            Channel.PUPIL_RAW,
            Channel.PUPIL_FILTERED,
            Channel.BLINK,
            Channel.SCENE_IMAGE_REF,
            Channel.DETECTIONS,
        }
    ),
    Part.BODY: frozenset(
        {
            Channel.ECG_RAW,
            Channel.RR,
            Channel.BPM,
            Channel.BREATHING_RATE,
            Channel.EVENT,
        }
    ),
}

PART_BY_CHANNEL: dict[Channel, Part] = {
    ch: part for part, chans in CHANNELS_BY_PART.items() for ch in chans
}


@dataclass(frozen=True, order=True)
class StreamId:
    """Identity of one named sample stream belonging to one person."""

    person_id: str
    part: Part
    channel: Channel

    def __post_init__(self):
        if not _PERSON_ID_RE.match(self.person_id):
            raise MalformedPath(f"bad person id: {self.person_id!r}")
        if self.channel not in CHANNELS_BY_PART[self.part]:
            raise MalformedPath(
                f"channel {self.channel.value} illegal under part {self.part.value}"
            )

    def path(self) -> str:
        if self.part is Part.FACE_EYES:
            return f"/humans/faces/{self.person_id}/eyes/{self.channel.value}"
        return f"/humans/bodies/{self.person_id}/{self.channel.value}"


def stream_for(person_id: str, channel: Channel) -> StreamId:
    """Build the StreamId for a channel under its canonical part."""
    return StreamId(person_id, PART_BY_CHANNEL[channel], channel)


def render_stream_id(sid: StreamId) -> str:
    return sid.path()


def parse_stream_id(path: str) -> StreamId:
    """Inverse of :func:`render_stream_id` on canonical paths."""
    parts = path.split("/")
    if len(parts) >= 2 and parts[0] == "":
        parts = parts[1:]
    if len(parts) == 4 and parts[0] == "humans" and parts[1] == "bodies":
        _, _, person_id, channel = parts
        part = Part.BODY
    elif (
        len(parts) == 5
        and parts[0] == "humans"
        and parts[1] == "faces"
        and parts[3] == "eyes"
    ):
        person_id, channel = parts[2], parts[4]
        part = Part.FACE_EYES
    else:
        raise MalformedPath(f"not a canonical stream path: {path!r}")
    try:
        ch = Channel(channel)
    except ValueError:
        raise MalformedPath(f"unknown channel {channel!r} in {path!r}") from None
    return StreamId(person_id, part, ch)  # re-raises MalformedPath on bad combos


@dataclass(frozen=True, order=True)
class Stamp:
    """Dual timestamp: ingestion host clock plus optional device clock.

    host_ns orders and windows everything; device_ns is informational
    (device clocks drift or may be absent entirely).
    """

    host_ns: int
    device_ns: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.host_ns <= 0:
            raise ValueError(f"host_ns must be positive, got {self.host_ns}")


@dataclass(frozen=True)
class GazeSample:
    stamp: Stamp
    x: float
    y: float
    valid: bool

    def __post_init__(self):
        if self.valid and not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"valid gaze outside unit square: ({self.x}, {self.y})")


@dataclass(frozen=True)
class PupilSample:
    stamp: Stamp
    diameter_mm: float
    eye: str = "mean"

    def __post_init__(self):
        if self.eye not in EYES:
            raise ValueError(f"unknown eye {self.eye!r}")
        if not math.isfinite(self.diameter_mm) or self.diameter_mm < 0:
            raise ValueError(f"bad pupil diameter: {self.diameter_mm}")


@dataclass(frozen=True)
class EcgSample:
    stamp: Stamp
    mv: float

    def __post_init__(self):
        if not math.isfinite(self.mv):
            raise ValueError(f"ECG value not finite: {self.mv}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized scene-camera coordinates.

    Construction clips to the unit square; a box with no remaining area
    raises DegenerateBox. Stored as center + size, origin top-left.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.cx, self.cy, self.w, self.h):
            if not math.isfinite(v):
                raise DegenerateBox(f"non-finite box field: {v}")
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBox(f"non-positive box size {self.w}x{self.h}")
        # Clip per axis; an axis already inside keeps its fields verbatim so
        # re-clipping a clipped box is an exact no-op.
        eps = 1e-12
        for lo_f, size_f in (("cx", "w"), ("cy", "h")):
            c, s = getattr(self, lo_f), getattr(self, size_f)
            lo, hi = c - s / 2, c + s / 2
            if lo >= -eps and hi <= 1 + eps:
                continue
            lo, hi = max(lo, 0.0), min(hi, 1.0)
            if hi <= lo:
                raise DegenerateBox(
                    f"box ({self.cx}, {self.cy}, {self.w}, {self.h}) outside unit square"
                )
            object.__setattr__(self, lo_f, (lo + hi) / 2)
            object.__setattr__(self, size_f, hi - lo)

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, x: float, y: float) -> bool:
        """Edge-inclusive containment test."""
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def corners(self) -> list[tuple[float, float]]:
        return [
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        ]


def clip_bbox(cx: float, cy: float, w: float, h: float) -> BBox:
    """Clip a center-format box to the unit square (errors if nothing is left)."""
    return BBox(cx, cy, w, h)


@dataclass(frozen=True)
class Detection:
    cls: str
    confidence: float
    box: BBox

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")


@dataclass(frozen=True)
class DetectionFrame:
    stamp: Stamp
    frame_seq: int
    items: tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.frame_seq < 0:
            raise ValueError(f"negative frame_seq: {self.frame_seq}")
        object.__setattr__(self, "items", tuple(self.items))

    def classes(self) -> set[str]:
        return {d.cls for d in self.items}


@dataclass(frozen=True)
class EventSample:
    stamp: Stamp
    kind: str
    text: str
