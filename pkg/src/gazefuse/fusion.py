"""Gaze-to-object association.

Each valid gaze sample is resolved against the freshest detection frame
not newer than it (within a 200 ms staleness budget): inside a bounding
box means looking at that object, otherwise inside the dynamic ROI hull
spanning the robot-class boxes means watching the action area, otherwise
nothing. Labels are debounced into attention spans, from which dwell
times, gaze-shift counts, heatmaps and frame-coverage statistics derive.

Resolution is watermark-merged: a gaze sample is only resolved once the
detection stream has advanced past its timestamp, so output is a pure
function of the two streams regardless of arrival interleaving.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidGaze
from .geometry import Point, clip_to_unit_square, convex_hull, point_in_polygon
from .model import DetectionFrame, GazeSample

STALENESS_MS = 200.0
DEBOUNCE_MS = 100.0
SPAN_GAP_MS = 500.0
ROI_MARGIN = 0.02
ROI_CLASSES = frozenset({"drone", "arm", "rover"})
HEATMAP_GRID = 64
HEATMAP_SIGMA_CELLS = 1.5

LABEL_NONE = "none"
LABEL_ROI = "roi"


def object_label(cls: str) -> str:
    return f"object:{cls}"


@dataclass(frozen=True)
class RoiPolygon:
    vertices: tuple[Point, ...]
    source_frame_seq: int


@dataclass(frozen=True)
class AttentionSpan:
    label: str
    start_ns: int
    end_ns: int
    n_samples: int


@dataclass(frozen=True)
class AttentionEvent:
    """Confirmed label change (one per attention span, at its start)."""

    host_ns: int
    label: str


def match_detections(
    gaze_ns: int,
    frames: Sequence[DetectionFrame],
    staleness_ms: float = STALENESS_MS,
) -> DetectionFrame | None:
    """Freshest frame at or before the gaze instant, None when stale/absent."""
    budget = int(staleness_ms * 1e6)
    best = None
    for f in frames:
        if f.stamp.host_ns <= gaze_ns:
            best = f
        else:
            break
    if best is None or gaze_ns - best.stamp.host_ns > budget:
        return None
    return best


def resolve_attention(
    gaze: GazeSample, frame: DetectionFrame | None, roi: RoiPolygon | None
) -> str:
    """Label for one gaze sample; box edges and ROI boundary count as hits.

    Nested/overlapping boxes break ties by smallest area, then highest
    confidence, then class name, so resolution is a total order.
    """
    if not gaze.valid:
        raise InvalidGaze("cannot resolve an invalid gaze sample")
    hits = []
    if frame is not None:
        for d in frame.items:
            if d.box.contains(gaze.x, gaze.y):
                hits.append((d.box.area, -d.confidence, d.cls))
    if hits:
        return object_label(min(hits)[2])
    if roi is not None and point_in_polygon((gaze.x, gaze.y), list(roi.vertices)):
        return LABEL_ROI
    return LABEL_NONE


def build_roi(
    frame: DetectionFrame,
    classes: frozenset[str] = ROI_CLASSES,
    margin: float = ROI_MARGIN,
) -> RoiPolygon | None:
    """Dilated convex hull over the robot-class boxes, clipped to the frame.

    Wants at least two contributing boxes; with fewer there is no "area of
    action" to watch and the ROI is absent for that frame.
    """
    boxes = [d.box for d in frame.items if d.cls in classes]
    if len(boxes) < 2:
        return None
    corners: list[Point] = []
    for b in boxes:
        x0, x1 = b.x0 - margin, b.x1 + margin
        y0, y1 = b.y0 - margin, b.y1 + margin
        corners.extend([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    corners = [(min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)) for x, y in corners]
    hull = clip_to_unit_square(convex_hull(corners))
    if len(hull) < 3:
        return None
    return RoiPolygon(tuple(hull), frame.frame_seq)


class SpanBuilder:
    """Merges a labeled gaze stream into attention spans.

    A short excursion (< debounce) that reverts to the previous label is
    absorbed; a silence longer than the gap threshold closes the current
    span. Span boundaries tile exactly across confirmed label changes.
    """

    def __init__(self, debounce_ms: float = DEBOUNCE_MS, gap_ms: float = SPAN_GAP_MS):
        self._debounce_ns = int(debounce_ms * 1e6)
        self._gap_ns = int(gap_ms * 1e6)
        self._cur: list | None = None  # [label, start, last_t, n]
        self._pend: list | None = None

    @property
    def current(self) -> tuple[str, int] | None:
        if self._cur is None:
            return None
        return self._cur[0], self._cur[1]

    def _close(self, state: list, end_ns: int) -> AttentionSpan | None:
        label, start, _, n = state
        if end_ns <= start:
            return None
        return AttentionSpan(label, start, end_ns, n)

    def _close_tail(self, state: list) -> AttentionSpan:
        label, start, last_t, n = state
        return AttentionSpan(label, start, max(last_t, start + 1), n)

    def push(self, t_ns: int, label: str) -> list[AttentionSpan]:
        out: list[AttentionSpan] = []
        if self._cur is None:
            self._cur = [label, t_ns, t_ns, 1]
            return out
        last_t = self._pend[2] if self._pend else self._cur[2]
        if t_ns - last_t > self._gap_ns:
            if self._pend is not None:
                span = self._close(self._cur, self._pend[1])
                if span:
                    out.append(span)
                out.append(self._close_tail(self._pend))
            else:
                out.append(self._close_tail(self._cur))
            self._cur = [label, t_ns, t_ns, 1]
            self._pend = None
            return out
        if self._pend is None:
            if label == self._cur[0]:
                self._cur[2] = t_ns
                self._cur[3] += 1
            else:
                self._pend = [label, t_ns, t_ns, 1]
            return out
        if label == self._pend[0]:
            self._pend[2] = t_ns
            self._pend[3] += 1
            if t_ns - self._pend[1] >= self._debounce_ns:
                span = self._close(self._cur, self._pend[1])
                if span:
                    out.append(span)
                self._cur = self._pend
                self._pend = None
            return out
        if label == self._cur[0]:
            if t_ns - self._pend[1] < self._debounce_ns:
                # Flicker back to the running label: fold it in.
                self._cur[2] = t_ns
                self._cur[3] += self._pend[3] + 1
            else:
                span = self._close(self._cur, self._pend[1])
                if span:
                    out.append(span)
                out.append(AttentionSpan(self._pend[0], self._pend[1], t_ns, self._pend[3]))
                self._cur = [label, t_ns, t_ns, 1]
            self._pend = None
            return out
        # Third label: the pending run stands on its own.
        span = self._close(self._cur, self._pend[1])
        if span:
            out.append(span)
        self._cur = self._pend
        self._pend = [label, t_ns, t_ns, 1]
        return out

    def flush(self) -> list[AttentionSpan]:
        out: list[AttentionSpan] = []
        if self._pend is not None:
            span = self._close(self._cur, self._pend[1])
            if span:
                out.append(span)
            out.append(self._close_tail(self._pend))
        elif self._cur is not None:
            out.append(self._close_tail(self._cur))
        self._cur = None
        self._pend = None
        return out


def span_builder(
    labeled: Iterable[tuple[int, str]], debounce_ms: float = DEBOUNCE_MS
) -> list[AttentionSpan]:
    b = SpanBuilder(debounce_ms=debounce_ms)
    spans: list[AttentionSpan] = []
    for t_ns, label in labeled:
        spans.extend(b.push(t_ns, label))
    spans.extend(b.flush())
    return spans


def dwell_and_shifts(
    spans: Sequence[AttentionSpan], interval_ns: tuple[int, int]
) -> tuple[dict[str, float], int]:
    """Per-label dwell seconds clipped to the interval, plus shift count."""
    a, b = interval_ns
    dwell: dict[str, float] = {}
    for s in spans:
        overlap = min(s.end_ns, b) - max(s.start_ns, a)
        if overlap > 0:
            dwell[s.label] = dwell.get(s.label, 0.0) + overlap / 1e9
    shifts = 0
    for s1, s2 in zip(spans, spans[1:]):
        if s1.label != s2.label and a <= s2.start_ns < b:
            shifts += 1
    return dwell, shifts


@dataclass
class Heatmap:
    grid: np.ndarray
    n_samples: int

    @property
    def empty(self) -> bool:
        return self.n_samples == 0


def accumulate_heatmap(
    points: Iterable[Point],
    grid_size: int = HEATMAP_GRID,
    sigma_cells: float = HEATMAP_SIGMA_CELLS,
) -> Heatmap:
    """Gaussian-smoothed spatial histogram over the unit square.

    Smoothing reflects at the borders so it conserves total mass; the
    grid is then renormalized to sum to exactly 1 (empty input stays
    empty and unnormalized).
    """
    hist = np.zeros((grid_size, grid_size), dtype=float)
    n = 0
    for x, y in points:
        ix = min(int(x * grid_size), grid_size - 1)
        iy = min(int(y * grid_size), grid_size - 1)
        hist[iy, ix] += 1.0
        n += 1
    if n == 0:
        return Heatmap(hist, 0)
    smoothed = gaussian_filter(hist, sigma=sigma_cells, mode="reflect", truncate=3.0)
    return Heatmap(smoothed / smoothed.sum(), n)


def frame_coverage(
    frames: Iterable[DetectionFrame],
    required_classes: frozenset[str] = ROI_CLASSES,
    k: int = 2,
) -> float | None:
    """Fraction of frames seeing at least k distinct required classes."""
    total = 0
    covered = 0
    for f in frames:
        total += 1
        if len(f.classes() & required_classes) >= k:
            covered += 1
    if total == 0:
        return None
    return covered / total


class FusionProcessor:
    """Per-person fusion of the gaze and detection streams.

    Gaze samples are buffered until the detection watermark passes them
    (or the stream is flushed), which makes the span output independent
    of how the two monotone streams interleave on arrival. Invalid gaze
    samples are skipped; long invalid stretches close spans through the
    gap rule.
    """

    def __init__(
        self,
        roi_classes: frozenset[str] = ROI_CLASSES,
        roi_margin: float = ROI_MARGIN,
        staleness_ms: float = STALENESS_MS,
        debounce_ms: float = DEBOUNCE_MS,
        gap_ms: float = SPAN_GAP_MS,
    ):
        self._roi_classes = roi_classes
        self._roi_margin = roi_margin
        self._staleness_ms = staleness_ms
        self._frames: deque[tuple[DetectionFrame, RoiPolygon | None]] = deque()
        self._gaze: deque[GazeSample] = deque()
        self._watermark: int | None = None
        self._builder = SpanBuilder(debounce_ms=debounce_ms, gap_ms=gap_ms)
        self._emitted_start: int | None = None
        self.spans: list[AttentionSpan] = []
        self.frames_seen = 0

    def push_frame(self, frame: DetectionFrame) -> list[AttentionEvent]:
        roi = build_roi(frame, self._roi_classes, self._roi_margin)
        self._frames.append((frame, roi))
        self._watermark = frame.stamp.host_ns
        self.frames_seen += 1
        return self._drain(flush=False)

    def push_gaze(self, gaze: GazeSample) -> list[AttentionEvent]:
        if not gaze.valid:
            return []
        self._gaze.append(gaze)
        return self._drain(flush=False)

    def flush(self) -> list[AttentionEvent]:
        events = self._drain(flush=True)
        self.spans.extend(self._builder.flush())
        return events

    def _drain(self, flush: bool) -> list[AttentionEvent]:
        events: list[AttentionEvent] = []
        while self._gaze:
            g = self._gaze[0]
            t = g.stamp.host_ns
            if not flush and (self._watermark is None or t >= self._watermark):
                break
            self._gaze.popleft()
            frame, roi = self._lookup(t)
            label = resolve_attention(g, frame, roi)
            self.spans.extend(self._builder.push(t, label))
            cur = self._builder.current
            if cur is not None and cur[1] != self._emitted_start:
                self._emitted_start = cur[1]
                events.append(AttentionEvent(cur[1], cur[0]))
        return events

    def _lookup(self, t_ns: int) -> tuple[DetectionFrame | None, RoiPolygon | None]:
        while len(self._frames) >= 2 and self._frames[1][0].stamp.host_ns <= t_ns:
            self._frames.popleft()
        if not self._frames:
            return None, None
        frame, roi = self._frames[0]
        if frame.stamp.host_ns > t_ns:
            return None, None
        if t_ns - frame.stamp.host_ns > int(self._staleness_ms * 1e6):
            return None, None
        return frame, roi
