"""Deterministic processing core.

The engine consumes wire records in arrival order and produces derived
records (filtered pupil, per-window HRV values, confirmed attention
changes). It is a pure function of the record sequence: feeding the same
bytes live or from a replayed log yields byte-identical derived output,
which is what makes record/replay analysis trustworthy.

Per-person processors are independent; cross-stream ordering only matters
inside the fusion stage, which watermark-merges its two inputs itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ecg import EcgWindowProcessor, HrvWindow
from .errors import BaselineEmpty, BaselineTooShort
from .fusion import AttentionSpan, FusionProcessor
from .model import Channel, DetectionFrame, GazeSample, Stamp, stream_for
from .protocol import Keypoint
from .pupil import FilteredPupilSample, PupilProcessor, PupilWindowStats
from .wire import WireRecord, to_sample


@dataclass(frozen=True)
class EngineConfig:
    pupil_rate_hz: float = 100.0
    ecg_rate_hz: float = 130.0
    powerline_hz: float | None = None
    retain: bool = True  # keep derived series in memory (analysis mode)


@dataclass
class PersonState:
    pupil: PupilProcessor
    ecg: EcgWindowProcessor
    fusion: FusionProcessor
    filtered_pupil: list[FilteredPupilSample] = field(default_factory=list)
    pupil_stats: list[PupilWindowStats] = field(default_factory=list)
    hrv_windows: list[HrvWindow] = field(default_factory=list)
    gaze_valid: list[tuple[int, float, float]] = field(default_factory=list)
    frames: list[DetectionFrame] = field(default_factory=list)
    keypoints: list[Keypoint] = field(default_factory=list)
    phase_events: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def spans(self) -> list[AttentionSpan]:
        return self.fusion.spans


class SessionEngine:
    def __init__(self, config: EngineConfig = EngineConfig()):
        self.config = config
        self.people: dict[str, PersonState] = {}
        self.records_processed = 0

    def _person(self, person_id: str) -> PersonState:
        st = self.people.get(person_id)
        if st is None:
            st = PersonState(
                pupil=PupilProcessor(self.config.pupil_rate_hz),
                ecg=EcgWindowProcessor(self.config.ecg_rate_hz, self.config.powerline_hz),
                fusion=FusionProcessor(),
            )
            self.people[person_id] = st
        return st

    def process(self, rec: WireRecord) -> list[WireRecord]:
        """Feed one record; returns derived records in deterministic order."""
        self.records_processed += 1
        person = rec.stream.person_id
        st = self._person(person)
        ch = rec.channel
        out: list[WireRecord] = []
        retain = self.config.retain

        if ch is Channel.PUPIL_RAW:
            sample = to_sample(rec)
            filtered, stats = st.pupil.process(sample)
            if filtered is not None:
                if retain:
                    st.filtered_pupil.append(filtered)
                    st.pupil_stats.append(stats)
                sid = stream_for(person, Channel.PUPIL_FILTERED)
                out.append(
                    WireRecord(
                        sid.path(),
                        filtered.stamp.host_ns,
                        {
                            "diameter_mm": filtered.d_filtered_mm,
                            "eye": sample.eye,
                            "d_lp_mm": filtered.d_lp_mm,
                        },
                        filtered.stamp.device_ns,
                    )
                )
        elif ch is Channel.ECG_RAW:
            for win in st.ecg.push(to_sample(rec)):
                if retain:
                    st.hrv_windows.append(win)
                out.extend(self._window_records(person, win))
        elif ch is Channel.GAZE2D:
            gaze: GazeSample = to_sample(rec)
            if retain and gaze.valid:
                st.gaze_valid.append((gaze.stamp.host_ns, gaze.x, gaze.y))
            out.extend(self._attention_records(person, st.fusion.push_gaze(gaze)))
        elif ch is Channel.DETECTIONS:
            frame: DetectionFrame = to_sample(rec)
            if retain:
                st.frames.append(frame)
            out.extend(self._attention_records(person, st.fusion.push_frame(frame)))
        elif ch is Channel.EVENT:
            self._handle_event(st, rec)
        return out

    def _handle_event(self, st: PersonState, rec: WireRecord) -> None:
        kind = rec.payload["kind"]
        text = rec.payload["text"]
        if kind == "phase":
            st.phase_events.append((rec.host_ns, text))
            if text == "baseline:begin":
                st.pupil.begin_baseline()
            elif text == "baseline:end":
                try:
                    st.pupil.end_baseline()
                except (BaselineEmpty, BaselineTooShort) as exc:
                    st.warnings.append(f"baseline discarded: {exc}")
        elif kind in ("session",):
            st.phase_events.append((rec.host_ns, f"session:{text}"))
        else:
            st.keypoints.append(Keypoint(rec.host_ns, kind, text))

    def _window_records(self, person: str, win: HrvWindow) -> list[WireRecord]:
        out = []
        meta = {
            "window_start_ns": win.window_start_ns,
            "window_end_ns": win.window_end.host_ns,
            "quality": win.quality,
        }
        end = win.window_end.host_ns
        if win.rr is not None and win.rr.rr_ms:
            sid = stream_for(person, Channel.RR)
            out.append(WireRecord(sid.path(), end, dict(meta, value=win.rr.rr_ms[-1])))
        if win.bpm is not None:
            sid = stream_for(person, Channel.BPM)
            out.append(WireRecord(sid.path(), end, dict(meta, value=win.bpm)))
        if win.breathing_rate_hz is not None:
            sid = stream_for(person, Channel.BREATHING_RATE)
            out.append(WireRecord(sid.path(), end, dict(meta, value=win.breathing_rate_hz)))
        return out

    def _attention_records(self, person: str, events) -> list[WireRecord]:
        sid = stream_for(person, Channel.EVENT)
        return [
            WireRecord(sid.path(), ev.host_ns, {"kind": "attention", "text": ev.label})
            for ev in events
        ]

    def flush(self) -> list[WireRecord]:
        """End of stream: resolve buffered gaze and close open spans."""
        out: list[WireRecord] = []
        for person in sorted(self.people):
            st = self.people[person]
            out.extend(self._attention_records(person, st.fusion.flush()))
        return out

    def run(self, records) -> list[WireRecord]:
        derived: list[WireRecord] = []
        for rec in records:
            derived.extend(self.process(rec))
        derived.extend(self.flush())
        return derived


def phase_intervals(events: list[tuple[int, str]]) -> dict[str, tuple[int, int]]:
    """Final-attempt interval per completed task, from phase event texts.

    A crash/restart discards the earlier attempt: the interval runs from
    the last begin/restart to the matching end. Also returns the baseline
    interval when complete.
    """
    out: dict[str, tuple[int, int]] = {}
    open_at: dict[str, int] = {}
    for t_ns, text in events:
        parts = text.split(":")
        if parts[0] == "baseline":
            if parts[1] == "begin":
                open_at["baseline"] = t_ns
            elif parts[1] == "end" and "baseline" in open_at:
                out["baseline"] = (open_at.pop("baseline"), t_ns)
        elif parts[0] == "task" and len(parts) == 3:
            key = f"task:{parts[1]}"
            if parts[2] in ("begin", "restart"):
                open_at[key] = t_ns
            elif parts[2] == "end" and key in open_at:
                out[key] = (open_at.pop(key), t_ns)
            elif parts[2] == "crash":
                open_at.pop(key, None)
    return out
