"""Post-session analysis and file exports.

Replays a session log through the processing engine as fast as possible,
slices every derived series by the final attempt of each task, and
aggregates the behavioral / cognitive-load constituents: filtered pupil
mean and variance, window-averaged SDNN and BPM, breathing rate, per-label
dwell, gaze shifts (count and per minute), laps, detection-frame coverage
and the gaze heatmap. Cognitive load is reported through its constituents;
no fused index is invented.

Analysis is a pure function of the log bytes: exporting twice produces
byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import EngineConfig, SessionEngine, phase_intervals
from .errors import EmptyGroup, IoError, MissingTask
from .fusion import (
    Heatmap,
    accumulate_heatmap,
    dwell_and_shifts,
    frame_coverage,
    object_label,
)
from .model import DEFAULT_OBJECT_CLASSES
from .protocol import SessionMeta, lap_count
from .sessionlog import SessionLog, read_log

EXPERT_THRESHOLD_HOURS = 15.0

DWELL_LABELS = tuple(
    [object_label(c) for c in sorted(DEFAULT_OBJECT_CLASSES)] + ["roi", "none"]
)

SCALAR_FIELDS = (
    "mean_pupil_filtered_mm",
    "pupil_variance_mm2",
    "mean_sdnn_ms",
    "mean_bpm",
    "breathing_rate_hz",
    "gaze_shift_count",
    "gaze_shift_per_min",
    "laps",
    "frame_coverage_fraction",
)


@dataclass
class TaskMetrics:
    task: int
    interval_ns: tuple[int, int]
    mean_pupil_filtered_mm: float | None = None
    pupil_variance_mm2: float | None = None
    mean_sdnn_ms: float | None = None
    mean_bpm: float | None = None
    breathing_rate_hz: float | None = None
    dwell_s: dict[str, float] = field(default_factory=dict)
    gaze_shift_count: int | None = None
    gaze_shift_per_min: float | None = None
    laps: int = 0
    frame_coverage_fraction: float | None = None
    heatmap: Heatmap | None = None
    missing_streams: list[str] = field(default_factory=list)


@dataclass
class SessionAnalysis:
    meta: SessionMeta
    tasks: dict[int, TaskMetrics]
    warnings: list[str] = field(default_factory=list)
    expert_threshold_hours: float = EXPERT_THRESHOLD_HOURS

    @property
    def group(self) -> str:
        # Threshold is inclusive: exactly 15 h counts as expert.
        return "expert" if self.meta.expertise_hours >= self.expert_threshold_hours else "novice"


def _in(t_ns: int, interval: tuple[int, int]) -> bool:
    return interval[0] <= t_ns < interval[1]


def analyze_log(
    log: SessionLog | str | Path,
    tasks: tuple[int, ...] = (1, 2, 3, 4, 5),
    engine_config: EngineConfig | None = None,
    require_tasks: bool = False,
    expert_threshold_hours: float = EXPERT_THRESHOLD_HOURS,
) -> SessionAnalysis:
    if not isinstance(log, SessionLog):
        log = read_log(log)
    engine = SessionEngine(engine_config or EngineConfig())
    engine.run(log.records)
    person = log.meta.person_id
    st = engine.people.get(person)
    if st is None:
        raise MissingTask(f"log has no records for person {person!r}")
    intervals = phase_intervals(st.phase_events)
    out: dict[int, TaskMetrics] = {}
    for n in tasks:
        key = f"task:{n}"
        if key not in intervals:
            if require_tasks:
                raise MissingTask(f"no completed interval for task {n}")
            continue
        out[n] = _task_metrics(st, n, intervals[key])
    return SessionAnalysis(
        meta=log.meta,
        tasks=out,
        warnings=list(st.warnings),
        expert_threshold_hours=expert_threshold_hours,
    )


def task_metrics(log: SessionLog | str | Path, task_n: int) -> TaskMetrics:
    """Metrics for one task's final attempt; raises MissingTask if absent."""
    analysis = analyze_log(log, tasks=(task_n,), require_tasks=True)
    return analysis.tasks[task_n]


def _task_metrics(st, task_n: int, interval: tuple[int, int]) -> TaskMetrics:
    m = TaskMetrics(task=task_n, interval_ns=interval)
    span_s = (interval[1] - interval[0]) / 1e9

    pupil = [s.d_filtered_mm for s in st.filtered_pupil if _in(s.stamp.host_ns, interval)]
    if pupil:
        arr = np.asarray(pupil)
        m.mean_pupil_filtered_mm = float(arr.mean())
        m.pupil_variance_mm2 = float(arr.var())
    else:
        m.missing_streams.append("pupil_filtered")

    wins = [
        w
        for w in st.hrv_windows
        if _in(w.window_end.host_ns, (interval[0] + 1, interval[1] + 1))
    ]
    sdnn = [w.sdnn_ms for w in wins if w.sdnn_ms is not None]
    bpm = [w.bpm for w in wins if w.bpm is not None]
    br = [w.breathing_rate_hz for w in wins if w.breathing_rate_hz is not None]
    if sdnn:
        m.mean_sdnn_ms = float(np.mean(sdnn))
    if bpm:
        m.mean_bpm = float(np.mean(bpm))
    if br:
        m.breathing_rate_hz = float(np.mean(br))
    if not wins:
        m.missing_streams.append("ecg_raw")

    dwell, shifts = dwell_and_shifts(st.spans, interval)
    m.dwell_s = dwell
    gaze_pts = [(x, y) for t, x, y in st.gaze_valid if _in(t, interval)]
    if gaze_pts:
        m.gaze_shift_count = shifts
        m.gaze_shift_per_min = shifts / (span_s / 60.0) if span_s > 0 else None
        m.heatmap = accumulate_heatmap(gaze_pts)
    else:
        m.missing_streams.append("gaze2d")

    frames = [f for f in st.frames if _in(f.stamp.host_ns, interval)]
    if frames:
        m.frame_coverage_fraction = frame_coverage(frames)
    else:
        m.missing_streams.append("detections")

    m.laps = lap_count(st.keypoints, interval)
    return m


@dataclass
class GroupSummary:
    group: str
    task: int
    n: int
    means: dict[str, float]
    sds: dict[str, float]


def _summarize(group: str, task_n: int, rows: list[TaskMetrics]) -> GroupSummary:
    means: dict[str, float] = {}
    sds: dict[str, float] = {}
    for name in SCALAR_FIELDS:
        vals = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        if vals:
            means[name] = float(np.mean(vals))
            sds[name] = float(np.std(vals))  # population SD: descriptive only
    return GroupSummary(group, task_n, len(rows), means, sds)


def group_summary(
    analyses: list[SessionAnalysis], task_n: int
) -> tuple[GroupSummary, GroupSummary]:
    """(expert, novice) descriptive stats for one task across participants."""
    out = []
    for grp in ("expert", "novice"):
        rows = [
            a.tasks[task_n]
            for a in analyses
            if a.group == grp and task_n in a.tasks
        ]
        if not rows:
            raise EmptyGroup(f"no {grp} sessions with task {task_n}")
        out.append(_summarize(grp, task_n, rows))
    return out[0], out[1]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export(analyses: list[SessionAnalysis], out_dir: str | Path) -> list[Path]:
    """Write metrics.csv, summary.csv, coverage.csv and per-task heatmaps."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    written: list[Path] = []

    metrics_cols = (
        ["session_id", "person_id", "expertise_hours", "group", "task"]
        + list(SCALAR_FIELDS)
        + [f"dwell_{label}_s" for label in DWELL_LABELS]
    )
    lines = [",".join(metrics_cols)]
    for a in sorted(analyses, key=lambda a: a.meta.session_id):
        for n in sorted(a.tasks):
            t = a.tasks[n]
            row = [
                a.meta.session_id,
                a.meta.person_id,
                _fmt(a.meta.expertise_hours),
                a.group,
                str(n),
            ]
            row += [_fmt(getattr(t, f)) for f in SCALAR_FIELDS]
            row += [_fmt(t.dwell_s.get(label)) for label in DWELL_LABELS]
            lines.append(",".join(row))
    written.append(_write(out_dir / "metrics.csv", "\n".join(lines) + "\n"))

    tasks_present = sorted({n for a in analyses for n in a.tasks})
    sum_cols = ["group", "task", "n"]
    for f in SCALAR_FIELDS:
        sum_cols += [f"{f}_mean", f"{f}_sd"]
    lines = [",".join(sum_cols)]
    for n in tasks_present:
        for grp in ("expert", "novice"):
            rows = [a.tasks[n] for a in analyses if a.group == grp and n in a.tasks]
            if not rows:
                continue  # empty group: row omitted
            g = _summarize(grp, n, rows)
            row = [g.group, str(g.task), str(g.n)]
            for fname in SCALAR_FIELDS:
                row += [_fmt(g.means.get(fname)), _fmt(g.sds.get(fname))]
            lines.append(",".join(row))
    written.append(_write(out_dir / "summary.csv", "\n".join(lines) + "\n"))

    lines = ["session_id,person_id,task,frame_coverage_fraction"]
    for a in sorted(analyses, key=lambda a: a.meta.session_id):
        for n in sorted(a.tasks):
            t = a.tasks[n]
            lines.append(
                ",".join(
                    [a.meta.session_id, a.meta.person_id, str(n), _fmt(t.frame_coverage_fraction)]
                )
            )
    written.append(_write(out_dir / "coverage.csv", "\n".join(lines) + "\n"))

    for a in analyses:
        for n, t in sorted(a.tasks.items()):
            if t.heatmap is None or t.heatmap.empty:
                continue
            stem = f"heatmap_task{n}_{a.meta.person_id}"
            written.append(_write(out_dir / f"{stem}.txt", _heatmap_txt(t.heatmap)))
            written.append(_write(out_dir / f"{stem}.pgm", _heatmap_pgm(t.heatmap)))
    return written


def _write(path: Path, content: str) -> Path:
    try:
        path.write_text(content, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _heatmap_txt(hm: Heatmap) -> str:
    rows = [" ".join(repr(float(v)) for v in row) for row in hm.grid]
    return "\n".join(rows) + "\n"


def _heatmap_pgm(hm: Heatmap) -> str:
    """Plain (P2) PGM, grayscale scaled to the grid maximum."""
    g = hm.grid
    peak = float(g.max())
    scale = 255.0 / peak if peak > 0 else 0.0
    h, w = g.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in g:
        lines.append(" ".join(str(int(round(v * scale))) for v in row))
    return "\n".join(lines) + "\n"


def split_groups(
    analyses: list[SessionAnalysis], threshold_hours: float = EXPERT_THRESHOLD_HOURS
) -> tuple[list[SessionAnalysis], list[SessionAnalysis]]:
    experts = [a for a in analyses if a.meta.expertise_hours >= threshold_hours]
    novices = [a for a in analyses if a.meta.expertise_hours < threshold_hours]
    return experts, novices
