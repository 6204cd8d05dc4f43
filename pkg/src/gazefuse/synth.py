"""Deterministic synthetic session generator.

Produces wire records for gaze, pupil, ECG and detection streams together
with a ground-truth manifest (true R-peak times, true attended-target
timeline, true mean pupil). Everything is a pure function of the config:
a fixed seed yields byte-identical streams, which makes the generator
usable as an oracle for the signal pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidConfig
from .model import Channel, DEFAULT_OBJECT_CLASSES, stream_for
from .wire import WireRecord

# Gaussian bumps summed into the ECG trace: (time offset s, amplitude mV, sigma s).
_ECG_WAVES = (
    (-0.17, 0.12, 0.030),  # P
    (0.0, 1.20, 0.012),  # R
    (0.26, 0.25, 0.050),  # T
)

# Scene layout: base box centers and sizes per object class.
_SCENE = {
    "controller": ((0.50, 0.84), (0.16, 0.10)),
    "drone": ((0.30, 0.34), (0.12, 0.09)),
    "arm": ((0.64, 0.42), (0.14, 0.20)),
    "rover": ((0.64, 0.64), (0.20, 0.12)),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    duration_s: float = 60.0
    person_id: str = "p1"
    gaze_rate_hz: float = 100.0
    pupil_rate_hz: float = 100.0
    ecg_rate_hz: float = 130.0
    detection_rate_hz: float = 25.0
    heart_bpm: float = 60.0
    breathing_hz: float = 0.0
    pupil_mean_mm: float = 3.5
    # Timeline of (start_s, end_s, class-or-None): where the gaze looks.
    scripted_targets: tuple[tuple[float, float, str | None], ...] = ()
    rsa_amp_ms: float = 40.0
    rr_jitter_ms: float = 3.0
    ecg_noise_mv: float = 0.01
    pupil_noise_mm: float = 0.02
    pupil_drift_mm: float = 0.1
    start_ns: int = 1_000_000_000
    classes: tuple[str, ...] = tuple(sorted(DEFAULT_OBJECT_CLASSES))

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise InvalidConfig("duration_s must be positive")
        for name in ("gaze_rate_hz", "pupil_rate_hz", "ecg_rate_hz", "detection_rate_hz"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if not (20.0 <= self.heart_bpm <= 240.0):
            raise InvalidConfig(f"heart_bpm out of range: {self.heart_bpm}")
        if self.breathing_hz < 0:
            raise InvalidConfig("breathing_hz must be >= 0")
        if not (1.0 < self.pupil_mean_mm < 9.0):
            raise InvalidConfig("pupil_mean_mm must sit inside the physical gate (1, 9)")
        if self.start_ns <= 0:
            raise InvalidConfig("start_ns must be positive")
        for start, end, cls in self.scripted_targets:
            if end <= start:
                raise InvalidConfig(f"empty scripted interval ({start}, {end})")
            if cls is not None and cls not in self.classes:
                raise InvalidConfig(f"scripted class {cls!r} not in {self.classes}")


@dataclass
class SynthManifest:
    """Ground truth for one generated session."""

    config: SynthConfig
    r_peaks_ns: list[int]
    targets_ns: list[tuple[int, int, str | None]]
    pupil_mean_mm: float

    def r_peaks_s(self) -> np.ndarray:
        t0 = self.config.start_ns
        return np.array([(p - t0) / 1e9 for p in self.r_peaks_ns])


def _sample_times_ns(cfg: SynthConfig, rate_hz: float) -> list[int]:
    n = int(math.floor(cfg.duration_s * rate_hz))
    return [cfg.start_ns + round(i * 1e9 / rate_hz) for i in range(n)]


def _r_peak_times_s(cfg: SynthConfig, rng: np.random.Generator) -> list[float]:
    base_rr_s = 60.0 / cfg.heart_bpm
    t = 0.35 + rng.uniform(0.0, base_rr_s / 2)
    peaks = []
    while t < cfg.duration_s + 1.0:
        peaks.append(t)
        rr = base_rr_s
        if cfg.breathing_hz > 0:
            rr += (cfg.rsa_amp_ms / 1000.0) * math.sin(2 * math.pi * cfg.breathing_hz * t)
        rr += rng.normal(0.0, cfg.rr_jitter_ms / 1000.0)
        t += max(rr, 0.25)
    return peaks


def _ecg_trace(cfg: SynthConfig, peaks_s: Sequence[float], n: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 2])
    ts = np.arange(n) / cfg.ecg_rate_hz
    sig = 0.15 * np.sin(2 * np.pi * 0.2 * ts + rng.uniform(0, 2 * np.pi))
    sig += rng.normal(0.0, cfg.ecg_noise_mv, n)
    for p in peaks_s:
        for off, amp, sigma in _ECG_WAVES:
            c = p + off
            lo = max(0, int((c - 4 * sigma) * cfg.ecg_rate_hz))
            hi = min(n, int((c + 4 * sigma) * cfg.ecg_rate_hz) + 1)
            if hi <= lo:
                continue
            sig[lo:hi] += amp * np.exp(-0.5 * ((ts[lo:hi] - c) / sigma) ** 2)
    return sig


def _box_center(cls: str, t: float, phases: dict[str, tuple[float, float, float]]):
    (cx, cy), _ = _SCENE[cls]
    fx, fy, phi = phases[cls]
    return (
        cx + 0.05 * math.sin(2 * math.pi * fx * t + phi),
        cy + 0.04 * math.sin(2 * math.pi * fy * t + 1.7 * phi),
    )


def _target_at(cfg: SynthConfig, t: float) -> str | None:
    for start, end, cls in cfg.scripted_targets:
        if start <= t < end:
            return cls
    return None


def synthesize_session(cfg: SynthConfig) -> tuple[list[WireRecord], SynthManifest]:
    """Generate all sensor records for one session, ordered by host_ns."""
    cfg.validate()
    person = cfg.person_id
    records: list[WireRecord] = []

    # Object motion parameters are seeded once so every stream agrees on
    # where the boxes are at any instant.
    scene_rng = np.random.default_rng([cfg.seed, 0])
    phases = {
        cls: (scene_rng.uniform(0.05, 0.15), scene_rng.uniform(0.05, 0.15), scene_rng.uniform(0, 2 * np.pi))
        for cls in sorted(_SCENE)
    }

    # ECG
    ecg_rng = np.random.default_rng([cfg.seed, 1])
    peaks_s = _r_peak_times_s(cfg, ecg_rng)
    ecg_times = _sample_times_ns(cfg, cfg.ecg_rate_hz)
    trace = _ecg_trace(cfg, peaks_s, len(ecg_times))
    ecg_sid = stream_for(person, Channel.ECG_RAW)
    for t_ns, mv in zip(ecg_times, trace):
        records.append(WireRecord(ecg_sid.path(), t_ns, {"mv": float(mv)}))

    # Detections: every class visible in every frame, boxes in slow motion.
    det_rng = np.random.default_rng([cfg.seed, 3])
    det_sid = stream_for(person, Channel.DETECTIONS)
    for seq, t_ns in enumerate(_sample_times_ns(cfg, cfg.detection_rate_hz)):
        t = (t_ns - cfg.start_ns) / 1e9
        items = []
        for cls in cfg.classes:
            if cls not in _SCENE:
                continue
            (cx, cy) = _box_center(cls, t, phases)
            (_, (w, h)) = _SCENE[cls]
            conf = float(np.clip(0.9 + det_rng.normal(0, 0.03), 0.5, 1.0))
            items.append(
                {
                    "class": cls,
                    "confidence": round(conf, 4),
                    "box": {"cx": round(cx, 6), "cy": round(cy, 6), "w": w, "h": h},
                }
            )
        records.append(
            WireRecord(det_sid.path(), t_ns, {"frame_seq": seq, "items": items})
        )

    # Gaze: follows the scripted target's box center, wanders otherwise.
    gaze_rng = np.random.default_rng([cfg.seed, 4])
    gaze_sid = stream_for(person, Channel.GAZE2D)
    for t_ns in _sample_times_ns(cfg, cfg.gaze_rate_hz):
        t = (t_ns - cfg.start_ns) / 1e9
        cls = _target_at(cfg, t)
        if cls is not None:
            cx, cy = _box_center(cls, t, phases)
            _, (w, h) = _SCENE[cls]
            x = cx + gaze_rng.normal(0, w / 12)
            y = cy + gaze_rng.normal(0, h / 12)
        else:
            x = 0.5 + 0.35 * math.sin(2 * math.pi * 0.13 * t)
            y = 0.5 + 0.30 * math.sin(2 * math.pi * 0.07 * t + 1.0)
            x += gaze_rng.normal(0, 0.01)
            y += gaze_rng.normal(0, 0.01)
        records.append(
            WireRecord(
                gaze_sid.path(),
                t_ns,
                {"x": round(float(np.clip(x, 0, 1)), 6), "y": round(float(np.clip(y, 0, 1)), 6), "valid": True},
            )
        )

    # Pupil: slow drift around the configured mean.
    pupil_rng = np.random.default_rng([cfg.seed, 5])
    pupil_sid = stream_for(person, Channel.PUPIL_RAW)
    for t_ns in _sample_times_ns(cfg, cfg.pupil_rate_hz):
        t = (t_ns - cfg.start_ns) / 1e9
        d = (
            cfg.pupil_mean_mm
            + cfg.pupil_drift_mm * math.sin(2 * math.pi * 0.05 * t)
            + pupil_rng.normal(0, cfg.pupil_noise_mm)
        )
        records.append(
            WireRecord(
                pupil_sid.path(),
                t_ns,
                {"diameter_mm": round(float(np.clip(d, 1.05, 8.95)), 6), "eye": "mean"},
            )
        )

    records.sort(key=lambda r: (r.host_ns, r.topic))

    manifest = SynthManifest(
        config=cfg,
        r_peaks_ns=[cfg.start_ns + round(p * 1e9) for p in peaks_s if p < cfg.duration_s],
        targets_ns=[
            (cfg.start_ns + round(s * 1e9), cfg.start_ns + round(e * 1e9), c)
            for s, e, c in cfg.scripted_targets
        ],
        pupil_mean_mm=cfg.pupil_mean_mm,
    )
    return records, manifest


def study_session_config(
    seed: int,
    person_id: str = "p1",
    heart_bpm: float = 70.0,
    breathing_hz: float = 0.25,
    pupil_mean_mm: float = 3.5,
    baseline_s: float = 35.0,
    fixation_s: float = 10.0,
    task_s: float = 60.0,
    n_tasks: int = 5,
) -> SynthConfig:
    """Config shaped like one full study run.

    The returned timeline scripts the gaze: fixations look at each
    luminance target in protocol order, tasks alternate between the drone
    and the obstacle region. The protocol runner itself supplies the event
    records; this only shapes the sensor streams.
    """
    targets: list[tuple[float, float, str | None]] = []
    t = baseline_s
    for cls in ("controller", "drone", "rover", "arm"):
        targets.append((t, t + fixation_s, cls))
        t += fixation_s
    for k in range(n_tasks):
        # Alternate attention between the drone and the arm inside a task.
        seg = task_s / 6
        for j in range(6):
            cls = "drone" if (j + k) % 2 == 0 else "arm"
            targets.append((t + j * seg, t + (j + 1) * seg, cls))
        t += task_s
    return SynthConfig(
        seed=seed,
        duration_s=t + 5.0,
        person_id=person_id,
        heart_bpm=heart_bpm,
        breathing_hz=breathing_hz,
        pupil_mean_mm=pupil_mean_mm,
        scripted_targets=tuple(targets),
    )


def with_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    return replace(cfg, seed=seed)
