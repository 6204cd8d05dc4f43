"""Pupil diameter processing chain.

Stages, in order: physical outlier gate (accept strictly between 1 and
9 mm), causal second-order Butterworth low-pass at 4 Hz, subtraction of
the baseline median, and per-sample statistics over a trailing 1 s
window. The filtered value obeys the exact arithmetic relation
``d_filtered == d_lp - baseline.median_mm``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from statistics import median
from typing import Iterable, Iterator

import numpy as np
from scipy.signal import butter, lfilter_zi

from .errors import BadRate, BaselineEmpty, BaselineTooShort, NoBaseline
from .model import PupilSample, Stamp

GATE_LOW_MM = 1.0
GATE_HIGH_MM = 9.0
CUTOFF_HZ = 4.0
GAP_RESET_S = 0.5
WINDOW_S = 1.0
BASELINE_MIN_S = 30.0


def gate_pupil(sample: PupilSample) -> bool:
    """True iff the diameter is physically plausible (strict open interval)."""
    return GATE_LOW_MM < sample.diameter_mm < GATE_HIGH_MM


@dataclass(frozen=True)
class PupilBaseline:
    median_mm: float
    n_samples: int
    span_s: float


@dataclass(frozen=True)
class FilteredPupilSample:
    stamp: Stamp
    d_lp_mm: float
    d_filtered_mm: float


@dataclass(frozen=True)
class PupilWindowStats:
    window_end: Stamp
    mean_mm: float
    variance_mm2: float
    n: int


class StreamingLowpass:
    """Causal biquad low-pass with gap-aware state.

    Coefficients come from a bilinear-transform Butterworth design, so the
    -3 dB point lands exactly on the cutoff. After an input gap longer
    than ``gap_reset_s`` the state is re-primed with the next sample
    (steady-state initialization), preventing stale state from leaking
    across tracking dropouts.
    """

    def __init__(self, rate_hz: float, cutoff_hz: float = CUTOFF_HZ,
                 gap_reset_s: float = GAP_RESET_S):
        if rate_hz <= 2 * cutoff_hz:
            raise BadRate(f"rate {rate_hz} Hz cannot carry a {cutoff_hz} Hz cutoff")
        self.rate_hz = rate_hz
        b, a = butter(2, cutoff_hz, btype="low", fs=rate_hz)
        self._b = b
        self._a = a
        self._zi_unit = lfilter_zi(b, a)
        self._z = None
        self._last_ns: int | None = None
        self._gap_ns = int(gap_reset_s * 1e9)

    def push(self, t_ns: int, x: float) -> float:
        if self._z is None or (
            self._last_ns is not None and t_ns - self._last_ns > self._gap_ns
        ):
            self._z = self._zi_unit * x
        b, a, z = self._b, self._a, self._z
        y = b[0] * x + z[0]
        z[0] = b[1] * x - a[1] * y + z[1]
        z[1] = b[2] * x - a[2] * y
        self._last_ns = t_ns
        return y

    def reset(self) -> None:
        self._z = None
        self._last_ns = None


def lowpass_pupil(
    samples: Iterable[PupilSample], nominal_rate_hz: float
) -> Iterator[tuple[Stamp, float]]:
    """Low-pass a gated sample stream; yields (stamp, d_lp_mm)."""
    lp = StreamingLowpass(nominal_rate_hz)
    for s in samples:
        yield s.stamp, lp.push(s.stamp.host_ns, s.diameter_mm)


class BaselineAccumulator:
    """Collects gated samples during the calibration phase."""

    def __init__(self):
        self._values: list[float] = []
        self._first_ns: int | None = None
        self._last_ns: int | None = None

    def add(self, sample: PupilSample) -> None:
        if not gate_pupil(sample):
            return
        if self._first_ns is None:
            self._first_ns = sample.stamp.host_ns
        self._last_ns = sample.stamp.host_ns
        self._values.append(sample.diameter_mm)

    @property
    def span_s(self) -> float:
        if self._first_ns is None or self._last_ns is None:
            return 0.0
        return (self._last_ns - self._first_ns) / 1e9

    def finalize(self) -> PupilBaseline:
        if not self._values:
            raise BaselineEmpty("no gated samples in baseline period")
        if self.span_s < BASELINE_MIN_S:
            raise BaselineTooShort(
                f"baseline spans {self.span_s:.1f} s, need {BASELINE_MIN_S:.0f} s"
            )
        return PupilBaseline(
            median_mm=float(median(self._values)),
            n_samples=len(self._values),
            span_s=self.span_s,
        )


def baseline_median(samples: Iterable[PupilSample]) -> PupilBaseline:
    """Gate then reduce a calibration recording to its baseline."""
    acc = BaselineAccumulator()
    for s in samples:
        acc.add(s)
    return acc.finalize()


def filter_pupil(
    lp_stream: Iterable[tuple[Stamp, float]], baseline: PupilBaseline | None
) -> Iterator[FilteredPupilSample]:
    if baseline is None:
        raise NoBaseline("cannot compute baseline-relative diameter without a baseline")
    for stamp, d_lp in lp_stream:
        yield FilteredPupilSample(stamp, d_lp, d_lp - baseline.median_mm)


class WindowStatsAccumulator:
    """Trailing 1 s window over filtered values, one emission per sample."""

    def __init__(self, window_s: float = WINDOW_S):
        self._window_ns = int(window_s * 1e9)
        self._buf: deque[tuple[int, float]] = deque()

    def push(self, sample: FilteredPupilSample) -> PupilWindowStats:
        t = sample.stamp.host_ns
        self._buf.append((t, sample.d_filtered_mm))
        lo = t - self._window_ns
        while self._buf and self._buf[0][0] <= lo:
            self._buf.popleft()
        values = np.fromiter((v for _, v in self._buf), dtype=float)
        return PupilWindowStats(
            window_end=sample.stamp,
            mean_mm=float(values.mean()),
            variance_mm2=float(values.var()),
            n=len(values),
        )


def pupil_window_stats(
    filtered: Iterable[FilteredPupilSample],
) -> Iterator[PupilWindowStats]:
    acc = WindowStatsAccumulator()
    for s in filtered:
        yield acc.push(s)


class PupilProcessor:
    """Stateful per-person pipeline used by the session engine.

    Baseline collection is switched on and off by the protocol phase
    events; until a baseline is finalized only d_lp is produced and the
    filtered output stays absent.
    """

    def __init__(self, rate_hz: float):
        self.lowpass = StreamingLowpass(rate_hz)
        self.window = WindowStatsAccumulator()
        self.baseline: PupilBaseline | None = None
        self._collector: BaselineAccumulator | None = None
        self.rejected = 0

    def begin_baseline(self) -> None:
        self._collector = BaselineAccumulator()

    def end_baseline(self) -> PupilBaseline:
        if self._collector is None:
            raise BaselineEmpty("baseline was never started")
        self.baseline = self._collector.finalize()
        self._collector = None
        return self.baseline

    @property
    def baseline_span_s(self) -> float:
        return self._collector.span_s if self._collector is not None else 0.0

    def process(
        self, sample: PupilSample
    ) -> tuple[FilteredPupilSample | None, PupilWindowStats | None]:
        if not gate_pupil(sample):
            self.rejected += 1
            return None, None
        if self._collector is not None:
            self._collector.add(sample)
        d_lp = self.lowpass.push(sample.stamp.host_ns, sample.diameter_mm)
        if self.baseline is None:
            return None, None
        out = FilteredPupilSample(sample.stamp, d_lp, d_lp - self.baseline.median_mm)
        return out, self.window.push(out)
