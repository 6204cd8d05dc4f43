import math

import numpy as np
import pytest

from gazefuse.errors import BadRate, BaselineEmpty, BaselineTooShort, NoBaseline
from gazefuse.model import PupilSample, Stamp
from gazefuse.pupil import (
    BaselineAccumulator,
    PupilProcessor,
    StreamingLowpass,
    WindowStatsAccumulator,
    baseline_median,
    filter_pupil,
    gate_pupil,
    lowpass_pupil,
    pupil_window_stats,
)

from oracles import (
    butter2_lowpass_coeffs,
    mean_direct,
    steady_amplitude_ratio,
    variance_direct,
)

NS = 1_000_000_000


def _pupil(t_s, d, eye="mean"):
    return PupilSample(Stamp(int(t_s * NS) + 1), d, eye)


def _series(values, rate=100.0, start_s=0.0):
    return [_pupil(start_s + i / rate, v) for i, v in enumerate(values)]


class TestGate:
    def test_midrange_accepted(self):
        assert gate_pupil(_pupil(0, 3.5))

    @pytest.mark.parametrize("d", [0.9, 9.5, 0.0, 20.0])
    def test_outliers_rejected(self, d):
        assert not gate_pupil(_pupil(0, d))

    @pytest.mark.parametrize("d", [1.0, 9.0])
    def test_bounds_are_strict(self, d):
        assert not gate_pupil(_pupil(0, d))

    def test_just_inside_accepted(self):
        assert gate_pupil(_pupil(0, 1.0000001))
        assert gate_pupil(_pupil(0, 8.9999999))


class TestLowpass:
    def test_rejects_rate_below_nyquist(self):
        with pytest.raises(BadRate):
            StreamingLowpass(7.9)

    def test_dc_gain_unity(self):
        out = [v for _, v in lowpass_pupil(_series([3.0] * 300), 100.0)]
        assert abs(out[-1] - 3.0) < 1e-6
        # Steady-state priming makes constant input exact from the start.
        assert abs(out[0] - 3.0) < 1e-9

    def test_passband_edge_matches_reference_simulation(self):
        # Oracle: hand-derived bilinear coefficients + literal recurrence.
        b, a = butter2_lowpass_coeffs(4.0, 100.0)
        expected = steady_amplitude_ratio(b, a, 4.0, 100.0)
        assert expected == pytest.approx(1 / math.sqrt(2), abs=0.02)

        lp = StreamingLowpass(100.0)
        xs = [math.sin(2 * math.pi * 4.0 * i / 100.0) for i in range(600)]
        ys = [lp.push(i * NS // 100 + 1, x) for i, x in enumerate(xs)]
        got = max(abs(v) for v in ys[300:])
        assert got == pytest.approx(expected, abs=0.05)
        assert got == pytest.approx(1 / math.sqrt(2), abs=0.05)

    def test_stopband_matches_reference_simulation(self):
        b, a = butter2_lowpass_coeffs(4.0, 100.0)
        expected = steady_amplitude_ratio(b, a, 10.0, 100.0)
        lp = StreamingLowpass(100.0)
        xs = [math.sin(2 * math.pi * 10.0 * i / 100.0) for i in range(600)]
        ys = [lp.push(i * NS // 100 + 1, x) for i, x in enumerate(xs)]
        got = max(abs(v) for v in ys[300:])
        assert got < 0.2
        assert got == pytest.approx(expected, abs=0.03)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        xs = rng.normal(3.0, 0.2, 400)
        ys = rng.normal(4.0, 0.3, 400)
        a_coef, b_coef = 1.7, -0.4

        def run(values):
            lp = StreamingLowpass(100.0)
            return np.array([lp.push(i * NS // 100 + 1, v) for i, v in enumerate(values)])

        combined = run(a_coef * xs + b_coef * ys)
        split = a_coef * run(xs) + b_coef * run(ys)
        assert np.max(np.abs(combined - split)) < 1e-9

    def test_gap_resets_state(self):
        lp = StreamingLowpass(100.0)
        for i in range(100):
            lp.push(i * NS // 100 + 1, 5.0)
        # After a 0.6 s silence the filter re-primes on the new level.
        y = lp.push(int(1.6 * NS) + 1, 2.0)
        assert abs(y - 2.0) < 1e-9

    def test_no_reset_within_half_second(self):
        lp = StreamingLowpass(100.0)
        for i in range(100):
            lp.push(i * NS // 100 + 1, 5.0)
        y = lp.push(int(1.3 * NS) + 1, 2.0)
        assert abs(y - 5.0) < 1.0  # still dominated by the old state
        assert abs(y - 2.0) > 1.0


class TestBaseline:
    def test_odd_count_median(self):
        samples = [_pupil(0, 3.0), _pupil(15, 3.2), _pupil(31, 3.1)]
        assert baseline_median(samples).median_mm == pytest.approx(3.1)

    def test_gated_sample_excluded_from_median(self):
        samples = [_pupil(0, 3.0), _pupil(15, 3.2), _pupil(30.5, 3.1), _pupil(31, 9.9)]
        b = baseline_median(samples)
        # Oracle: sort-and-pick over the three survivors.
        assert b.median_mm == pytest.approx(sorted([3.0, 3.2, 3.1])[1])
        assert b.n_samples == 3

    def test_short_baseline_rejected(self):
        samples = _series([3.0] * 2000)  # 20 s at 100 Hz
        with pytest.raises(BaselineTooShort):
            baseline_median(samples)

    def test_empty_baseline_rejected(self):
        with pytest.raises(BaselineEmpty):
            BaselineAccumulator().finalize()
        all_gated = [_pupil(0, 0.5), _pupil(31, 9.5)]
        with pytest.raises(BaselineEmpty):
            baseline_median(all_gated)


class TestFilterPupil:
    def test_subtraction_examples(self):
        base = baseline_median(_series([3.1] * 3101))
        stamps = [(Stamp(1), 3.4), (Stamp(2), 3.1)]
        out = list(filter_pupil(stamps, base))
        assert out[0].d_filtered_mm == pytest.approx(0.3)
        assert out[1].d_filtered_mm == 0.0

    def test_requires_baseline(self):
        with pytest.raises(NoBaseline):
            list(filter_pupil([(Stamp(1), 3.0)], None))

    def test_exact_relation_holds_per_sample(self):
        base = baseline_median(_series([3.1, 3.0, 3.2] * 1100))
        rng = np.random.default_rng(5)
        lp_stream = [(Stamp(i + 1), float(v)) for i, v in enumerate(rng.normal(3.5, 0.5, 500))]
        for f in filter_pupil(lp_stream, base):
            assert f.d_filtered_mm == f.d_lp_mm - base.median_mm  # exact float equality

    def test_common_shift_cancels(self):
        rng = np.random.default_rng(11)
        raw = rng.uniform(2.5, 4.5, 3200)
        shift = 1.25

        def chain(values):
            gated = _series(list(values))
            base = baseline_median(gated[:3100])
            return [f.d_filtered_mm for f in filter_pupil(lowpass_pupil(gated, 100.0), base)]

        plain = chain(raw)
        shifted = chain(raw + shift)
        assert np.max(np.abs(np.array(plain) - np.array(shifted))) < 1e-9


class TestWindowStats:
    def test_constant_window(self):
        from gazefuse.pupil import FilteredPupilSample

        acc = WindowStatsAccumulator()
        last = None
        for i in range(120):
            last = acc.push(FilteredPupilSample(Stamp(i * NS // 100 + 1), 0.0, 0.3))
        assert last.mean_mm == pytest.approx(0.3)
        assert last.variance_mm2 == pytest.approx(0.0, abs=1e-12)
        assert last.n == 100  # trailing 1 s at 100 Hz

    def test_alternating_values_population_variance(self):
        from gazefuse.pupil import FilteredPupilSample

        stream = [
            FilteredPupilSample(Stamp(i * NS // 100 + 1), 0.0, 0.1 if i % 2 == 0 else -0.1)
            for i in range(100)
        ]
        stats = list(pupil_window_stats(stream))[-1]
        assert stats.mean_mm == pytest.approx(0.0, abs=1e-12)
        assert stats.variance_mm2 == pytest.approx(0.01)

    def test_single_sample_window(self):
        from gazefuse.pupil import FilteredPupilSample

        stats = list(pupil_window_stats([FilteredPupilSample(Stamp(1), 0.0, 0.5)]))
        assert stats[0].n == 1
        assert stats[0].variance_mm2 == 0.0

    def test_matches_brute_force_recomputation(self):
        from gazefuse.pupil import FilteredPupilSample

        rng = np.random.default_rng(17)
        times = np.cumsum(rng.integers(5_000_000, 15_000_000, 300)) + 1
        values = rng.normal(0.0, 0.2, 300)
        stream = [
            FilteredPupilSample(Stamp(int(t)), 0.0, float(v))
            for t, v in zip(times, values)
        ]
        window_ns = int(1e9)
        for i, stats in enumerate(pupil_window_stats(iter(stream))):
            t_end = stream[i].stamp.host_ns
            in_window = [
                s.d_filtered_mm
                for s in stream[: i + 1]
                if t_end - window_ns < s.stamp.host_ns <= t_end
            ]
            assert stats.n == len(in_window)
            assert stats.mean_mm == pytest.approx(mean_direct(in_window), rel=1e-9, abs=1e-12)
            assert stats.variance_mm2 == pytest.approx(
                variance_direct(in_window), rel=1e-9, abs=1e-12
            )


class TestProcessor:
    def test_full_chain_with_baseline_phase(self):
        proc = PupilProcessor(100.0)
        proc.begin_baseline()
        t = 0.0
        for i in range(3200):
            proc.process(_pupil(t, 3.0))
            t += 0.01
        baseline = proc.end_baseline()
        assert baseline.median_mm == pytest.approx(3.0)
        filtered, stats = proc.process(_pupil(t, 3.0))
        assert filtered is not None
        assert filtered.d_filtered_mm == filtered.d_lp_mm - baseline.median_mm
        assert stats.n >= 1

    def test_no_output_before_baseline(self):
        proc = PupilProcessor(100.0)
        filtered, stats = proc.process(_pupil(0, 3.0))
        assert filtered is None and stats is None

    def test_rejected_samples_counted(self):
        proc = PupilProcessor(100.0)
        proc.process(_pupil(0, 0.5))
        proc.process(_pupil(0.01, 9.5))
        assert proc.rejected == 2
