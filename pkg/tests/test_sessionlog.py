import time

import pytest

from gazefuse.errors import CorruptLog, IoError
from gazefuse.protocol import SessionMeta
from gazefuse.sessionlog import SessionLogWriter, read_log, replay
from gazefuse.synth import SynthConfig, synthesize_session
from gazefuse.wire import WireRecord, encode_record

META = SessionMeta("s1", "p1", expertise_hours=5.0)


def _records(n=50):
    return [WireRecord("/humans/bodies/p1/ecg_raw", 1 + i * 10_000_000, {"mv": i * 0.1}) for i in range(n)]


def _write_log(path, records, meta=META):
    w = SessionLogWriter(path, meta)
    for r in records:
        w.append(r)
    w.close()


def test_sequences_count_from_zero(tmp_path):
    w = SessionLogWriter(tmp_path / "a.gflog", META)
    assert w.append(_records(1)[0]) == 0
    assert w.append(_records(2)[1]) == 1
    w.close()


def test_append_after_close_errors(tmp_path):
    w = SessionLogWriter(tmp_path / "a.gflog", META)
    w.append(_records(1)[0])
    w.close()
    with pytest.raises(IoError):
        w.append(_records(1)[0])


def test_existing_file_not_overwritten(tmp_path):
    path = tmp_path / "a.gflog"
    path.write_text("precious data")
    with pytest.raises(IoError):
        SessionLogWriter(path, META)


def test_round_trip_bytes_exact(tmp_path):
    path = tmp_path / "a.gflog"
    records = _records(200)
    _write_log(path, records)
    log = read_log(path)
    assert log.corrupt is None
    assert log.meta.session_id == "s1"
    assert [encode_record(r) for r in log.records] == [encode_record(r) for r in records]
    assert log.raw_lines == [encode_record(r)[:-1] for r in records]


def test_many_appends_no_gaps(tmp_path):
    path = tmp_path / "a.gflog"
    records = _records(5000)
    w = SessionLogWriter(path, META)
    seqs = [w.append(r) for r in records]
    w.close()
    assert seqs == list(range(5000))
    assert len(read_log(path).records) == 5000


def test_truncated_final_line_recovers_prefix(tmp_path):
    path = tmp_path / "a.gflog"
    _write_log(path, _records(20))
    data = path.read_bytes()
    path.write_bytes(data[:-7])  # chop mid-record
    log = read_log(path)
    assert log.corrupt is not None
    assert log.corrupt.last_good_seq == 18
    assert len(log.records) == 19
    with pytest.raises(CorruptLog):
        read_log(path, strict=True)


def test_sequence_gap_detected(tmp_path):
    path = tmp_path / "a.gflog"
    _write_log(path, _records(5))
    lines = path.read_bytes().splitlines(keepends=True)
    del lines[3]  # remove seq 2
    path.write_bytes(b"".join(lines))
    log = read_log(path)
    assert log.corrupt is not None
    assert log.corrupt.last_good_seq == 1


def test_bad_header_is_corrupt(tmp_path):
    path = tmp_path / "a.gflog"
    path.write_text("not json\n")
    with pytest.raises(CorruptLog):
        read_log(path)


def test_replay_as_fast_as_possible_is_stable(tmp_path):
    path = tmp_path / "a.gflog"
    records, _ = synthesize_session(SynthConfig(seed=0, duration_s=2.0))
    _write_log(path, records)
    a = [encode_record(r) for r in replay(path)]
    b = [encode_record(r) for r in replay(path)]
    assert a == b == [encode_record(r) for r in records]


def test_replay_paced_duration(tmp_path):
    path = tmp_path / "a.gflog"
    # 30 s of data replayed at 10x should take ~3 s of wall clock.
    records, _ = synthesize_session(
        SynthConfig(seed=1, duration_s=30.0, gaze_rate_hz=20, pupil_rate_hz=0.5,
                    ecg_rate_hz=130/60, detection_rate_hz=1)
    )
    _write_log(path, records)
    span_s = (records[-1].host_ns - records[0].host_ns) / 1e9
    t0 = time.monotonic()
    n = sum(1 for _ in replay(path, speed_factor=10.0))
    took = time.monotonic() - t0
    assert n == len(records)
    expected = span_s / 10.0
    assert took == pytest.approx(expected, rel=0.02, abs=0.05)


def test_replay_rejects_bad_speed(tmp_path):
    path = tmp_path / "a.gflog"
    _write_log(path, _records(2))
    with pytest.raises(ValueError):
        list(replay(path, speed_factor=0.0))
