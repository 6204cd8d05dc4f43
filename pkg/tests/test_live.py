import time

import pytest

from gazefuse.engine import EngineConfig, SessionEngine
from gazefuse.gateway import parse_listen_addr, send_lines, start_ingest_server
from gazefuse.live import LiveSession
from gazefuse.protocol import SessionMeta
from gazefuse.sessionlog import read_log
from gazefuse.synth import SynthConfig, synthesize_session
from gazefuse.wire import decode_record, encode_record

META = SessionMeta("live1", "p1", expertise_hours=2.0)


def test_parse_listen_addr():
    assert parse_listen_addr("127.0.0.1:7450") == ("127.0.0.1", 7450)
    assert parse_listen_addr(":9000") == ("127.0.0.1", 9000)
    assert parse_listen_addr("9000") == ("127.0.0.1", 9000)


def test_gateway_rejects_garbage_and_counts(tmp_path):
    got = []
    server = start_ingest_server("127.0.0.1", 0, got.append)
    try:
        lines = [
            b'{"topic":"/humans/bodies/p1/ecg_raw","host_ns":1,"payload":{"mv":0.1}}',
            b"not json at all",
            b'{"topic":"/nowhere","host_ns":2,"payload":{}}',
            b'{"topic":"/humans/bodies/p1/ecg_raw","host_ns":3,"payload":{"mv":0.2}}',
        ]
        send_lines(("127.0.0.1", server.port), lines)
        deadline = time.monotonic() + 5
        while len(got) < 2 and time.monotonic() < deadline:
            time.sleep(0.01)
        assert [r.host_ns for r in got] == [1, 3]
        assert server.stats.rejected == 2
    finally:
        server.shutdown()


def test_live_session_over_tcp_matches_offline_engine(tmp_path):
    records, _ = synthesize_session(SynthConfig(seed=2, duration_s=4.0))
    derived_live = []
    session = LiveSession(
        META,
        tmp_path / "live.gflog",
        engine_config=EngineConfig(retain=False),
        derived_tap=lambda r: derived_live.append(encode_record(r)),
    )
    session.start()
    server = start_ingest_server("127.0.0.1", 0, session.submit)
    try:
        send_lines(("127.0.0.1", server.port), [encode_record(r) for r in records])
        deadline = time.monotonic() + 10
        while session.writer.count < len(records) and time.monotonic() < deadline:
            time.sleep(0.02)
    finally:
        server.shutdown()
        session.close()

    log = read_log(tmp_path / "live.gflog", strict=True)
    assert len(log.records) == len(records)  # zero raw-sample loss
    assert [encode_record(r) for r in log.records] == [encode_record(r) for r in records]

    offline = SessionEngine(EngineConfig(retain=False))
    derived_offline = [encode_record(r) for r in offline.run(log.records)]
    assert derived_live == derived_offline


def test_commands_append_event_records(tmp_path):
    session = LiveSession(META, tmp_path / "cmd.gflog", clock_ns=time.time_ns)
    session.start()
    t0 = 10**15
    session.command("start_baseline", now_ns=t0)
    session.command("start_fixation", now_ns=t0 + 31 * 10**9)
    state = session.state()
    assert state["phase"] == "luminance_fixation"
    assert state["fixation_target"] == "controller"
    session.keypoint("note", "check harness", now_ns=t0 + 32 * 10**9)
    session.close()
    log = read_log(tmp_path / "cmd.gflog", strict=True)
    texts = [r.payload["text"] for r in log.records if r.channel.value == "event"]
    assert texts == ["baseline:begin", "baseline:end", "fixation:controller:begin",
                     "check harness"]


def test_crash_keypoint_drives_state_machine(tmp_path):
    session = LiveSession(META, tmp_path / "crash.gflog")
    session.start()
    t0 = 10**15
    session.command("start_baseline", now_ns=t0)
    session.command("start_fixation", now_ns=t0 + 31 * 10**9)
    # complete fixations via an explicit tick through command timing
    session.command("start_task", now_ns=t0 + 31 * 10**9 + 41 * 10**9)
    assert session.state()["phase"] == "task"
    session.keypoint("crash", "rotor strike", now_ns=t0 + 80 * 10**9)
    assert session.state()["phase"] == "paused_crash"
    session.command("resume_restart", now_ns=t0 + 85 * 10**9)
    assert session.state()["phase"] == "task"
    assert session.state()["attempt"] == 2
    session.close()


def test_illegal_command_does_not_log(tmp_path):
    from gazefuse.errors import IllegalTransition

    session = LiveSession(META, tmp_path / "ill.gflog")
    session.start()
    with pytest.raises(IllegalTransition):
        session.command("start_task", now_ns=10**15)
    session.close()
    log = read_log(tmp_path / "ill.gflog", strict=True)
    assert log.records == []


def test_late_records_dropped_and_counted(tmp_path):
    session = LiveSession(META, tmp_path / "late.gflog")
    session.start()
    for ns in (100, 300, 200, 400):
        session.submit(decode_record(
            b'{"topic":"/humans/bodies/p1/ecg_raw","host_ns":%d,"payload":{"mv":0.1}}' % ns
        ))
    session.close()
    log = read_log(tmp_path / "late.gflog", strict=True)
    assert [r.host_ns for r in log.records] == [100, 300, 400]
    assert session.normalizer.stats.dropped_late == 1
