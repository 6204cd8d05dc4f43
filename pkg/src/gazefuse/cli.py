"""Command-line surface: simulate, record, replay, analyze."""

from __future__ import annotations

import json
import socket
import sys
import time
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import analysis as analysis_mod
from .console import ConsoleContext, create_app
from .engine import EngineConfig
from .gateway import DEFAULT_PORT, parse_listen_addr, start_ingest_server
from .live import LiveSession
from .protocol import SessionMeta
from .sessionlog import read_log, replay as replay_records
from .synth import SynthConfig, synthesize_session
from .wire import encode_record


def _load_config_file(path: Path) -> dict:
    data = path.read_bytes()
    if path.suffix == ".json":
        return json.loads(data)
    return tomllib.loads(data.decode("utf-8"))


def _synth_config(d: dict) -> SynthConfig:
    if "scripted_targets" in d:
        d = dict(d, scripted_targets=tuple(
            (float(s), float(e), c) for s, e, c in d["scripted_targets"]
        ))
    return SynthConfig(**d)


@click.group()
def main():
    """Stream fusion toolkit for teleoperation study sessions."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_spec", required=True, help="output file, '-' for stdout, or host:port")
def simulate(config_path: Path, out_spec: str):
    """Emit a deterministic synthetic session as wire lines."""
    cfg = _synth_config(_load_config_file(config_path))
    records, manifest = synthesize_session(cfg)
    payload = b"".join(encode_record(r) for r in records)
    if out_spec == "-":
        sys.stdout.buffer.write(payload)
    elif ":" in out_spec and not Path(out_spec).parent.exists():
        with socket.create_connection(parse_listen_addr(out_spec)) as sock:
            sock.sendall(payload)
    else:
        Path(out_spec).write_bytes(payload)
        manifest_path = Path(out_spec).with_suffix(".manifest.json")
        manifest_path.write_text(
            json.dumps(
                {
                    "r_peaks_ns": manifest.r_peaks_ns,
                    "targets_ns": manifest.targets_ns,
                    "pupil_mean_mm": manifest.pupil_mean_mm,
                },
                indent=2,
            )
        )
    click.echo(f"emitted {len(records)} records", err=True)


@main.command()
@click.option("--session", "meta_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--listen", default=f"127.0.0.1:{DEFAULT_PORT}", show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--http", "http_addr", default="127.0.0.1:7451", show_default=True,
              help="console gateway bind address")
def record(meta_path: Path, listen: str, out_dir: Path, http_addr: str):
    """Record a live session: ingest gateway + protocol + console gateway."""
    import uvicorn

    meta = SessionMeta.from_dict(_load_config_file(meta_path))
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"{meta.session_id}.gflog"

    ctx = ConsoleContext(log_dir=out_dir)
    session = LiveSession(
        meta,
        log_path,
        engine_config=EngineConfig(retain=False),
        derived_tap=ctx.tap_derived,
        state_tap=ctx.tap_state,
    )
    ctx.session = session
    session.start()
    ingest = start_ingest_server(*parse_listen_addr(listen), session.submit)
    click.echo(f"ingest on {listen}, log at {log_path}", err=True)

    host, port = parse_listen_addr(http_addr)
    app = create_app(ctx)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        ingest.shutdown()
        session.close()
        click.echo(f"recorded {session.writer.count} records", err=True)


@main.command()
@click.argument("log_path", type=click.Path(exists=True, path_type=Path))
@click.option("--speed", default="max", show_default=True, help="factor or 'max'")
@click.option("--emit", "emit_addr", default=None, help="host:port to send to (default stdout)")
def replay(log_path: Path, speed: str, emit_addr: str | None):
    """Re-emit a recorded log at a chosen speed."""
    factor = None if speed == "max" else float(speed)
    log = read_log(log_path)
    if log.corrupt is not None:
        click.echo(f"warning: {log.corrupt} (replaying intact prefix)", err=True)

    def emit_all(write):
        t0 = time.monotonic()
        n = 0
        for rec in replay_records(log, factor):
            write(encode_record(rec))
            n += 1
        click.echo(f"replayed {n} records in {time.monotonic() - t0:.2f}s", err=True)

    if emit_addr is None:
        emit_all(sys.stdout.buffer.write)
    else:
        with socket.create_connection(parse_listen_addr(emit_addr)) as sock:
            emit_all(sock.sendall)


@main.command()
@click.argument("logs", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--tasks", default="1,2,3,4,5", show_default=True)
@click.option("--expert-threshold-hours", default=15.0, show_default=True)
def analyze(logs: tuple[Path, ...], out_dir: Path, tasks: str, expert_threshold_hours: float):
    """Export per-task metrics, group summaries and heatmaps from logs."""
    task_tuple = tuple(int(t) for t in tasks.split(","))
    analyses = []
    for path in logs:
        log = read_log(path)
        if log.corrupt is not None:
            click.echo(f"warning: {path}: {log.corrupt}", err=True)
        analyses.append(
            analysis_mod.analyze_log(
                log, tasks=task_tuple, expert_threshold_hours=expert_threshold_hours
            )
        )
    written = analysis_mod.export(analyses, out_dir)
    for p in written:
        click.echo(str(p))


if __name__ == "__main__":
    main()
