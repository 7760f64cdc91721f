"""Operator command line: validate, serve, headless simulate, replay.

Exit codes: 0 ok, 1 runtime invariant violation, 2 validation failure,
3 environment failure. All commands are non-interactive.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
from pathlib import Path

from .scenario import (
    ScenarioError,
    builtin_pack_path,
    parse_scenario,
    validate_scenario,
)
from .session import RecordError, collect_metrics, load_record
from .simulate import ScriptError, builtin_script_path, load_script, run_simulation

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_VALIDATION = 2
EXIT_ENVIRONMENT = 3


def _load_validated(path: Path):
    """Returns (pack, report) or raises ScenarioError for unparseable docs."""
    pack = parse_scenario(path)
    return pack, validate_scenario(pack)


def _print_report(report) -> None:
    for finding in report.findings:
        print(f"  [{finding.severity}] {finding.path}: {finding.message} ({finding.code})")


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        pack, report = _load_validated(args.scenario)
    except ScenarioError as exc:
        print(f"scenario failed to parse: {exc}")
        return EXIT_VALIDATION
    print(f"scenario {args.scenario}: version {pack.version}, {len(pack.scenes)} scene(s), {len(pack.clips)} clip(s)")
    _print_report(report)
    if report.errors:
        print(f"{len(report.errors)} error(s), {len(report.warnings)} warning(s)")
        return EXIT_VALIDATION
    print(f"ok ({len(report.warnings)} warning(s))")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        pack, report = _load_validated(args.scenario)
    except ScenarioError as exc:
        print(f"scenario failed to parse: {exc}")
        return EXIT_VALIDATION
    if report.errors:
        print("scenario is invalid:")
        _print_report(report)
        return EXIT_VALIDATION

    data_dir = Path(args.data_dir)
    try:
        data_dir.mkdir(parents=True, exist_ok=True)
        probe = data_dir / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        print(f"data dir {data_dir} is not writable: {exc}")
        return EXIT_ENVIRONMENT

    try:
        probe_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe_sock.bind((args.host, args.port))
        probe_sock.close()
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}")
        return EXIT_ENVIRONMENT

    ui_dir = args.ui_dir
    if ui_dir is not None and not (ui_dir / "index.html").exists():
        print(f"ui dir {ui_dir} has no index.html (build the frontend first)")
        return EXIT_ENVIRONMENT
    if ui_dir is None and Path("frontend/index.html").exists():
        ui_dir = Path("frontend")

    for scene in pack.scenes:
        print(
            f"scene {scene.id!r}: {len(scene.trigger_rules)} trigger rule(s), "
            f"{len(scene.scripted_intents)} intent(s), fallback clip {scene.fallback_clip_id!r}"
        )
    print(f"serving scenario {pack.version} on ws://{args.host}:{args.port}/ws (data dir: {data_dir})")
    if ui_dir is not None:
        print(f"browser client at http://{args.host}:{args.port}/ (from {ui_dir})")

    from .server import create_app  # deferred: uvicorn/fastapi only needed here
    import uvicorn

    app = create_app(pack, data_dir=data_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        pack, report = _load_validated(args.scenario)
    except ScenarioError as exc:
        print(f"scenario failed to parse: {exc}")
        return EXIT_VALIDATION
    if report.errors:
        print("scenario is invalid:")
        _print_report(report)
        return EXIT_VALIDATION
    try:
        script = load_script(args.script)
    except (ScriptError, ScenarioError) as exc:
        print(f"script failed to parse: {exc}")
        return EXIT_VALIDATION
    if args.seed is not None:
        script = type(script)(seed=args.seed, turns=script.turns)

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"output dir {out_dir} is not writable: {exc}")
        return EXIT_ENVIRONMENT

    result = run_simulation(pack, script, out_dir=out_dir)
    metrics = result.metrics
    wall = sorted(result.turn_wall_ms)
    p95 = wall[max(0, -(-len(wall) * 95 // 100) - 1)] if wall else 0.0
    print(f"turns: {metrics.turns}, discarded inputs: {metrics.discarded_inputs or 0}")
    print(f"desync max: {metrics.desync_ms['max']} ms, repetition incidents: {metrics.repetition_incidents}")
    print(f"wall per turn p95: {p95:.2f} ms")
    print(f"transcript: {result.transcript_path}")
    print(f"metrics: {result.metrics_path}")
    if result.violations:
        for violation in result.violations:
            print(f"INVARIANT VIOLATION: {violation}")
        return EXIT_INVARIANT
    return EXIT_OK


def _parse_annotations(items) -> dict[str, int]:
    out: dict[str, int] = {}
    for item in items or []:
        turn, _, severity = item.partition("=")
        if not turn or not severity:
            raise ValueError(f"annotation must look like TURN=SEVERITY, got {item!r}")
        value = int(severity)
        if not 1 <= value <= 4:
            raise ValueError(f"severity must be 1..4, got {value}")
        out[turn] = value
    return out


def cmd_replay(args: argparse.Namespace) -> int:
    record_path = Path(args.record)
    try:
        record = load_record(record_path)
    except (OSError, RecordError) as exc:
        print(f"cannot replay: {exc}")
        return EXIT_VALIDATION

    annotations_path = record_path.with_suffix(record_path.suffix + ".annotations.json")
    annotations: dict[str, int] = {}
    if annotations_path.exists():
        annotations.update(json.loads(annotations_path.read_text(encoding="utf-8")))
    try:
        new_annotations = _parse_annotations(args.annotate)
    except ValueError as exc:
        print(str(exc))
        return EXIT_VALIDATION
    if new_annotations:
        annotations.update(new_annotations)
        annotations_path.write_text(json.dumps(annotations, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"annotations saved to {annotations_path}")

    print(f"session {record.session_id} (scenario {record.scenario_version}, seed {record.seed})")
    print(f"scenes: {' -> '.join(record.scene_history)}")
    for entry in record.entries:
        if entry.role:
            prefix = f"[turn {entry.turn_id:>3}] {entry.speaker} ({entry.role})"
        else:
            prefix = f"[turn {entry.turn_id:>3}] {entry.speaker}"
        line = f"{prefix}: {entry.text}"
        details = []
        if entry.clip_id:
            details.append(f"clip={entry.clip_id}")
        if entry.latency_ms is not None:
            details.append(f"latency={entry.latency_ms}ms")
        if entry.desync_ms is not None:
            details.append(f"desync={entry.desync_ms}ms")
        severity = annotations.get(str(entry.turn_id))
        if severity is not None and entry.speaker != "Healthcare Provider":
            details.append(f"severity={severity}")
        if details:
            line += f"  ({', '.join(details)})"
        print(line)

    metrics = collect_metrics(record, annotations)
    print("recomputed metrics:")
    print(json.dumps(metrics.to_dict(), indent=2, ensure_ascii=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aims", description="Virtual patient interview service")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario pack and print findings")
    p.add_argument("--scenario", type=Path, default=builtin_pack_path(), help="scenario pack path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="host sessions over the websocket protocol")
    p.add_argument("--scenario", type=Path, default=builtin_pack_path())
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--data-dir", type=Path, default=Path("data"), help="per-session transcript store")
    p.add_argument("--ui-dir", type=Path, default=None, help="serve the browser client from this directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a scripted interview headlessly")
    p.add_argument("--scenario", type=Path, default=builtin_pack_path())
    p.add_argument("--script", type=Path, default=builtin_script_path(), help="simulation script path")
    p.add_argument("--seed", type=int, default=None, help="override the script seed")
    p.add_argument("--out", type=Path, default=Path("sim-out"), help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="print a stored session and recompute its metrics")
    p.add_argument("record", type=Path, help="transcript.jsonl path")
    p.add_argument(
        "--annotate",
        action="append",
        metavar="TURN=SEVERITY",
        help="attach a severity rating (1 cosmetic .. 4 catastrophic) to a turn",
    )
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
