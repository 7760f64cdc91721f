"""Headless simulation: drive a full session from a script, deterministically.

Scripts mirror the wire protocol — each turn expands into the same
gate_open / audio_chunk / gate_close (or text_input) sequence a client would
send, plus optional out-of-gate noise injections — so they double as protocol
conformance fixtures. With the scripted responder, the echo transcriber, and
a fake clock, the same seed always produces byte-identical transcripts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Optional, Union

import yaml

from .dialogue import EchoTranscriber, Phase
from .responder import ScriptedResponder
from .scenario import ScenarioPack, canonical_role
from .session import (
    JsonlSink,
    MetricsReport,
    Session,
    SessionConfig,
    SessionEvent,
    collect_metrics,
)


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class ScriptTurn:
    role: str
    text: str
    mode: str = "voice"  # "voice" | "text"
    scene: Optional[str] = None  # switch before this turn
    noise_before: int = 0  # chunks injected before the gate opens
    noise_after: int = 0  # chunks injected after the gate closes
    stale_chunks: int = 0  # chunks tagged with the previous turn id while listening


@dataclass(frozen=True)
class SimulationScript:
    seed: int
    turns: tuple[ScriptTurn, ...]


def load_script(source: Union[str, Path, IO[str]]) -> SimulationScript:
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        text = str(source)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScriptError(f"script is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScriptError("script must be a mapping with 'seed' and 'turns'")
    turns = []
    raw_turns = doc.get("turns") or []
    if not raw_turns:
        raise ScriptError("script needs at least one turn")
    for i, item in enumerate(raw_turns):
        if not isinstance(item, dict) or "text" not in item or "role" not in item:
            raise ScriptError(f"turns[{i}]: each turn needs 'role' and 'text'")
        mode = str(item.get("mode", "voice"))
        if mode not in ("voice", "text"):
            raise ScriptError(f"turns[{i}]: mode must be voice or text, got {mode!r}")
        turns.append(
            ScriptTurn(
                role=canonical_role(str(item["role"])),
                text=str(item["text"]),
                mode=mode,
                scene=item.get("scene"),
                noise_before=int(item.get("noise_before", 0)),
                noise_after=int(item.get("noise_after", 0)),
                stale_chunks=int(item.get("stale_chunks", 0)),
            )
        )
    return SimulationScript(seed=int(doc.get("seed", 0)), turns=tuple(turns))


def builtin_script_path(name: str = "team_interview") -> Path:
    return Path(__file__).parent / "packs" / f"{name}.yaml"


class FakeClock:
    """Deterministic session clock; the simulator advances it explicitly."""

    def __init__(self, start_ms: int = 0):
        self.now = start_ms

    def __call__(self) -> int:
        return self.now

    def advance(self, ms: int) -> None:
        self.now += ms


class _GuardedResponder:
    """Wraps the responder to assert barge-in ordering: every invocation must
    happen after gate close, in the generating phase."""

    def __init__(self, inner, session_ref: dict, violations: list[str]):
        self._inner = inner
        self._session_ref = session_ref
        self._violations = violations
        self.calls = 0
        self.default_budget_ms = getattr(inner, "default_budget_ms", 15000)

    def respond(self, ctx, utterance):
        self._check("respond")
        self.calls += 1
        return self._inner.respond(ctx, utterance)

    def regenerate(self, ctx, utterance, directive):
        self._check("regenerate")
        return self._inner.regenerate(ctx, utterance, directive)

    def _check(self, what: str) -> None:
        session = self._session_ref.get("session")
        if session is None:
            return
        if session.state.gate_open:
            self._violations.append(f"{what} invoked while the gate was open")
        if session.state.phase is not Phase.GENERATING:
            self._violations.append(f"{what} invoked in phase {session.state.phase.value}")


def _chunk_payloads(text: str, size: int = 12) -> list[bytes]:
    data = text.encode("utf-8")
    return [data[i : i + size] for i in range(0, len(data), size)] or [b""]


@dataclass
class SimulationResult:
    session: Session
    metrics: MetricsReport
    events: list[SessionEvent]
    turn_wall_ms: list[float]
    violations: list[str]
    transcript_path: Optional[Path] = None
    metrics_path: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return not self.violations


def run_simulation(
    pack: ScenarioPack,
    script: SimulationScript,
    *,
    out_dir: Optional[Path] = None,
    config: Optional[SessionConfig] = None,
    responder=None,
) -> SimulationResult:
    """Run the whole pipeline offline and check its invariants as it goes."""
    clock = FakeClock()
    sink = None
    transcript_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        transcript_path = out_dir / "transcript.jsonl"
        transcript_path.unlink(missing_ok=True)
        sink = JsonlSink(transcript_path)

    violations: list[str] = []
    session_ref: dict = {}
    guarded = _GuardedResponder(responder or ScriptedResponder(pack), session_ref, violations)
    config = config or SessionConfig()

    session = Session(
        pack,
        guarded,
        role=script.turns[0].role,
        transcriber=EchoTranscriber(),
        seed=script.seed,
        session_id=f"sim-{script.seed:08d}",
        clock=clock,
        sink=sink,
        config=config,
    )
    session_ref["session"] = session

    all_events: list[SessionEvent] = []
    turn_wall: list[float] = []

    def run(events: list[SessionEvent]) -> list[SessionEvent]:
        all_events.extend(events)
        for event in events:
            if event.type == "patient_response":
                desync = abs(event.data["play_duration_ms"] - event.data["audio_duration_ms"])
                if desync > config.desync_tolerance_ms:
                    violations.append(f"desync {desync} ms exceeds {config.desync_tolerance_ms} ms")
            if event.type == "error" and event.data.get("code") in ("responder", "turn_budget"):
                violations.append(f"turn failed: {event.data}")
        return events

    expected_responder_calls = 0
    for turn in script.turns:
        clock.advance(1000)
        if turn.scene:
            run(session.switch_scene(turn.scene))
        session.set_role(turn.role)

        if turn.mode == "text":
            for _ in range(turn.noise_before):
                run(session.audio_chunk(b"facilitator chatter"))
            wall0 = time.perf_counter()
            run(session.text_input(turn.text))
            turn_wall.append((time.perf_counter() - wall0) * 1000.0)
        else:
            for _ in range(turn.noise_before):
                run(session.audio_chunk(b"facilitator chatter"))
            run(session.gate_open())
            for _ in range(turn.stale_chunks):
                run(session.audio_chunk(b"straggler", turn_id=session.state.turn_id - 1))
            for payload in _chunk_payloads(turn.text):
                clock.advance(50)
                run(session.audio_chunk(payload, turn_id=session.state.turn_id))
            clock.advance(100)
            wall0 = time.perf_counter()
            run(session.gate_close())
            turn_wall.append((time.perf_counter() - wall0) * 1000.0)

        if turn.text.strip():
            expected_responder_calls += 1
        if session.state.phase is Phase.SPEAKING:
            play = session.last_plan.play_duration_ms if session.last_plan else 0
            for _ in range(turn.noise_after):
                run(session.audio_chunk(b"facilitator chatter"))
            clock.advance(play)
            run(session.speaking_done())

    if guarded.calls != expected_responder_calls:
        violations.append(
            f"responder invoked {guarded.calls} times for {expected_responder_calls} finalized turns"
        )
    patient_turns = sum(1 for e in session.record.entries if e.speaker != "Healthcare Provider")
    if len(session.record.entries) != 2 * patient_turns:
        violations.append("transcript entries are not exactly two per patient turn")

    metrics = collect_metrics(session.record)
    metrics_path = None
    if out_dir is not None:
        metrics_path = out_dir / "metrics.json"
        metrics_path.write_text(json.dumps(metrics.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        if sink is not None:
            sink.close()

    return SimulationResult(
        session=session,
        metrics=metrics,
        events=all_events,
        turn_wall_ms=turn_wall,
        violations=violations,
        transcript_path=transcript_path,
        metrics_path=metrics_path,
    )
