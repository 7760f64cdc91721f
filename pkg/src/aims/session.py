"""Session core: one patient interview, event by event.

A Session owns the turn-taking state machine, the disclosure counters, the
conversation history, and the append-only record. All mutation goes through
the handler methods, which a driver (the websocket server, the headless
simulator, tests) calls strictly in arrival order; every handler returns the
events the driver should deliver to the client.
"""

from __future__ import annotations

import base64
import binascii
import json
import statistics
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import dialogue
from .dialogue import (
    IllegalTransition,
    Phase,
    TurnState,
    UtteranceBuffer,
    suppress_repetition,
)
from .responder import USER_SPEAKER, Reply, ResponderContext, ResponderError, record_ask
from .scenario import ScenarioPack, SceneSpec, canonical_role
from .timeline import (
    DEFAULT_SPEECH_RATE_WPM,
    DESYNC_TOLERANCE_MS,
    estimate_audio_duration,
    measure_desync,
    plan_playback,
    trim_lead_in,
)
from .triggers import detect_input_triggers, detect_output_negation, select_animation


def _utc_now_ms() -> int:
    return int(time.time() * 1000)


@dataclass
class SessionConfig:
    desync_tolerance_ms: int = DESYNC_TOLERANCE_MS
    repetition_threshold: float = dialogue.REPETITION_THRESHOLD
    repetition_window: int = dialogue.REPETITION_WINDOW
    speech_rate_wpm: float = DEFAULT_SPEECH_RATE_WPM
    cooldown_ms: int = dialogue.POST_GATE_COOLDOWN_MS
    # None = use the responder's own default (1 s scripted, 15 s external).
    turn_budget_ms: Optional[int] = None
    # Scales the server's speaking timer only; plans are never scaled.
    speaking_scale: float = 1.0


@dataclass(frozen=True)
class SessionEvent:
    type: str
    data: dict


@dataclass
class TranscriptEntry:
    timestamp_ms: int
    speaker: str
    text: str
    turn_id: int
    role: Optional[str] = None
    trigger_rule_id: Optional[str] = None
    clip_id: Optional[str] = None
    latency_ms: Optional[int] = None
    desync_ms: Optional[int] = None

    def to_line(self) -> dict:
        return {
            "kind": "entry",
            "timestamp_ms": self.timestamp_ms,
            "turn_id": self.turn_id,
            "speaker": self.speaker,
            "role": self.role,
            "text": self.text,
            "trigger_rule_id": self.trigger_rule_id,
            "clip_id": self.clip_id,
            "latency_ms": self.latency_ms,
            "desync_ms": self.desync_ms,
        }

    @classmethod
    def from_line(cls, line: dict) -> "TranscriptEntry":
        return cls(
            timestamp_ms=int(line["timestamp_ms"]),
            turn_id=int(line["turn_id"]),
            speaker=str(line["speaker"]),
            role=line.get("role"),
            text=str(line["text"]),
            trigger_rule_id=line.get("trigger_rule_id"),
            clip_id=line.get("clip_id"),
            latency_ms=line.get("latency_ms"),
            desync_ms=line.get("desync_ms"),
        )


@dataclass
class SessionRecord:
    """Append-only interaction log; the journal is exactly what gets persisted."""

    session_id: str
    scenario_version: str
    seed: int
    created_ms: int = 0
    scene_history: list[str] = field(default_factory=list)
    entries: list[TranscriptEntry] = field(default_factory=list)
    discarded_inputs: dict[str, int] = field(default_factory=dict)
    repetition_incidents: int = 0
    fallback_uses: int = 0
    llm_exchanges: list[dict] = field(default_factory=list)
    journal: list[dict] = field(default_factory=list)

    def header_line(self) -> dict:
        return {
            "kind": "header",
            "session_id": self.session_id,
            "scenario_version": self.scenario_version,
            "seed": self.seed,
            "created_ms": self.created_ms,
            "scene": self.scene_history[0] if self.scene_history else None,
        }


class RecordError(ValueError):
    pass


class JsonlSink:
    """Append-only line store, flushed per write so a crash loses at most the
    in-flight turn."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")

    def write(self, line: dict) -> None:
        self._fh.write(json.dumps(line, ensure_ascii=False, separators=(",", ":")) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def persist_session(record: SessionRecord, sink: JsonlSink | Path | str) -> Path:
    """Write the whole journal to an append-only store and return its location."""
    own = not isinstance(sink, JsonlSink)
    store = JsonlSink(sink) if own else sink
    try:
        store.write(record.header_line())
        for line in record.journal:
            store.write(line)
    finally:
        if own:
            store.close()
    return store.path


def load_record(path: Path | str) -> SessionRecord:
    """Rebuild a record from its journal file.

    A truncated final line (the crash case) is tolerated; a corrupt line
    anywhere else raises RecordError naming it.
    """
    path = Path(path)
    raw_lines = path.read_text(encoding="utf-8").split("\n")
    # Drop trailing empty fragments from the final newline.
    while raw_lines and raw_lines[-1] == "":
        raw_lines.pop()
    record: Optional[SessionRecord] = None
    for lineno, raw in enumerate(raw_lines, start=1):
        last = lineno == len(raw_lines)
        try:
            line = json.loads(raw)
            if not isinstance(line, dict) or "kind" not in line:
                raise ValueError("not a record line")
        except ValueError as exc:
            if last:
                break  # in-flight write lost to a crash
            raise RecordError(f"{path}: line {lineno}: {exc}") from exc
        kind = line["kind"]
        if kind == "header":
            record = SessionRecord(
                session_id=str(line["session_id"]),
                scenario_version=str(line["scenario_version"]),
                seed=int(line["seed"]),
                created_ms=int(line.get("created_ms", 0)),
                scene_history=[line["scene"]] if line.get("scene") else [],
            )
            continue
        if record is None:
            raise RecordError(f"{path}: line {lineno}: record line before header")
        record.journal.append(line)
        if kind == "entry":
            record.entries.append(TranscriptEntry.from_line(line))
        elif kind == "event":
            name = line.get("event")
            if name == "input_discarded":
                reason = str(line.get("reason"))
                record.discarded_inputs[reason] = record.discarded_inputs.get(reason, 0) + 1
            elif name == "repetition_incident":
                record.repetition_incidents += 1
            elif name == "intent_fallback":
                record.fallback_uses += 1
            elif name == "scene_changed":
                record.scene_history.append(str(line.get("scene_id")))
            elif name == "llm_exchange":
                record.llm_exchanges.append(line)
        else:
            raise RecordError(f"{path}: line {lineno}: unknown line kind {kind!r}")
    if record is None:
        raise RecordError(f"{path}: no header line")
    return record


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _percentile(values: list[int], q: float) -> int:
    if not values:
        return 0
    ordered = sorted(values)
    idx = max(0, min(len(ordered) - 1, int(-(-q * len(ordered) // 1)) - 1))
    return ordered[idx]


@dataclass
class MetricsReport:
    turns: int
    per_turn: list[dict]
    latency_ms: dict
    desync_ms: dict
    discarded_inputs: dict[str, int]
    repetition_incidents: int
    fallback_uses: int
    annotations: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "turns": self.turns,
            "per_turn": self.per_turn,
            "latency_ms": self.latency_ms,
            "desync_ms": self.desync_ms,
            "discarded_inputs": self.discarded_inputs,
            "repetition_incidents": self.repetition_incidents,
            "fallback_uses": self.fallback_uses,
            "annotations": self.annotations,
        }


def collect_metrics(record: SessionRecord, annotations: Optional[dict[str, int]] = None) -> MetricsReport:
    """Derive the per-session report purely from the record, so replaying a
    stored record reproduces it exactly."""
    patient = [e for e in record.entries if e.speaker != USER_SPEAKER]
    per_turn = [
        {"turn_id": e.turn_id, "latency_ms": e.latency_ms, "desync_ms": e.desync_ms}
        for e in patient
    ]
    latencies = [e.latency_ms for e in patient if e.latency_ms is not None]
    desyncs = [e.desync_ms for e in patient if e.desync_ms is not None]
    return MetricsReport(
        turns=len(patient),
        per_turn=per_turn,
        latency_ms={
            "max": max(latencies) if latencies else 0,
            "mean": statistics.fmean(latencies) if latencies else 0.0,
            "p95": _percentile(latencies, 0.95),
        },
        desync_ms={
            "max": max(desyncs) if desyncs else 0,
            "mean": statistics.fmean(desyncs) if desyncs else 0.0,
        },
        discarded_inputs=dict(record.discarded_inputs),
        repetition_incidents=record.repetition_incidents,
        fallback_uses=record.fallback_uses,
        annotations=dict(annotations or {}),
    )


# ---------------------------------------------------------------------------
# The session itself
# ---------------------------------------------------------------------------


class Session:
    """One interview. Drivers must call handlers in arrival order; sessions
    share nothing but the immutable pack."""

    def __init__(
        self,
        pack: ScenarioPack,
        responder,
        *,
        scene_id: Optional[str] = None,
        role: str = "physician",
        transcriber=None,
        seed: int = 0,
        session_id: Optional[str] = None,
        clock: Optional[Callable[[], int]] = None,
        sink: Optional[JsonlSink] = None,
        config: Optional[SessionConfig] = None,
        audio_duration_provider: Optional[Callable[[str], int]] = None,
    ):
        self.pack = pack
        self.responder = responder
        self.transcriber = transcriber or dialogue.EchoTranscriber()
        self.seed = seed
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.clock = clock or _utc_now_ms
        self.config = config or SessionConfig()
        self.audio_duration_provider = audio_duration_provider
        self.role = canonical_role(role)

        self.scene: SceneSpec = pack.scene(scene_id) if scene_id else pack.first_scene
        self.state = TurnState()
        self.buffer: Optional[UtteranceBuffer] = None
        self.history: list[tuple[str, str]] = []
        self.disclosure_counters: dict[str, int] = {}
        self._patient_replies: list[str] = []
        self._repetition_fallback_uses = 0
        self._gate_close_ms: Optional[int] = None
        self._speaking_until_ms: Optional[int] = None
        self._last_ts = 0
        self.last_turn_wall_ms: Optional[float] = None
        self.last_plan = None

        # Clips are trimmed up front so every plan meets the sync bound even
        # if the pack still ships lead-in frames (the validator warns).
        self._clips = {c.id: trim_lead_in(c) for c in pack.clips}

        self.record = SessionRecord(
            session_id=self.session_id,
            scenario_version=pack.version,
            seed=seed,
            created_ms=self._now(),
            scene_history=[self.scene.id],
        )
        self._sink = sink
        self._sink_failed = False
        if self._sink is not None:
            self._write_line(self.record.header_line())

    # -- plumbing ----------------------------------------------------------

    def _now(self) -> int:
        now = int(self.clock())
        self._last_ts = max(self._last_ts, now)  # transcript timestamps never go backward
        return self._last_ts

    def _write_line(self, line: dict) -> Optional[SessionEvent]:
        if self._sink is None or self._sink_failed:
            return None
        try:
            self._sink.write(line)
            return None
        except OSError as exc:
            self._sink_failed = True
            return SessionEvent("error", {"code": "storage", "message": f"record store failed: {exc}"})

    def _journal(self, line: dict, events: list[SessionEvent]) -> None:
        self.record.journal.append(line)
        err = self._write_line(line)
        if err is not None:
            events.append(err)

    def _transition(self, phase: Phase, events: list[SessionEvent]) -> None:
        dialogue.transition(self.state, phase)
        events.append(
            SessionEvent(
                "state",
                {
                    "turn_state": self.state.phase.value,
                    "turn_id": self.state.turn_id,
                    "gate_open": self.state.gate_open,
                },
            )
        )

    def _discard(self, reason: str, events: list[SessionEvent]) -> None:
        self.record.discarded_inputs[reason] = self.record.discarded_inputs.get(reason, 0) + 1
        self._journal({"kind": "event", "event": "input_discarded", "reason": reason, "timestamp_ms": self._now()}, events)
        events.append(SessionEvent("input_discarded", {"reason": reason}))

    def log_llm_exchange(self, exchange: dict) -> None:
        """Hook for the external responder; secrets were elided upstream."""
        line = {"kind": "event", "event": "llm_exchange", "timestamp_ms": self._now(), **exchange}
        self.record.llm_exchanges.append(line)
        self.record.journal.append(line)
        self._write_line(line)

    # -- client-driven handlers --------------------------------------------

    def handle(self, msg_type: str, payload: Optional[dict] = None, turn_id: Optional[int] = None) -> list[SessionEvent]:
        """Wire-facing dispatch; the simulator and the server share it."""
        payload = payload or {}
        if msg_type == "gate_open":
            return self.gate_open()
        if msg_type == "audio_chunk":
            try:
                data = base64.b64decode(payload.get("b64", ""), validate=True)
            except (binascii.Error, ValueError):
                return [SessionEvent("error", {"code": "invalid_payload", "message": "audio_chunk.b64 is not base64"})]
            return self.audio_chunk(data, turn_id=turn_id)
        if msg_type == "gate_close":
            return self.gate_close()
        if msg_type == "text_input":
            return self.text_input(str(payload.get("text", "")))
        if msg_type == "switch_scene":
            return self.switch_scene(str(payload.get("scene_id", "")))
        if msg_type == "speaking_done":
            return self.speaking_done()
        raise ValueError(f"unroutable message type {msg_type!r}")

    def gate_open(self) -> list[SessionEvent]:
        events: list[SessionEvent] = []
        verdict = dialogue.classify_gate_open(self.state)
        if verdict == "hold":
            return events
        if verdict is not None:
            self._discard(verdict, events)
            return events
        self.state.turn_id += 1
        self.buffer = UtteranceBuffer(turn_id=self.state.turn_id, source="voice")
        self._transition(Phase.LISTENING, events)
        return events

    def audio_chunk(self, data: bytes, *, turn_id: Optional[int] = None) -> list[SessionEvent]:
        events: list[SessionEvent] = []
        reason = dialogue.classify_chunk(self.state, turn_id)
        if reason is not None:
            self._discard(reason, events)
            return events
        assert self.buffer is not None
        self.buffer.chunks.append(data)
        return events

    def gate_close(self) -> list[SessionEvent]:
        events: list[SessionEvent] = []
        if self.state.phase is not Phase.LISTENING:
            events.append(SessionEvent("error", {"code": "bad_state", "message": "gate is not open"}))
            return events
        self._gate_close_ms = self._now()
        assert self.buffer is not None
        try:
            text = self.transcriber.transcribe(self.buffer.chunks)
        except Exception as exc:
            self._transition(Phase.IDLE, events)
            events.append(SessionEvent("error", {"code": "transcriber", "message": str(exc)}))
            return events
        text = text.strip()
        if not text:
            self._transition(Phase.IDLE, events)
            return events
        self.buffer.finalized_text = text
        self._transition(Phase.FINALIZING, events)
        self._transition(Phase.GENERATING, events)
        events.extend(self.run_turn(text))
        return events

    def text_input(self, text: str) -> list[SessionEvent]:
        events: list[SessionEvent] = []
        if self.state.phase is not Phase.IDLE:
            self._discard(dialogue.REJECT_PATIENT_SPEAKING, events)
            return events
        self.state.turn_id += 1
        self.buffer = UtteranceBuffer(turn_id=self.state.turn_id, source="text")
        self._transition(Phase.LISTENING, events)
        self._gate_close_ms = self._now()
        stripped = text.strip()
        if not stripped:
            self._transition(Phase.IDLE, events)
            return events
        self.buffer.finalized_text = stripped
        self._transition(Phase.FINALIZING, events)
        self._transition(Phase.GENERATING, events)
        events.extend(self.run_turn(stripped))
        return events

    def switch_scene(self, scene_id: str) -> list[SessionEvent]:
        events: list[SessionEvent] = []
        if self.state.phase is not Phase.IDLE:
            events.append(SessionEvent("error", {"code": "busy_session", "message": "scene changes only between turns"}))
            return events
        try:
            scene = self.pack.scene(scene_id)
        except Exception:
            events.append(SessionEvent("error", {"code": "unknown_scene", "message": f"no scene {scene_id!r}"}))
            return events
        # History and disclosure counters persist: the patient remembers.
        if scene.id != self.scene.id:
            self.scene = scene
            self.record.scene_history.append(scene.id)
            self._journal(
                {"kind": "event", "event": "scene_changed", "scene_id": scene.id, "timestamp_ms": self._now()},
                events,
            )
        events.append(
            SessionEvent(
                "scene_changed",
                {
                    "scene_id": scene.id,
                    "title": scene.title,
                    "setting_description": scene.setting_description,
                    "patient_pose": scene.patient_pose,
                },
            )
        )
        return events

    def speaking_done(self) -> list[SessionEvent]:
        events: list[SessionEvent] = []
        if self.state.phase is not Phase.SPEAKING:
            return events
        self._speaking_until_ms = None
        self._transition(Phase.IDLE, events)
        return events

    def set_role(self, role: str) -> None:
        self.role = canonical_role(role)

    # -- the turn pipeline ---------------------------------------------------

    def run_turn(self, finalized_utterance: str) -> list[SessionEvent]:
        """record_ask -> responder -> repetition gate -> triggers -> plan.

        Emits exactly one patient_response (or one error) per finalized turn
        and never leaves the session outside Idle/Speaking.
        """
        if self.state.phase is not Phase.GENERATING:
            raise IllegalTransition(f"run_turn requires generating, not {self.state.phase.value}")
        events: list[SessionEvent] = []
        wall_start = time.perf_counter()

        user_entry = TranscriptEntry(
            timestamp_ms=self._gate_close_ms if self._gate_close_ms is not None else self._now(),
            speaker=USER_SPEAKER,
            text=finalized_utterance,
            turn_id=self.state.turn_id,
            role=self.role,
        )
        self.record.entries.append(user_entry)
        self._journal(user_entry.to_line(), events)
        events.append(SessionEvent("transcript", {"speaker": user_entry.speaker, "text": user_entry.text, "role": self.role}))

        asked_now = record_ask(self.disclosure_counters, finalized_utterance, self.pack.disclosure_rules)
        # The responder gates on asks *before* this utterance.
        snapshot = dict(self.disclosure_counters)
        for rule_id in asked_now:
            snapshot[rule_id] -= 1
        ctx = ResponderContext(
            scene_id=self.scene.id,
            active_role=self.role,
            history=list(self.history),
            disclosure_counters=snapshot,
            seed=self.seed,
        )

        budget_ms = self.config.turn_budget_ms
        if budget_ms is None:
            budget_ms = getattr(self.responder, "default_budget_ms", 15000)
        try:
            reply: Reply = self.responder.respond(ctx, finalized_utterance)
        except ResponderError as exc:
            self._transition(Phase.IDLE, events)
            events.append(SessionEvent("error", {"code": "responder", "message": str(exc)}))
            return events
        if (time.perf_counter() - wall_start) * 1000.0 > budget_ms:
            self._transition(Phase.IDLE, events)
            events.append(
                SessionEvent("error", {"code": "turn_budget", "message": f"responder exceeded {budget_ms} ms"})
            )
            return events

        if reply.used_fallback_line:
            self.record.fallback_uses += 1
            self._journal({"kind": "event", "event": "intent_fallback", "timestamp_ms": self._now()}, events)

        suppression = suppress_repetition(
            reply.text,
            self._patient_replies,
            lambda directive: self.responder.regenerate(ctx, finalized_utterance, directive).text,
            fallback_lines=self.scene.repetition_fallbacks or dialogue.DEFAULT_REPETITION_FALLBACKS,
            fallback_uses=self._repetition_fallback_uses,
            threshold=self.config.repetition_threshold,
            k=self.config.repetition_window,
        )
        final_text = suppression.text
        if suppression.engaged:
            self.record.repetition_incidents += 1
            self._journal(
                {
                    "kind": "event",
                    "event": "repetition_incident",
                    "timestamp_ms": self._now(),
                    "final_score": round(suppression.final_score, 4),
                    "used_fallback": suppression.used_fallback,
                },
                events,
            )
        if suppression.used_fallback:
            self._repetition_fallback_uses += 1

        matches = detect_input_triggers(finalized_utterance, self.scene)
        negation = detect_output_negation(final_text, self.pack.negation_tokens)
        choice = select_animation(matches, negation, self.scene, self.pack)

        if self.audio_duration_provider is not None:
            audio_ms = int(self.audio_duration_provider(final_text))
        else:
            audio_ms = estimate_audio_duration(final_text, self.config.speech_rate_wpm)
        plan = plan_playback(self._clips[choice.clip_id], audio_ms)
        desync = measure_desync(plan, audio_ms)
        self.last_plan = plan

        now = self._now()
        latency = None if self._gate_close_ms is None else now - self._gate_close_ms
        patient_entry = TranscriptEntry(
            timestamp_ms=now,
            speaker=self.pack.persona.name,
            text=final_text,
            turn_id=self.state.turn_id,
            trigger_rule_id=choice.rule_id,
            clip_id=choice.clip_id,
            latency_ms=latency,
            desync_ms=desync,
        )
        self.record.entries.append(patient_entry)
        self._journal(patient_entry.to_line(), events)

        self.history.append((USER_SPEAKER, finalized_utterance))
        self.history.append((self.pack.persona.name, final_text))
        self._patient_replies.append(final_text)

        events.append(SessionEvent("transcript", {"speaker": patient_entry.speaker, "text": final_text}))
        events.append(
            SessionEvent(
                "patient_response",
                {
                    "text": final_text,
                    "clip_id": choice.clip_id,
                    "expression": choice.expression_tag,
                    "start_offset_ms": plan.start_offset_ms,
                    "play_duration_ms": plan.play_duration_ms,
                    "audio_duration_ms": audio_ms,
                    "loop_count": plan.loop_count,
                },
            )
        )
        self._transition(Phase.SPEAKING, events)
        self._speaking_until_ms = now + plan.play_duration_ms
        self.last_turn_wall_ms = (time.perf_counter() - wall_start) * 1000.0
        return events
