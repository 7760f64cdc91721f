"""FastAPI service hosting interview sessions over a WebSocket wire protocol.

Each connection gets one session. Incoming frames are funneled into a
per-session queue consumed by a single worker, so session events are handled
strictly in arrival order; sessions share nothing but the immutable pack.
The Speaking state is server-timed: after a patient_response the worker
schedules the Speaking->Idle edge once the play window elapses.
"""

from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import ValidationError

from .dialogue import EchoTranscriber
from .responder import LlmConfig, LlmResponder, ScriptedResponder
from .scenario import ScenarioPack, UnknownRoleError, UnknownSceneError, canonical_role
from .session import JsonlSink, Session, SessionConfig, SessionEvent
from .wire import (
    PAYLOAD_MODELS,
    Envelope,
    SceneSummary,
    SessionAckPayload,
    make_frame,
)

logger = logging.getLogger(__name__)

QUEUED_TYPES = ("gate_open", "audio_chunk", "gate_close", "text_input", "switch_scene")


def default_responder_factory(pack: ScenarioPack, session_ref: dict):
    """External endpoint when configured via environment, scripted otherwise."""
    config = LlmConfig.from_env()
    if config is None:
        return ScriptedResponder(pack)
    return LlmResponder(
        pack,
        config,
        exchange_log=lambda exchange: session_ref["session"].log_llm_exchange(exchange),
    )


def create_app(
    pack: ScenarioPack,
    *,
    data_dir: Optional[Path] = None,
    config: Optional[SessionConfig] = None,
    responder_factory=default_responder_factory,
    ui_dir: Optional[Path] = None,
) -> FastAPI:
    app = FastAPI(title="aims", version="0.1.0")
    app.state.pack = pack
    app.state.data_dir = Path(data_dir) if data_dir else None
    app.state.config = config or SessionConfig()
    app.state.responder_factory = responder_factory
    app.state.sessions = {}

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "scenario_version": pack.version, "scenes": len(pack.scenes)}

    @app.get("/scenario")
    def scenario() -> dict:
        return {
            "version": pack.version,
            "persona_name": pack.persona.name,
            "scenes": [
                {
                    "scene_id": s.id,
                    "title": s.title,
                    "trigger_rules": len(s.trigger_rules),
                    "intents": len(s.scripted_intents),
                }
                for s in pack.scenes
            ],
        }

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        session: Optional[Session] = None
        session_ref: dict = {}
        queue: asyncio.Queue = asyncio.Queue()
        worker: Optional[asyncio.Task] = None
        sink: Optional[JsonlSink] = None

        async def send(type_: str, data: dict) -> None:
            sid = session.session_id if session else None
            tid = session.state.turn_id if session else 0
            await ws.send_json(make_frame(type_, sid, tid, data))

        try:
            while True:
                try:
                    raw = await ws.receive_json()
                except json.JSONDecodeError:
                    await send("error", {"code": "bad_json", "message": "frame is not valid JSON"})
                    continue
                try:
                    env = Envelope.model_validate(raw)
                except ValidationError as exc:
                    await send("error", {"code": "bad_frame", "message": str(exc.errors()[0]["msg"])})
                    continue

                if env.type == "ping":
                    await send("pong", {})
                    continue

                if session is None:
                    if env.type != "hello":
                        await send("error", {"code": "protocol", "message": "say hello first"})
                        continue
                    try:
                        hello = PAYLOAD_MODELS["hello"].model_validate(env.payload)
                        role = canonical_role(hello.role)
                        scene = app.state.pack.scene(hello.scene_id) if hello.scene_id else app.state.pack.first_scene
                    except ValidationError as exc:
                        await send("error", {"code": "invalid_payload", "message": str(exc.errors()[0]["msg"])})
                        continue
                    except UnknownRoleError as exc:
                        await send("error", {"code": "invalid_role", "message": str(exc)})
                        continue
                    except UnknownSceneError as exc:
                        await send("error", {"code": "unknown_scene", "message": str(exc)})
                        continue
                    session = Session(
                        app.state.pack,
                        responder_factory(app.state.pack, session_ref),
                        scene_id=scene.id,
                        role=role,
                        transcriber=EchoTranscriber(),
                        config=app.state.config,
                    )
                    session_ref["session"] = session
                    if app.state.data_dir is not None:
                        sink = JsonlSink(app.state.data_dir / f"{session.session_id}.jsonl")
                        session._sink = sink
                        sink.write(session.record.header_line())
                    app.state.sessions[session.session_id] = session
                    worker = asyncio.create_task(_session_worker(ws, session, queue, app.state.config))
                    ack = SessionAckPayload(
                        session_id=session.session_id,
                        scene=SceneSummary(
                            scene_id=scene.id,
                            title=scene.title,
                            setting_description=scene.setting_description,
                            patient_pose=scene.patient_pose,
                        ),
                        persona_name=app.state.pack.persona.name,
                    )
                    await send("session_ack", ack.model_dump())
                    continue

                if env.type == "hello":
                    await send("error", {"code": "protocol", "message": "session already started"})
                    continue
                if env.type not in QUEUED_TYPES:
                    await send("error", {"code": "unknown_type", "message": f"unknown message type {env.type!r}"})
                    continue
                model = PAYLOAD_MODELS.get(env.type)
                if model is not None:
                    try:
                        model.model_validate(env.payload)
                    except ValidationError as exc:
                        await send("error", {"code": "invalid_payload", "message": str(exc.errors()[0]["msg"])})
                        continue
                await queue.put((env.type, env.payload, env.turn_id if env.type == "audio_chunk" else None))
        except WebSocketDisconnect:
            pass
        finally:
            if worker is not None:
                worker.cancel()
            if session is not None:
                app.state.sessions.pop(session.session_id, None)
            if sink is not None:
                sink.close()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # Mounted last so /ws, /healthz and /scenario keep precedence.
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


async def _session_worker(ws: WebSocket, session: Session, queue: asyncio.Queue, config: SessionConfig) -> None:
    loop = asyncio.get_running_loop()
    while True:
        msg_type, payload, turn_id = await queue.get()
        try:
            events = await asyncio.to_thread(session.handle, msg_type, payload, turn_id)
        except Exception as exc:  # never wedge the session on a handler bug
            logger.exception("session %s handler failed", session.session_id)
            events = [SessionEvent("error", {"code": "internal", "message": str(exc)})]
        for event in events:
            try:
                await ws.send_json(make_frame(event.type, session.session_id, session.state.turn_id, event.data))
            except RuntimeError:
                return  # connection already gone
            if event.type == "patient_response":
                delay_s = event.data["play_duration_ms"] / 1000.0 * config.speaking_scale
                loop.create_task(_finish_speaking(queue, delay_s))


async def _finish_speaking(queue: asyncio.Queue, delay_s: float) -> None:
    await asyncio.sleep(delay_s)
    await queue.put(("speaking_done", {}, None))
