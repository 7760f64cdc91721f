"""Wire protocol models.

Every frame is one JSON object: {type, session_id, turn_id, payload}. The
server stamps session_id and a non-decreasing turn_id on everything it sends.
Unknown client types get an error {code: "unknown_type"} without closing the
connection.
"""

from __future__ import annotations

import base64
from typing import Optional

from pydantic import BaseModel, Field, field_validator

MAX_AUDIO_CHUNK_BYTES = 32 * 1024

CLIENT_TYPES = ("hello", "gate_open", "audio_chunk", "gate_close", "text_input", "switch_scene", "ping")
SERVER_TYPES = (
    "session_ack",
    "state",
    "transcript",
    "patient_response",
    "input_discarded",
    "scene_changed",
    "error",
    "pong",
)


class Envelope(BaseModel):
    type: str
    session_id: Optional[str] = None
    turn_id: int = 0
    payload: dict = Field(default_factory=dict)


class HelloPayload(BaseModel):
    role: str
    scene_id: Optional[str] = None
    display_name: Optional[str] = None


class AudioChunkPayload(BaseModel):
    seq: int = 0
    b64: str

    @field_validator("b64")
    @classmethod
    def _bounded_audio(cls, value: str) -> str:
        try:
            raw = base64.b64decode(value, validate=True)
        except Exception as exc:
            raise ValueError("b64 is not valid base64") from exc
        if len(raw) > MAX_AUDIO_CHUNK_BYTES:
            raise ValueError(f"audio chunk exceeds {MAX_AUDIO_CHUNK_BYTES} bytes")
        return value


class TextInputPayload(BaseModel):
    text: str


class SwitchScenePayload(BaseModel):
    scene_id: str


class SceneSummary(BaseModel):
    scene_id: str
    title: str
    setting_description: str = ""
    patient_pose: str = ""


class SessionAckPayload(BaseModel):
    session_id: str
    scene: SceneSummary
    persona_name: str


class StatePayload(BaseModel):
    turn_state: str
    turn_id: int
    gate_open: bool


class TranscriptPayload(BaseModel):
    speaker: str
    text: str
    role: Optional[str] = None


class PatientResponsePayload(BaseModel):
    text: str
    clip_id: str
    expression: str
    start_offset_ms: int
    play_duration_ms: int
    audio_duration_ms: int
    loop_count: int


class InputDiscardedPayload(BaseModel):
    reason: str


class SceneChangedPayload(BaseModel):
    scene_id: str
    title: str = ""
    setting_description: str = ""
    patient_pose: str = ""


class ErrorPayload(BaseModel):
    code: str
    message: str


PAYLOAD_MODELS = {
    "hello": HelloPayload,
    "audio_chunk": AudioChunkPayload,
    "text_input": TextInputPayload,
    "switch_scene": SwitchScenePayload,
}


def make_frame(type_: str, session_id: Optional[str], turn_id: int, payload: dict) -> dict:
    return Envelope(type=type_, session_id=session_id, turn_id=turn_id, payload=payload).model_dump()
