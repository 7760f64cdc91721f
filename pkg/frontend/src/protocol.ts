// Wire protocol shared with the session server: one JSON object per frame,
// {type, session_id, turn_id, payload}. Field names are snake_case on the
// wire; these types mirror them verbatim.

export interface Frame {
  type: string;
  session_id: string | null;
  turn_id: number;
  payload: Record<string, unknown>;
}

export interface SceneSummary {
  scene_id: string;
  title: string;
  setting_description: string;
  patient_pose: string;
}

export interface SessionAckPayload {
  session_id: string;
  scene: SceneSummary;
  persona_name: string;
}

export interface StatePayload {
  turn_state: "idle" | "listening" | "finalizing" | "generating" | "speaking";
  turn_id: number;
  gate_open: boolean;
}

export interface TranscriptPayload {
  speaker: string;
  text: string;
  role?: string | null;
}

export interface PatientResponsePayload {
  text: string;
  clip_id: string;
  expression: string;
  start_offset_ms: number;
  play_duration_ms: number;
  audio_duration_ms: number;
  loop_count: number;
}

export interface InputDiscardedPayload {
  reason: string;
}

export interface SceneChangedPayload {
  scene_id: string;
  title: string;
  setting_description: string;
  patient_pose: string;
}

export interface ErrorPayload {
  code: string;
  message: string;
}

export function makeFrame(
  type: string,
  payload: Record<string, unknown> = {},
  sessionId: string | null = null,
  turnId = 0,
): Frame {
  return { type, session_id: sessionId, turn_id: turnId, payload };
}

export function parseFrame(data: string): Frame | null {
  try {
    const raw = JSON.parse(data) as Partial<Frame>;
    if (typeof raw.type !== "string") return null;
    return {
      type: raw.type,
      session_id: raw.session_id ?? null,
      turn_id: typeof raw.turn_id === "number" ? raw.turn_id : 0,
      payload: (raw.payload ?? {}) as Record<string, unknown>,
    };
  } catch {
    return null;
  }
}
