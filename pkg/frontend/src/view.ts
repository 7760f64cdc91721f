// Client-side session state: a mirror of the server's turn machine plus the
// transcript panel and the avatar display state. Pure data + frame handling,
// no DOM — the app layer subscribes and renders.

import type {
  Frame,
  InputDiscardedPayload,
  PatientResponsePayload,
  SceneChangedPayload,
  SessionAckPayload,
  StatePayload,
  TranscriptPayload,
  ErrorPayload,
} from "./protocol.js";

export type TurnPhase = "idle" | "listening" | "finalizing" | "generating" | "speaking";
export type ConnectionState = "disconnected" | "connecting" | "connected";
export type InputMode = "voice" | "text";

export interface TranscriptLine {
  speaker: string;
  text: string;
  role?: string;
}

export interface SceneDescriptor {
  sceneId: string;
  title: string;
  settingDescription: string;
  patientPose: string;
}

export interface AvatarState {
  expression: string;
  clipLabel: string;
  speaking: boolean;
}

// Injectable timer so tests control the speaking window to the millisecond.
export interface Scheduler {
  set(fn: () => void, ms: number): number;
  clear(id: number): void;
}

const realScheduler: Scheduler = {
  set: (fn, ms) => setTimeout(fn, ms) as unknown as number,
  clear: (id) => clearTimeout(id as unknown as ReturnType<typeof setTimeout>),
};

// Expression tags the 2D avatar can pose; anything else degrades to neutral.
export const KNOWN_EXPRESSIONS = new Set([
  "neutral",
  "smiling",
  "embarrassed",
  "confused",
  "reluctant",
  "ashamed",
]);

const IDLE_AVATAR: AvatarState = { expression: "neutral", clipLabel: "idle", speaking: false };

export class ClientView {
  connection: ConnectionState = "disconnected";
  sessionId: string | null = null;
  personaName = "";
  scene: SceneDescriptor | null = null;
  turnState: TurnPhase = "idle";
  gateOpen = false;
  turnId = 0;
  transcript: TranscriptLine[] = [];
  avatar: AvatarState = { ...IDLE_AVATAR };
  inputMode: InputMode = "text";
  notice = "";

  private speakingTimer: number | null = null;
  private listeners: Array<() => void> = [];

  constructor(private scheduler: Scheduler = realScheduler) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  // True when pressing the talk key may open the gate.
  get canTalk(): boolean {
    return this.connection === "connected" && (this.turnState === "idle" || this.turnState === "listening");
  }

  get patientBusy(): boolean {
    return this.turnState === "speaking" || this.turnState === "generating" || this.turnState === "finalizing";
  }

  applyFrame(frame: Frame): void {
    switch (frame.type) {
      case "session_ack": {
        const p = frame.payload as unknown as SessionAckPayload;
        this.connection = "connected";
        this.sessionId = p.session_id;
        this.personaName = p.persona_name;
        this.scene = {
          sceneId: p.scene.scene_id,
          title: p.scene.title,
          settingDescription: p.scene.setting_description,
          patientPose: p.scene.patient_pose,
        };
        break;
      }
      case "state": {
        const p = frame.payload as unknown as StatePayload;
        this.turnState = p.turn_state;
        this.gateOpen = p.gate_open;
        this.turnId = p.turn_id;
        break;
      }
      case "transcript": {
        const p = frame.payload as unknown as TranscriptPayload;
        // Rendering order is exactly server emission order.
        this.transcript.push({ speaker: p.speaker, text: p.text, role: p.role ?? undefined });
        break;
      }
      case "patient_response": {
        this.renderResponse(frame.payload as unknown as PatientResponsePayload);
        break;
      }
      case "input_discarded": {
        const p = frame.payload as unknown as InputDiscardedPayload;
        this.notice =
          p.reason === "patient_speaking"
            ? `${this.personaName || "The patient"} is speaking — wait for her to finish.`
            : `Input discarded (${p.reason}).`;
        break;
      }
      case "scene_changed": {
        const p = frame.payload as unknown as SceneChangedPayload;
        this.scene = {
          sceneId: p.scene_id,
          title: p.title,
          settingDescription: p.setting_description,
          patientPose: p.patient_pose,
        };
        break;
      }
      case "error": {
        const p = frame.payload as unknown as ErrorPayload;
        this.notice = `Error (${p.code}): ${p.message}`;
        break;
      }
      case "pong":
        break;
      default:
        console.warn("unknown server frame type", frame.type);
    }
    this.emit();
  }

  // The avatar speaks for exactly play_duration_ms, then returns to idle.
  private renderResponse(p: PatientResponsePayload): void {
    let expression = p.expression;
    if (!KNOWN_EXPRESSIONS.has(expression)) {
      console.warn(`unknown clip/expression ${p.clip_id}/${p.expression}; rendering neutral`);
      expression = "neutral";
    }
    if (this.speakingTimer !== null) {
      this.scheduler.clear(this.speakingTimer);
    }
    this.avatar = { expression, clipLabel: p.clip_id, speaking: true };
    this.speakingTimer = this.scheduler.set(() => {
      this.avatar = { ...IDLE_AVATAR };
      this.speakingTimer = null;
      this.emit();
    }, p.play_duration_ms);
  }

  clearNotice(): void {
    this.notice = "";
    this.emit();
  }

  markDisconnected(): void {
    this.connection = "disconnected";
    this.turnState = "idle";
    this.gateOpen = false;
    this.emit();
  }
}
